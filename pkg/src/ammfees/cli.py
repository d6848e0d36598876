"""Command-line entry point.

Subcommands: solve, simulate, table, figure-data, verify, list.
Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance-tolerance failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .experiments import (
    FIGURE_IDS,
    build_manifest,
    catalog_names,
    resolve_config,
    write_manifest,
)
from .simulate import ConfigurationError
from .solver import SolverError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4


def _add_common(parser):
    parser.add_argument("--config", required=False,
                        help="catalog experiment name or path to a config JSON")
    parser.add_argument("--out-dir", default=None,
                        help="output directory (default: $AMMFEES_OUT_DIR or ./out)")
    parser.add_argument("--paths", type=int, default=None, help="override n_paths")
    parser.add_argument("--seed", type=int, default=None, help="override seed")
    parser.add_argument("--dt", type=float, default=None, help="override simulation step")
    parser.add_argument("--threads", type=int, default=1,
                        help="reserved; results never depend on it")


def _out_dir(args) -> str:
    out = args.out_dir or os.environ.get("AMMFEES_OUT_DIR", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args):
    if not args.config:
        raise ConfigurationError("--config is required for this subcommand")
    cfg = resolve_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.paths is not None:
        cfg = replace(cfg, n_paths=args.paths)
    if args.dt is not None:
        cfg = replace(cfg, overrides={**cfg.overrides, "dt": args.dt})
    return cfg


def cmd_list(args) -> int:
    print("experiments:")
    for name in catalog_names():
        print(f"  {name}")
    print("figure ids:")
    for fid in FIGURE_IDS:
        print(f"  {fid}")
    return 0


def cmd_solve(args) -> int:
    from .runner import run_solve

    cfg = _load_config(args)
    manifest = run_solve(cfg, _out_dir(args))
    print(f"surfaces written under {os.path.join(_out_dir(args), 'surfaces', cfg.name)} "
          f"(manifest {manifest['manifest_hash']})")
    return 0


def cmd_simulate(args) -> int:
    from .experiments import build_market
    from .runner import solve_policies, simulate_policy, write_csv

    cfg = _load_config(args)
    out = _out_dir(args)
    manifest = build_manifest(cfg, {"command": "simulate"})
    rows = []
    log_rows = []
    for lam in cfg.lambdas:
        market = build_market(cfg, lam)
        policies = solve_policies(market, cfg)
        for kind in cfg.policies:
            result = simulate_policy(market, policies[kind], cfg,
                                     collect_log=args.trade_log)
            for stat in ("fees", "n_buy", "n_sell", "vol_x", "vol_y", "boundary_steps"):
                mean = result.mean(stat)
                se = result.stderr(stat)
                for v in range(market.n_venues):
                    rows.append([lam, v, kind, stat, float(mean[v]), float(se[v])])
            if args.trade_log and result.log is not None:
                log = result.log
                for i in range(len(log)):
                    log_rows.append([lam, kind, int(log.path[i]), float(log.time[i]),
                                     int(log.venue[i]), int(log.side[i]),
                                     float(log.size[i]), float(log.exec_rate[i]),
                                     float(log.mid_rate[i]), float(log.fee_cash[i])])
    path = os.path.join(out, f"{cfg.name}_aggregates.csv")
    write_csv(path, ["lambda", "venue", "policy", "stat", "mean", "stderr"], rows, manifest)
    print(f"wrote {path}")
    if args.trade_log:
        lpath = os.path.join(out, f"{cfg.name}_trades.csv")
        write_csv(lpath, ["lambda", "policy", "path", "time", "venue", "side",
                          "size", "exec_rate", "mid_rate", "fee_cash"], log_rows, manifest)
        print(f"wrote {lpath}")
    write_manifest(manifest, os.path.join(out, f"{cfg.name}_manifest.json"))
    return 0


def cmd_table(args) -> int:
    from .runner import run_table

    cfg = _load_config(args)
    out = _out_dir(args)
    table = run_table(cfg, n_paths=args.paths, out_dir=out)
    print(f"wrote {os.path.join(out, cfg.name + '.csv')}")
    cols, flat = table.to_rows()
    widths = [max(len(str(c)), 10) for c in cols[:3]]
    for row in flat:
        head = "  ".join(str(v).ljust(w) for v, w in zip(row[:3], widths))
        stats = "  ".join(f"{float(v):10.3f}" for v in row[3::2])
        print(f"  {head}  {stats}")
    return 0


def cmd_figure_data(args) -> int:
    from .runner import run_figure_data

    cfg = _load_config(args)
    out = _out_dir(args)
    paths = run_figure_data(args.figure, cfg, out, n_paths=args.paths)
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_verify(args) -> int:
    from .acceptance import run_all

    results = run_all(mode="full" if args.full else "desk")
    return 0 if all(r.passed for r in results) else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ammfees",
        description="Equilibrium trading-fee solver and simulator for competing pools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list", help="list catalog experiments and figure ids")
    p.set_defaults(fn=cmd_list)

    p = sub.add_parser("solve", help="solve fee surfaces and persist CSV slices")
    _add_common(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("simulate", help="simulate policies and write aggregates")
    _add_common(p)
    p.add_argument("--trade-log", action="store_true", help="also dump per-trade CSV")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("table", help="reproduce a results table")
    _add_common(p)
    p.set_defaults(fn=cmd_table)

    p = sub.add_parser("figure-data", help="emit the CSV behind one figure id")
    _add_common(p)
    p.add_argument("--figure", required=True,
                   help="figure id (see 'ammfees list')")
    p.set_defaults(fn=cmd_figure_data)

    p = sub.add_parser("verify", help="run the acceptance suite headlessly")
    p.add_argument("--full", action="store_true",
                   help="full-scale path counts and tolerances (slower)")
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
