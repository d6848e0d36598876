"""Experiment orchestration: solve, simulate, tabulate, emit figure data.

Every artifact is a CSV with '#'-prefixed manifest comment lines carrying
the run's manifest hash, so identical configs reproduce byte-identical
files.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .experiments import (
    ExperimentConfig,
    MarketSetup,
    build_manifest,
    build_market,
    manifest_comment_lines,
    write_manifest,
    FIGURE_IDS,
)
from .metrics import avg_slippage, strategic_execution
from .policies import (
    EquilibriumPolicy,
    constant_policy,
    export_policy,
    fit_linear_policy,
    solve_equilibrium_policy,
    zero_policy,
)
from .simulate import ConfigurationError, SimConfig, SimResult, run_batch

TABLE_STATS = ("fees", "n_sell", "n_buy", "vol_x")
_STAT_LABEL = {"fees": "fees", "n_sell": "sell", "n_buy": "buy", "vol_x": "vol"}
_KIND_LABEL = {"optimal": "Optimal", "linear": "Linear", "constant": "Constant",
               "zero": "Zero"}


def write_csv(path, columns, rows, manifest: dict) -> None:
    """CSV with manifest comment lines; floats via repr for determinism."""
    with open(path, "w", newline="") as fh:
        for line in manifest_comment_lines(manifest):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def read_csv(path):
    """Structured array from a CSV written by :func:`write_csv`."""
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    import io

    return np.genfromtxt(io.StringIO("".join(lines)), delimiter=",", names=True,
                         dtype=None, encoding=None)


def solve_policies(market: MarketSetup, cfg: ExperimentConfig, kinds=None) -> dict:
    """Equilibrium solve plus the requested reductions, keyed by kind name."""
    kinds = tuple(kinds if kinds is not None else cfg.policies)
    base = solve_equilibrium_policy(market.grids, market.flow, market.oracle.s0,
                                    market.time_grid)
    out = {}
    for kind in kinds:
        if kind == "optimal":
            out[kind] = base
        elif kind == "linear":
            window = int(cfg.override("linear_window", 2))
            out[kind] = fit_linear_policy(base, window, market.grids)
        elif kind == "constant":
            out[kind] = constant_policy(base)
        elif kind == "zero":
            out[kind] = zero_policy(market.time_grid, market.grids)
        else:
            raise ConfigurationError(f"unknown policy kind {kind!r}")
    out.setdefault("optimal", base)
    return out


def simulate_policy(market: MarketSetup, policy, cfg: ExperimentConfig,
                    n_paths=None, collect_log=False, snapshot_steps=None,
                    dt=None) -> SimResult:
    sim = SimConfig(
        horizon=market.horizon, dt=market.dt if dt is None else dt,
        n_paths=int(n_paths if n_paths is not None else cfg.n_paths),
        seed=cfg.seed, specs=market.specs, flow=market.flow, oracle=market.oracle,
        policies=[policy] * market.n_venues,
    )
    return run_batch(sim, collect_log=collect_log, grids=market.grids,
                     snapshot_steps=snapshot_steps)


# ---------------------------------------------------------------------------
# Tables


@dataclass
class TableResult:
    config: ExperimentConfig
    manifest: dict
    rows: dict = field(default_factory=dict)  # (lambda, player, kind) -> stats
    results: dict = field(default_factory=dict)  # (lambda, structure_label, kind) -> SimResult

    def stat(self, lam: float, player: str, kind: str, name: str) -> float:
        return self.rows[(lam, player, kind)][name]

    def to_rows(self):
        cols = ["lambda", "player", "policy"]
        for s in TABLE_STATS:
            cols += [_STAT_LABEL[s], _STAT_LABEL[s] + "_se"]
        flat = []
        for (lam, player, kind), stats in sorted(self.rows.items()):
            row = [lam, player, _KIND_LABEL[kind]]
            for s in TABLE_STATS:
                row += [stats[s], stats[s + "_se"]]
            flat.append(row)
        return cols, flat

    def write_csv(self, path) -> None:
        cols, flat = self.to_rows()
        write_csv(path, cols, flat, self.manifest)


def _venue_label(v: int) -> str:
    return chr(ord("A") + v)


def _record_result(table: TableResult, lam: float, kind: str, result: SimResult,
                   monopoly: bool) -> None:
    m = result.config.n_venues
    if monopoly:
        labels = ["Monopoly"]
        means = {s: [result.mean(s)[0]] for s in TABLE_STATS}
        ses = {s: [result.stderr(s)[0]] for s in TABLE_STATS}
    else:
        labels = [_venue_label(v) for v in range(m)] + ["Total"]
        means = {s: list(result.mean(s)) + [result.total_mean(s)] for s in TABLE_STATS}
        ses = {s: list(result.stderr(s)) + [result.total_stderr(s)] for s in TABLE_STATS}
    for i, label in enumerate(labels):
        table.rows[(lam, label, kind)] = {
            **{s: means[s][i] for s in TABLE_STATS},
            **{s + "_se": ses[s][i] for s in TABLE_STATS},
        }


def run_table(cfg: ExperimentConfig, n_paths=None, lambdas=None,
              out_dir=None) -> TableResult:
    """Simulate the requested policies and tabulate the per-venue statistics.

    Includes the single-pool benchmark rows when the config asks for them.
    All policy kinds share the seed, so cross-policy differences use common
    random numbers.
    """
    lambdas = tuple(lambdas if lambdas is not None else cfg.lambdas)
    manifest = build_manifest(cfg, {"lambdas_run": list(lambdas),
                                    "n_paths_run": int(n_paths or cfg.n_paths)})
    table = TableResult(config=cfg, manifest=manifest)
    with_monopoly = bool(cfg.outputs.get("monopoly_rows", False)) and cfg.structure > 1
    for lam in lambdas:
        blocks = [(build_market(cfg, lam), False)]
        if with_monopoly:
            blocks.append((build_market(cfg, lam, structure=1), True))
        for market, is_mono in blocks:
            policies = solve_policies(market, cfg)
            for kind in cfg.policies:
                result = simulate_policy(market, policies[kind], cfg, n_paths=n_paths)
                _record_result(table, lam, kind, result, is_mono)
                table.results[(lam, "monopoly" if is_mono else "main", kind)] = result
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        table.write_csv(os.path.join(out_dir, f"{cfg.name}.csv"))
        write_manifest(manifest, os.path.join(out_dir, f"{cfg.name}_manifest.json"))
    return table


# ---------------------------------------------------------------------------
# Persisted fee surfaces


def run_solve(cfg: ExperimentConfig, out_dir) -> dict:
    """Solve and persist fee surfaces; a rerun with the same config is a no-op."""
    lam = cfg.lambdas[0]
    market = build_market(cfg, lam)
    manifest = build_manifest(cfg, {"lambda_solved": lam})
    target = os.path.join(out_dir, "surfaces", cfg.name)
    marker = os.path.join(target, "run_manifest.json")
    if os.path.exists(marker):
        import json
        with open(marker) as fh:
            if json.load(fh).get("manifest_hash") == manifest["manifest_hash"]:
                return manifest
    policy = solve_equilibrium_policy(market.grids, market.flow, market.oracle.s0,
                                      market.time_grid)
    stride = int(cfg.outputs.get("surface_stride", 1))
    export_policy(policy, market.grids, target,
                  settings=manifest["solver"], time_stride=stride)
    write_manifest(manifest, marker)
    return manifest


# ---------------------------------------------------------------------------
# Figure data


def _mid_time_index(market: MarketSetup, at: float = 0.5) -> int:
    idx = int(np.argmin(np.abs(market.time_grid - at)))
    return idx


def _opponent_levels(grid):
    """Opponent inventory levels shown in the fee-structure figures.

    Chosen by the opponent's marginal rate (100.0 at center, 99.1 above
    center inventory, 101.1 below), which is how the comparative plots are
    parameterised.
    """
    step = grid.spec.rate_step
    center = grid.spec.center_rate
    n = grid.halfwidth
    out = []
    for z_target, label in ((100.0, "500"), (99.1, "502"), (101.1, "497")):
        l = int(np.clip(round((center - z_target) / step), -n, n))
        out.append((label, center - step * l, l))
    return out


def _surface_market(cfg: ExperimentConfig) -> MarketSetup:
    return build_market(cfg, cfg.lambdas[0])


def figure_fees_vs_inventory(cfg, out_dir, manifest) -> list:
    market = _surface_market(cfg)
    policy = solve_equilibrium_policy(market.grids, market.flow, market.oracle.s0,
                                      market.time_grid)
    tabs = policy.venue_tables(0)
    grid = market.grids[0]
    idx = _mid_time_index(market)
    n = grid.halfwidth
    paths = []
    for label, z_target, l in _opponent_levels(market.grids[1]):
        col = l + market.grids[1].halfwidth
        rows = []
        for r in range(grid.size):
            rows.append([r - n, float(grid.y[r]), float(grid.z_marginal[r]),
                         float(tabs.buy[idx, r, col]), float(tabs.sell[idx, r, col])])
        path = os.path.join(out_dir, f"fees_vs_inventory_yb{label}.csv")
        write_csv(path, ["own_j", "own_y", "own_z", "buy_fee", "sell_fee"], rows, manifest)
        paths.append(path)
    return paths


def figure_fees_3d(cfg, out_dir, manifest) -> list:
    market = _surface_market(cfg)
    policy = solve_equilibrium_policy(market.grids, market.flow, market.oracle.s0,
                                      market.time_grid)
    tabs = policy.venue_tables(0)
    own, opp = market.grids[0], market.grids[1]
    idx = _mid_time_index(market)
    rows = []
    for r in range(own.size):
        for c in range(opp.size):
            rows.append([r - own.halfwidth, float(own.y[r]),
                         c - opp.halfwidth, float(opp.y[c]),
                         float(tabs.buy[idx, r, c]), float(tabs.sell[idx, r, c])])
    path = os.path.join(out_dir, "fees_3d.csv")
    write_csv(path, ["own_j", "own_y", "opp_j", "opp_y", "buy_fee", "sell_fee"],
              rows, manifest)
    return [path]


def figure_fees_vs_time(cfg, out_dir, manifest, time_stride: int = 10) -> list:
    market = _surface_market(cfg)
    policy = solve_equilibrium_policy(market.grids, market.flow, market.oracle.s0,
                                      market.time_grid)
    tabs = policy.venue_tables(0)
    grid = market.grids[0]
    rows = []
    for label, _, l in _opponent_levels(market.grids[1]):
        col = l + market.grids[1].halfwidth
        for k in range(0, market.time_grid.size, time_stride):
            for r in range(grid.size):
                rows.append([float(market.time_grid[k]), label, r - grid.halfwidth,
                             float(tabs.buy[k, r, col]), float(tabs.sell[k, r, col])])
    path = os.path.join(out_dir, "fees_vs_time.csv")
    write_csv(path, ["t", "opp_level", "own_j", "buy_fee", "sell_fee"], rows, manifest)
    return [path]


def figure_fees_vs_oracle(cfg, out_dir, manifest) -> list:
    market = _surface_market(cfg)
    idx = _mid_time_index(market)
    grid = market.grids[0]
    s_values = [95.0 + 0.5 * i for i in range(21)]
    rows = []
    for s in s_values:
        policy = solve_equilibrium_policy(market.grids, market.flow, s, market.time_grid)
        tabs = policy.venue_tables(0)
        for label, _, l in _opponent_levels(market.grids[1]):
            col = l + market.grids[1].halfwidth
            for r in range(grid.size):
                rows.append([s, label, r - grid.halfwidth,
                             float(tabs.buy[idx, r, col]), float(tabs.sell[idx, r, col])])
    path = os.path.join(out_dir, "fees_vs_oracle.csv")
    write_csv(path, ["s", "opp_level", "own_j", "buy_fee", "sell_fee"], rows, manifest)
    return [path]


# ---------------------------------------------------------------------------
# Activity scan (slippage, strategic quotes, revenue)


@dataclass
class ScanRow:
    structure: int
    lam: float
    volume: float
    volume_se: float
    slippage: float
    slippage_se: float
    strat_buy_rate: float
    strat_sell_rate: float
    strat_spread: float
    total_fees: float
    total_fees_se: float
    boundary_rate: float


def _scan_dt(base_dt: float, lam: float) -> float:
    """Refine the step so the per-step event probability stays small."""
    substeps = max(1, int(np.ceil(lam / 100.0)))
    return base_dt / substeps


def run_activity_scan(cfg: ExperimentConfig, n_paths=None, structures=None,
                      lambdas=None, routing_samples: int = 300) -> list:
    """Sweep baseline intensity per market structure; returns ScanRow list."""
    lambdas = list(lambdas if lambdas is not None
                   else cfg.override("scan_lambdas", [25.0, 50.0, 100.0, 200.0, 400.0]))
    structures = list(structures if structures is not None
                      else cfg.override("scan_structures", [1, 2, 3]))
    n_paths = int(n_paths if n_paths is not None else cfg.override("scan_paths", cfg.n_paths))
    child_steps = int(cfg.override("routing_child_steps", 2))
    rows = []
    for m in structures:
        for lam in lambdas:
            market = build_market(cfg, lam, structure=m, calibration="fair-split")
            market.dt = _scan_dt(market.dt, lam)
            policy = solve_equilibrium_policy(market.grids, market.flow,
                                              market.oracle.s0, market.time_grid)
            snap_times = [0.40, 0.45, 0.50, 0.55, 0.60]
            snap_steps = [int(round(t / market.dt)) for t in snap_times]
            result = simulate_policy(market, policy, cfg, n_paths=n_paths,
                                     snapshot_steps=snap_steps)
            slip = avg_slippage(result)

            per_slice = int(round((market.horizon / (market.time_grid.size - 1)) / market.dt))
            policies = [policy] * m
            buy_rates, sell_rates = [], []
            n_sample = min(routing_samples, n_paths)
            for p in range(n_sample):
                for ti, step in enumerate(snap_steps):
                    offsets = result.snapshots[p, ti]
                    t_index = step // per_slice
                    try:
                        b = strategic_execution("buy", child_steps * m, offsets,
                                                t_index, policies, market.grids)
                        s = strategic_execution("sell", child_steps * m, offsets,
                                                t_index, policies, market.grids)
                    except Exception:
                        continue
                    buy_rates.append(b.rate_best)
                    sell_rates.append(s.rate_best)
            strat_buy = float(np.mean(buy_rates)) if buy_rates else float("nan")
            strat_sell = float(np.mean(sell_rates)) if sell_rates else float("nan")

            boundary = result.per_path["boundary_steps"].mean() / (
                market.horizon / market.dt)
            rows.append(ScanRow(
                structure=m, lam=lam,
                volume=result.total_mean("vol_x"), volume_se=result.total_stderr("vol_x"),
                slippage=slip.avg_slippage, slippage_se=slip.stderr,
                strat_buy_rate=strat_buy, strat_sell_rate=strat_sell,
                strat_spread=strat_buy - strat_sell,
                total_fees=result.total_mean("fees"),
                total_fees_se=result.total_stderr("fees"),
                boundary_rate=float(boundary),
            ))
    return rows


def write_scan_figures(rows, out_dir, manifest, which=None) -> list:
    files = {
        "slippage-vs-volume": (
            "slippage_vs_volume.csv",
            ["structure", "lambda", "volume", "volume_se", "slippage", "slippage_se",
             "boundary_rate"],
            lambda r: [r.structure, r.lam, r.volume, r.volume_se, r.slippage,
                       r.slippage_se, r.boundary_rate],
        ),
        "bid-ask-vs-volume": (
            "bid_ask_vs_volume.csv",
            ["structure", "lambda", "volume", "strategic_buy_rate",
             "strategic_sell_rate", "strategic_spread"],
            lambda r: [r.structure, r.lam, r.volume, r.strat_buy_rate,
                       r.strat_sell_rate, r.strat_spread],
        ),
        "venue-revenue": (
            "venue_revenue.csv",
            ["structure", "lambda", "volume", "venue_revenue", "venue_revenue_se"],
            lambda r: [r.structure, r.lam, r.volume, 0.10 * r.total_fees,
                       0.10 * r.total_fees_se],
        ),
        "revenue-per-player": (
            "revenue_per_player.csv",
            ["structure", "lambda", "volume", "per_lp_revenue", "per_lp_revenue_se"],
            lambda r: [r.structure, r.lam, r.volume, r.total_fees / r.structure,
                       r.total_fees_se / r.structure],
        ),
    }
    which = list(which) if which is not None else list(files)
    out = []
    for figure_id in which:
        name, cols, extract = files[figure_id]
        path = os.path.join(out_dir, name)
        write_csv(path, cols, [extract(r) for r in rows], manifest)
        out.append(path)
    return out


_SCAN_FIGURES = ("bid-ask-vs-volume", "slippage-vs-volume", "venue-revenue",
                 "revenue-per-player")


def run_figure_data(figure_id: str, cfg: ExperimentConfig, out_dir,
                    scan_rows=None, n_paths=None) -> list:
    """Emit the CSV(s) behind one catalogued figure id."""
    if figure_id not in FIGURE_IDS:
        raise ConfigurationError(
            f"unknown figure id {figure_id!r}; valid ids: {', '.join(FIGURE_IDS)}"
        )
    os.makedirs(out_dir, exist_ok=True)
    if figure_id == "fees-vs-inventory":
        return figure_fees_vs_inventory(cfg, out_dir, build_manifest(cfg, {"figure_id": figure_id}))
    if figure_id == "fees-3d":
        return figure_fees_3d(cfg, out_dir, build_manifest(cfg, {"figure_id": figure_id}))
    if figure_id == "fees-vs-time":
        return figure_fees_vs_time(cfg, out_dir, build_manifest(cfg, {"figure_id": figure_id}))
    if figure_id == "fees-vs-oracle":
        return figure_fees_vs_oracle(cfg, out_dir, build_manifest(cfg, {"figure_id": figure_id}))
    manifest = build_manifest(cfg, {
        "figure_id": figure_id,
        "scan_protocol": {
            "lambdas": list(cfg.override("scan_lambdas", [2.0, 4.0, 8.0, 16.0, 32.0])),
            "structures": list(cfg.override("scan_structures", [1, 2, 3])),
            "sigma": float(cfg.override("sigma", 0.0)),
            "snapshot_times": [0.40, 0.45, 0.50, 0.55, 0.60],
            "routing_child_steps": int(cfg.override("routing_child_steps", 2)),
            "step_refinement": "dt divided by ceil(lambda/100)",
        },
    })
    if scan_rows is None:
        scan_rows = run_activity_scan(cfg, n_paths=n_paths)
    return write_scan_figures(scan_rows, out_dir, manifest, which=[figure_id])
