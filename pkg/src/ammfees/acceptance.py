"""Acceptance suite: one callable check per release criterion.

Each criterion returns a :class:`CriterionResult`; :func:`run_all` executes
the suite and prints a pass/fail line per criterion.  Two modes exist:
``desk`` (10k paths per table, looser Table-1 tolerance) and ``full``
(100k paths at the reference tolerances).  Heavy intermediate artifacts
(solved surfaces, table runs, the activity scan) are shared across
criteria through :class:`AcceptanceContext`.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .experiments import build_market, catalog_config
from .market import FlowParams
from .pools import PoolSpec, build_grid
from .oracles import rk4_w
from .policies import solve_equilibrium_policy
from .runner import run_activity_scan, run_table
from .simulate import run_batch, SimConfig
from .solver import (
    build_generator,
    equilibrium_fees,
    hjb_residual,
    make_time_grid,
    rival_tuples,
    solve_player,
    solve_two_player,
)

TABLE1 = {"fees": 18.22, "n_sell": 36.79, "n_buy": 36.78, "vol_x": 1839.0}
TABLE1_MONO = {"fees": 35.55, "vol_x": 3590.0}
TABLE2_TOTAL_FEES = 72.37
TABLE3_PLAYER_FEES = 12.25
TABLE3_TOTAL_FEES = 36.76


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class AcceptanceContext:
    """Shared computations for the acceptance criteria."""

    mode: str = "desk"
    _cache: dict = field(default_factory=dict)

    @property
    def table_paths(self) -> int:
        return 100_000 if self.mode == "full" else 10_000

    @property
    def scan_paths(self) -> int:
        return 2_500 if self.mode == "full" else 1_200

    @property
    def table1_tolerance(self) -> float:
        return 0.02 if self.mode == "full" else 0.05

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def table(self, name: str, n_paths=None):
        n = int(n_paths if n_paths is not None else self.table_paths)
        return self._memo((name, n), lambda: run_table(
            catalog_config(name), n_paths=n, lambdas=(100.0,)))

    def reference_surfaces(self):
        """Fee-structure parameterisation: duopoly, half-depth pools, lam 50."""
        def build():
            spec = PoolSpec(depth_sq=2.5e7, grid_halfwidth=20)
            grids = [build_grid(spec)] * 2
            params = FlowParams.symmetric(2, 50.0, 50.0, k0=2.0, k_cross=2.0)
            t = make_time_grid(1.0, 1000)
            surf_a, surf_b = solve_two_player(grids, params, 100.0, t)
            return grids, params, t, surf_a, surf_b
        return self._memo("ref", build)

    def scan_rows(self):
        return self._memo("scan", lambda: run_activity_scan(
            catalog_config("activity_scan"), n_paths=self.scan_paths,
            routing_samples=150))


def _within(value: float, target: float, tol: float) -> bool:
    return abs(value - target) <= tol * abs(target)


# ---------------------------------------------------------------------------
# Criteria


def criterion_table1(ctx: AcceptanceContext) -> CriterionResult:
    runs = [(ctx.table_paths, ctx.table1_tolerance)]
    if ctx.mode == "full":
        runs.append((10_000, 0.05))  # desk-scale clause of the criterion
    bits = []
    ok = True
    for n_paths, tol in runs:
        table = ctx.table("table1_k2", n_paths=n_paths)
        for stat, target in TABLE1.items():
            got = table.stat(100.0, "A", "optimal", stat)
            ok &= _within(got, target, tol)
            bits.append(f"{stat}={got:.2f}/{target}")
        for stat, target in TABLE1_MONO.items():
            got = table.stat(100.0, "Monopoly", "optimal", stat)
            ok &= _within(got, target, tol)
            bits.append(f"mono_{stat}={got:.2f}/{target}")
        bits.append(f"[{n_paths} paths tol {tol:.0%}]")
    return CriterionResult("table1-reproduction", bool(ok), " ".join(bits))


def criterion_table2(ctx: AcceptanceContext) -> CriterionResult:
    t2 = ctx.table("table2_k1")
    t1 = ctx.table("table1_k2")
    total2 = t2.stat(100.0, "Total", "optimal", "fees")
    total1 = t1.stat(100.0, "Total", "optimal", "fees")
    ratio = total2 / total1
    ok = _within(total2, TABLE2_TOTAL_FEES, 0.02) and 1.9 <= ratio <= 2.1
    return CriterionResult(
        "table2-and-decay-scaling", bool(ok),
        f"total fees {total2:.2f}/{TABLE2_TOTAL_FEES} (2%), k-halving ratio {ratio:.3f} in [1.9, 2.1]",
    )


def criterion_table3(ctx: AcceptanceContext) -> CriterionResult:
    t3 = ctx.table("table3_3players_k2")
    p1 = t3.stat(100.0, "A", "optimal", "fees")
    total = t3.stat(100.0, "Total", "optimal", "fees")
    ok = _within(p1, TABLE3_PLAYER_FEES, 0.03) and _within(total, TABLE3_TOTAL_FEES, 0.03)
    return CriterionResult(
        "table3-three-players", bool(ok),
        f"player fees {p1:.2f}/{TABLE3_PLAYER_FEES}, total {total:.2f}/{TABLE3_TOTAL_FEES} (3%)",
    )


def criterion_strategy_ordering(ctx: AcceptanceContext) -> CriterionResult:
    bits = []
    ok = True
    for name in ("table1_k2", "table2_k1"):
        table = ctx.table(name)
        for player in ("Total", "Monopoly"):
            opt = table.stat(100.0, player, "optimal", "fees")
            con = table.stat(100.0, player, "constant", "fees")
            lin = table.stat(100.0, player, "linear", "fees")
            deficit_bps = 1e4 * (opt - con) / opt
            lin_gap = abs(lin - opt) / opt
            ok &= 30.0 <= deficit_bps <= 170.0
            ok &= lin_gap <= 0.005
            bits.append(f"{name}/{player}: const -{deficit_bps:.0f}bps lin {lin_gap:.2%}")
    return CriterionResult(
        "strategy-ordering", bool(ok),
        "constant deficit in [30,170] bps, linear within 0.5%; " + "; ".join(bits),
    )


def criterion_solver(ctx: AcceptanceContext) -> CriterionResult:
    grids, params, t, surf_a, _ = ctx.reference_surfaces()

    # Matrix exponential vs an independent RK4 integration (substep count
    # chosen so the integrator's own fourth-order error sits near 1e-9).
    worst_rk4 = 0.0
    for l in (-20, -11, 0, 9, 20):
        gen = build_generator(0, (l,), 100.0, grids, params)
        col = l + grids[1].halfwidth
        reference = rk4_w(gen, t, substeps=16)
        worst_rk4 = max(worst_rk4, float(np.max(
            np.abs(surf_a.values[:, :, col] / reference - 1.0))))

    # Reduced-equation residual: second order in the time step.
    resids = []
    for steps in (250, 500, 1000):
        tg = make_time_grid(1.0, steps)
        surf = solve_player(0, grids, params, 100.0, tg)
        gens = [build_generator(0, state, 100.0, grids, params)
                for state in rival_tuples(0, grids, params)]
        resids.append(hjb_residual(surf, gens))
    ratios = [resids[i] / resids[i + 1] for i in range(2)]
    order_ok = all(2.5 <= r <= 5.5 for r in ratios)

    # Terminal fee identity, exact to 1e-12.
    buy, sell = equilibrium_fees(surf_a, grids[0])
    k = surf_a.k_total
    zb, db = grids[0].z_buy, grids[0].delta_buy
    zs, ds = grids[0].z_sell, grids[0].delta_sell
    term_m = np.max(np.abs(buy[-1, 1:, :] * k * (zb[1:] * db[1:])[:, None] - 1.0))
    term_p = np.max(np.abs(sell[-1, :-1, :] * k * (zs[:-1] * ds[:-1])[:, None] - 1.0))

    # The general multi-venue solver restricted to two venues must agree
    # bit for bit with the dedicated two-venue path.
    gen_a = solve_player(0, grids, params, 100.0, t)
    bitwise = np.array_equal(gen_a.values, surf_a.values)

    ok = (worst_rk4 <= 1e-8 and order_ok and term_m <= 1e-12 and term_p <= 1e-12
          and bitwise)
    return CriterionResult(
        "solver-correctness", bool(ok),
        f"rk4 dev {worst_rk4:.2e} (<=1e-8), residual ratios "
        f"{ratios[0]:.2f},{ratios[1]:.2f} (~4), terminal identity "
        f"{max(term_m, term_p):.1e} (<=1e-12), m-player bitwise {bitwise}",
    )


def _crossing_rate(buy, sell, grid, t_idx, col) -> float:
    gap = np.abs(buy[t_idx, :, col] - sell[t_idx, :, col])
    j = int(np.nanargmin(gap))
    return float(grid.z_marginal[j])


def criterion_fee_structure(ctx: AcceptanceContext) -> CriterionResult:
    grids, params, t, surf_a, _ = ctx.reference_surfaces()
    buy, sell = equilibrium_fees(surf_a, grids[0])
    idx = 500
    n = grids[1].halfwidth
    step = grids[0].spec.rate_step
    k0 = float(params.k0[0])
    kx = float(params.k_cross[0, 1])

    bits = []
    ok = True
    cross_center = _crossing_rate(buy, sell, grids[0], idx, 0 + n)
    ok &= abs(cross_center - 100.0) <= step + 1e-12
    bits.append(f"center crossing Z={cross_center:.2f} (target 100 +-{step})")
    for z_b, direction in ((101.1, +1), (99.1, -1)):
        l = int(round((100.0 - z_b) / step))
        target = (k0 * 100.0 + kx * z_b) / (k0 + kx)
        got = _crossing_rate(buy, sell, grids[0], idx, l + n)
        ok &= abs(got - target) <= step + 1e-12
        ok &= (got - cross_center) * direction > 0
        bits.append(f"rival Z={z_b}: crossing {got:.2f} (target {target:.2f})")

    # Oracle monotonicity of the center-state fees over s in [95, 105].
    buy_prev = sell_prev = None
    mono_ok = True
    for s in range(95, 106):
        pol = solve_equilibrium_policy(grids, params, float(s), t)
        tabs = pol.venue_tables(0)
        b = tabs.buy[idx, 1:, n]
        p = tabs.sell[idx, :-1, n]
        if buy_prev is not None:
            mono_ok &= bool(np.all(b >= buy_prev - 1e-12))
            mono_ok &= bool(np.all(p <= sell_prev + 1e-12))
        buy_prev, sell_prev = b, p
    ok &= mono_ok
    bits.append(f"fees monotone in oracle over [95,105]: {mono_ok}")
    return CriterionResult("fee-structure", bool(ok), "; ".join(bits))


def criterion_figure_trends(ctx: AcceptanceContext) -> CriterionResult:
    rows = ctx.scan_rows()
    by = {(r.structure, r.lam): r for r in rows}
    lams = sorted({r.lam for r in rows})
    structures = sorted({r.structure for r in rows})
    bits = []
    ok = True

    for m in structures:
        sub = [by[(m, l)] for l in lams]
        s = np.array([r.slippage for r in sub])
        se = np.array([r.slippage_se for r in sub])
        decreasing = bool(np.all(np.diff(s) <= (se[1:] + se[:-1])))
        d2 = s[2:] - 2.0 * s[1:-1] + s[:-2]
        d2_se = np.sqrt(se[2:] ** 2 + 4.0 * se[1:-1] ** 2 + se[:-2] ** 2)
        concave = bool(np.all(d2 <= d2_se))
        ok &= decreasing and concave
        bits.append(f"M={m} slippage decreasing={decreasing} concave={concave}")

    if 1 in structures and 2 in structures:
        tighter = all(by[(2, l)].strat_spread
                      <= by[(1, l)].strat_spread + 0.02 * by[(1, l)].strat_spread
                      for l in lams)
        buys_better = all(by[(2, l)].strat_buy_rate
                          <= by[(1, l)].strat_buy_rate * (1.0 + 2e-4) for l in lams)
        ok &= tighter and buys_better
        bits.append(f"duopoly best-quote tighter than monopoly: {tighter}, "
                    f"buy execution weakly better: {buys_better}")

    ordering = all(by[(1, l)].total_fees / 1 > by[(2, l)].total_fees / 2
                   > by[(3, l)].total_fees / 3 for l in lams) if len(structures) == 3 else False
    ok &= ordering
    bits.append(f"per-player revenue ordering 1>2>3: {ordering}")

    # Venue take (10% of LP fees) compared across structures on the table
    # configurations (constant oracle).  The reference values themselves
    # differ by up to ~3.4%, so equality is asserted within the larger of
    # 4 standard errors and 5%.
    t1 = ctx.table("table1_k2")
    t3 = ctx.table("table3_3players_k2")
    mono = 0.10 * t1.stat(100.0, "Monopoly", "optimal", "fees")
    mono_se = 0.10 * t1.rows[(100.0, "Monopoly", "optimal")]["fees_se"]
    equal_ok = True
    for table, label in ((t1, "duopoly"), (t3, "3-player")):
        take = 0.10 * table.stat(100.0, "Total", "optimal", "fees")
        se = 0.10 * table.rows[(100.0, "Total", "optimal")]["fees_se"]
        tol = max(4.0 * np.hypot(se, mono_se), 0.05 * mono)
        equal_ok &= bool(abs(take - mono) <= tol)
        bits.append(f"venue take {label} {take:.3f} vs mono {mono:.3f}")
    ok &= equal_ok
    return CriterionResult("figure-trends", bool(ok), "; ".join(bits))


def criterion_determinism(ctx: AcceptanceContext) -> CriterionResult:
    cfg = catalog_config("determinism_probe")
    with tempfile.TemporaryDirectory() as tmp:
        d1, d2 = os.path.join(tmp, "a"), os.path.join(tmp, "b")
        run_table(cfg, out_dir=d1)
        run_table(cfg, out_dir=d2)
        f1 = open(os.path.join(d1, f"{cfg.name}.csv"), "rb").read()
        f2 = open(os.path.join(d2, f"{cfg.name}.csv"), "rb").read()
        csv_ok = f1 == f2

    market = build_market(cfg, 100.0)
    policy = solve_equilibrium_policy(market.grids, market.flow, market.oracle.s0,
                                      market.time_grid)
    sim = SimConfig(horizon=market.horizon, dt=market.dt, n_paths=300, seed=cfg.seed,
                    specs=market.specs, flow=market.flow, oracle=market.oracle,
                    policies=[policy] * market.n_venues)
    r1 = run_batch(sim, grids=market.grids, chunk_size=300)
    r2 = run_batch(sim, grids=market.grids, chunk_size=37)
    chunk_ok = all(np.array_equal(r1.per_path[k], r2.per_path[k])
                   for k in r1.per_path)
    ok = csv_ok and chunk_ok
    return CriterionResult(
        "determinism", bool(ok),
        f"rerun CSV byte-identical: {csv_ok}; chunking-invariant paths: {chunk_ok}",
    )


CRITERIA = (
    criterion_table1,
    criterion_table2,
    criterion_table3,
    criterion_strategy_ordering,
    criterion_solver,
    criterion_fee_structure,
    criterion_figure_trends,
    criterion_determinism,
)


def run_all(mode: str = "desk", echo=print) -> list:
    """Run every criterion; returns the list of results."""
    if mode not in ("desk", "full"):
        raise ValueError("mode must be 'desk' or 'full'")
    ctx = AcceptanceContext(mode=mode)
    results = []
    for criterion in CRITERIA:
        result = criterion(ctx)
        results.append(result)
        if echo:
            echo(result.line())
    if echo:
        n_pass = sum(r.passed for r in results)
        echo(f"{n_pass}/{len(results)} criteria passed ({mode} mode)")
    return results
