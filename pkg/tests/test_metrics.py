import numpy as np
import pytest

from ammfees.market import FlowParams
from ammfees.metrics import (
    InfeasibleRouteError,
    avg_slippage,
    avg_slippage_from_log,
    best_quote_rates,
    revenue_report,
    strategic_execution,
)
from ammfees.policies import solve_equilibrium_policy, zero_policy
from ammfees.pools import PoolSpec, build_grid
from ammfees.simulate import SimConfig, TradeLog, run_batch
from ammfees.solver import make_time_grid


def _log(**cols):
    n = len(cols["path"])
    base = {
        "path": np.zeros(n), "time": np.zeros(n), "venue": np.zeros(n),
        "side": np.ones(n), "size": np.ones(n), "exec_rate": np.ones(n),
        "mid_rate": np.ones(n), "fee_cash": np.zeros(n),
    }
    base.update({k: np.asarray(v, dtype=float) for k, v in cols.items()})
    return TradeLog(**{k: base[k] for k in base})


def test_slippage_zero_when_exec_equals_mid():
    log = _log(path=[0, 0, 1], side=[1, -1, 1], size=[0.5, 0.5, 0.25],
               exec_rate=[100.0, 99.0, 101.0], mid_rate=[100.0, 99.0, 101.0])
    report = avg_slippage_from_log(log, n_paths=2)
    assert report.avg_slippage == 0.0
    assert report.numerator_total == 0.0


def test_slippage_single_trade_value():
    exec_rate = 100.05 * 1.01
    fee = 0.01 * 100.05 * 0.25
    log = _log(path=[0], side=[1], size=[0.25], exec_rate=[exec_rate],
               mid_rate=[100.0], fee_cash=[fee])
    report = avg_slippage_from_log(log, n_paths=1)
    assert report.avg_slippage == pytest.approx(1.0505, abs=5e-5)
    assert report.avg_slippage == pytest.approx(exec_rate - 100.0, rel=1e-12)
    assert report.fee_component == pytest.approx(fee, rel=1e-12)
    assert report.convexity_component == pytest.approx(
        (100.05 - 100.0) * 0.25, rel=1e-9)


def test_zero_trade_paths_excluded():
    log = _log(path=[0], side=[1], size=[0.5], exec_rate=[101.0], mid_rate=[100.0])
    report = avg_slippage_from_log(log, n_paths=3)
    assert report.n_paths_used == 1
    assert report.n_paths_excluded == 2


@pytest.fixture(scope="module")
def sim_with_log(small_duopoly):
    d = small_duopoly
    policy = solve_equilibrium_policy(d["grids"], d["params"], 100.0, d["time_grid"])
    cfg = SimConfig(horizon=1.0, dt=0.02, n_paths=400, seed=11,
                    specs=[d["spec"], d["spec"]], flow=d["params"],
                    oracle=d["oracle"], policies=[policy, policy])
    return d, cfg, run_batch(cfg, grids=d["grids"], collect_log=True)


def test_slippage_decomposition_identity(sim_with_log):
    _, _, res = sim_with_log
    report = avg_slippage(res)
    assert report.numerator_total == pytest.approx(
        report.convexity_component + report.fee_component, rel=1e-10)


def test_slippage_from_log_matches_accumulators(sim_with_log):
    _, cfg, res = sim_with_log
    a = avg_slippage(res)
    b = avg_slippage_from_log(res.log, n_paths=cfg.n_paths)
    assert a.avg_slippage == pytest.approx(b.avg_slippage, rel=1e-9)
    assert a.ratio_of_means == pytest.approx(b.ratio_of_means, rel=1e-9)
    assert a.fee_component == pytest.approx(b.fee_component, rel=1e-9)
    assert a.total_volume_x == pytest.approx(b.total_volume_x, rel=1e-6)


# ---------------------------------------------------------------------------
# Routing


@pytest.fixture(scope="module")
def routing_setup():
    spec = PoolSpec(depth_sq=2.5e7, grid_halfwidth=10)
    grid = build_grid(spec)
    grids = [grid, grid]
    params = FlowParams.symmetric(2, 50.0, 50.0, k0=2.0, k_cross=2.0)
    t = make_time_grid(1.0, 10)
    policy = zero_policy(t, grids)
    return grids, [policy, policy]


def test_split_weakly_cheaper_on_identical_venues(routing_setup):
    # Two first steps beat a first and a second step on one venue in
    # execution rate (the deeper step trades less Y at a worse price).
    grids, policies = routing_setup
    center = grids[0].halfwidth
    report = strategic_execution("buy", 2, (center, center), 5, policies, grids)
    assert report.best_route == (1, 1)
    rates = {route: cash / size for route, (cash, size) in report.routes.items()}
    assert rates[(1, 1)] <= rates[(2, 0)]
    assert rates[(1, 1)] <= rates[(0, 2)]
    assert report.rate_best == pytest.approx(rates[(1, 1)], rel=1e-15)
    assert report.cost_single == report.routes[(2, 0)][0]
    # The walk arithmetic itself.
    z = grids[0].z_buy
    d = grids[0].delta_buy
    expected_split = 2.0 * z[center] * d[center]
    expected_single = z[center] * d[center] + z[center - 1] * d[center - 1]
    assert report.routes[(1, 1)][0] == pytest.approx(expected_split, rel=1e-12)
    assert report.routes[(2, 0)][0] == pytest.approx(expected_single, rel=1e-12)


def test_cheaper_venue_takes_both_children(routing_setup):
    grids, policies = routing_setup
    center = grids[0].halfwidth
    # Venue B holds more inventory, quoting strictly cheaper asks two steps deep.
    snapshot = (center, center + 2)
    report = strategic_execution("buy", 2, snapshot, 5, policies, grids)
    assert report.best_route == (0, 2)
    z, d = grids[0].z_buy, grids[0].delta_buy
    expected = z[center + 2] * d[center + 2] + z[center + 1] * d[center + 1]
    assert report.cost_best == pytest.approx(expected, rel=1e-12)
    assert report.rate_best <= report.rate_single


def test_sell_side_prefers_higher_bid(routing_setup):
    grids, policies = routing_setup
    center = grids[0].halfwidth
    snapshot = (center, center - 2)  # venue B bids higher after selling less
    report = strategic_execution("sell", 2, snapshot, 5, policies, grids)
    assert report.best_route == (0, 2)
    assert report.rate_best >= report.rate_single


def test_routing_depth_errors(routing_setup):
    grids, policies = routing_setup
    center = grids[0].halfwidth
    with pytest.raises(InfeasibleRouteError):
        strategic_execution("buy", 2 * (2 * center + 2), (center, center), 5,
                            policies, grids)
    with pytest.raises(ValueError):
        strategic_execution("buy", 3, (center, center), 5, policies, grids)


def test_best_quote_rates(routing_setup):
    grids, policies = routing_setup
    center = grids[0].halfwidth
    ask, bid = best_quote_rates((center, center + 1), 5, policies, grids)
    assert ask == pytest.approx(grids[0].z_buy[center + 1], rel=1e-12)
    assert bid == pytest.approx(grids[0].z_sell[center], rel=1e-12)
    # At the edges the served side falls back to the other venue.
    ask_edge, bid_edge = best_quote_rates((0, 2 * center), 5, policies, grids)
    assert ask_edge == pytest.approx(grids[1].z_buy[2 * center], rel=1e-12)
    assert bid_edge == pytest.approx(grids[0].z_sell[0], rel=1e-12)


# ---------------------------------------------------------------------------
# Revenue and order statistics


def test_revenue_report(sim_with_log):
    _, cfg, res = sim_with_log
    rows = revenue_report([("duopoly", res)])
    row = rows[0]
    assert row["n_venues"] == 2
    assert row["venue_revenue"] == pytest.approx(0.10 * row["total_fees"], rel=1e-12)
    assert row["per_lp_revenue"] == pytest.approx(row["total_fees"] / 2.0, rel=1e-12)
    assert row["total_fees"] == pytest.approx(res.total_mean("fees"), rel=1e-12)


def test_expected_minimum_decreases_with_dispersion():
    rng = np.random.default_rng(123)
    n = 200_000
    estimates = {}
    for sigma in (1.0, 2.0, 4.0):
        x = rng.normal(10.0, sigma, size=n)
        y = rng.normal(10.0, sigma, size=n)
        m = np.minimum(x, y)
        estimates[sigma] = (m.mean(), m.std(ddof=1) / np.sqrt(n))
    for a, b in ((1.0, 2.0), (2.0, 4.0)):
        gap = estimates[a][0] - estimates[b][0]
        se = np.hypot(estimates[a][1], estimates[b][1])
        assert gap > 3.0 * se
