import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ammfees.pools import (
    BoundaryError,
    GridConstructionError,
    PoolSpec,
    build_grid,
    exchange_rates,
    fee_adjusted_quote,
)


def test_grid_matches_rate_formula(paper_grid):
    g = paper_grid
    assert g.y[20] == pytest.approx(500.0, abs=1e-9)
    assert g.y[40] == pytest.approx(np.sqrt(2.5e7 / 98.0), rel=1e-14)
    assert g.y[0] == pytest.approx(np.sqrt(2.5e7 / 102.0), rel=1e-14)
    # Marginal rate steps by exactly rate_step per index.
    assert np.allclose(g.z_marginal, 100.0 - 0.1 * np.arange(-20, 21), rtol=1e-13)
    assert g.rates_at(0).z == pytest.approx(100.0, abs=1e-10)


def test_buy_rate_closed_form_and_difference_quotient(paper_grid):
    g = paper_grid
    y0 = 500.0
    ym1 = np.sqrt(2.5e7 / 100.1)
    closed = 2.5e7 / (y0 * ym1)
    quotient = (2.5e7 / ym1 - 2.5e7 / y0) / (y0 - ym1)
    assert g.rates_at(0).z_buy == pytest.approx(closed, rel=1e-12)
    assert g.rates_at(0).z_buy == pytest.approx(quotient, rel=1e-12)
    assert g.rates_at(0).z_buy == pytest.approx(100.0500, abs=5e-5)


def test_buy_sell_identity_shared_value(paper_grid):
    g = paper_grid
    for r in range(1, g.size):
        assert g.z_buy[r] == g.z_sell[r - 1]


def test_rate_ordering_interior(paper_grid):
    g = paper_grid
    assert np.all(g.z_sell[:-1] < g.z_marginal[:-1])
    assert np.all(g.z_marginal[1:] < g.z_buy[1:])


def test_grid_monotonicity(paper_grid):
    assert np.all(np.diff(paper_grid.y) > 0)
    assert np.all(np.diff(paper_grid.x) < 0)
    assert np.all(paper_grid.y > 0) and np.all(paper_grid.x > 0)


def test_spread_shrinks_under_refinement():
    gaps = []
    for step in (0.1, 0.05, 0.025, 0.0125):
        g = build_grid(PoolSpec(depth_sq=2.5e7, grid_halfwidth=10, rate_step=step))
        gaps.append(np.max(np.abs(g.z_buy - g.z_marginal)))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_single_point_grid():
    g = build_grid(PoolSpec(depth_sq=2.5e7, grid_halfwidth=0))
    assert g.size == 1
    rates = g.rates_at(0)
    assert rates.z_buy is None and rates.z_sell is None
    assert rates.z == pytest.approx(100.0, abs=1e-10)


def test_rates_at_boundaries(paper_grid):
    low = paper_grid.rates_at(-20)
    high = paper_grid.rates_at(20)
    assert low.z_buy is None and low.z_sell is not None
    assert high.z_sell is None and high.z_buy is not None
    with pytest.raises(IndexError):
        paper_grid.rates_at(21)
    with pytest.raises(IndexError):
        exchange_rates(paper_grid, -21)


def test_quote_examples(paper_grid):
    q0 = fee_adjusted_quote(paper_grid, 0, 0.0, 0.0)
    rates = paper_grid.rates_at(0)
    assert q0.buy_rate == rates.z_buy and q0.sell_rate == rates.z_sell
    q_m = fee_adjusted_quote(paper_grid, 0, m=0.01)
    assert q_m.buy_rate == pytest.approx(1.01 * rates.z_buy, rel=1e-15)
    assert q_m.buy_rate == pytest.approx(101.0505, abs=5e-5)
    q_p = fee_adjusted_quote(paper_grid, 0, p=0.01)
    assert q_p.sell_rate == pytest.approx(0.99 * rates.z_sell, rel=1e-15)
    assert q_m.buy_size == pytest.approx(paper_grid.y[20] - paper_grid.y[19], rel=1e-15)


def test_quote_boundary_errors(paper_grid):
    with pytest.raises(BoundaryError):
        paper_grid.quote(-20, side="buy")
    with pytest.raises(BoundaryError):
        paper_grid.quote(20, side="sell")
    # The available side still works at the edge.
    assert paper_grid.quote(-20, side="sell").sell_rate is not None
    with pytest.raises(BoundaryError):
        paper_grid.quote(-20)  # both sides requested


def test_spec_validation():
    with pytest.raises(GridConstructionError):
        PoolSpec(depth_sq=-1.0, grid_halfwidth=5)
    with pytest.raises(GridConstructionError):
        PoolSpec(depth_sq=1e6, grid_halfwidth=5, rate_step=0.0)
    with pytest.raises(GridConstructionError):
        PoolSpec(depth_sq=1e6, grid_halfwidth=5, kind="stableswap")
    # Rate must stay positive one step past the edge.
    with pytest.raises(GridConstructionError, match="index"):
        PoolSpec(depth_sq=1e6, grid_halfwidth=10, rate_step=10.0, center_rate=100.0)


def test_spec_roundtrip():
    spec = PoolSpec(depth_sq=1e7, grid_halfwidth=8, rate_step=0.2, center_rate=50.0)
    assert PoolSpec.from_dict(spec.to_dict()) == spec


def test_arrays_immutable(paper_grid):
    with pytest.raises(ValueError):
        paper_grid.y[0] = 1.0


def test_csv_dump(tmp_path, paper_grid):
    path = tmp_path / "grid.csv"
    paper_grid.to_csv(path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == paper_grid.size
    mid = rows[20]
    assert int(mid["j"]) == 0
    assert float(mid["y"]) == paper_grid.y[20]
    assert float(mid["z_buy"]) == paper_grid.z_buy[20]


@settings(max_examples=40, deadline=None)
@given(
    depth=st.floats(1e4, 1e10),
    n=st.integers(1, 30),
    step_frac=st.floats(1e-4, 0.02),
    center=st.floats(0.5, 500.0),
)
def test_invariants_random_specs(depth, n, step_frac, center):
    spec = PoolSpec(depth_sq=depth, grid_halfwidth=n,
                    rate_step=step_frac * center, center_rate=center)
    g = build_grid(spec)
    assert np.all(np.diff(g.y) > 0)
    assert np.all(np.diff(g.x) < 0)
    for r in range(1, g.size):
        assert g.z_buy[r] == g.z_sell[r - 1]
    assert np.all(g.z_sell[:-1] < g.z_marginal[:-1])
    assert np.all(g.z_marginal[1:] < g.z_buy[1:])
    closed = depth / (g.y[1:] * g.y[:-1])
    assert np.allclose(g.z_buy[1:], closed, rtol=1e-12, atol=0.0)
