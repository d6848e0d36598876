import pytest

from ammfees.market import FlowParams, OracleSpec
from ammfees.pools import PoolSpec, build_grid
from ammfees.solver import make_time_grid


@pytest.fixture(scope="session")
def paper_grid():
    """Half-depth duopoly pool on the reference rate grid (center 100, step 0.1)."""
    return build_grid(PoolSpec(depth_sq=2.5e7, grid_halfwidth=20))


@pytest.fixture(scope="session")
def small_duopoly():
    """Tiny duopoly market for fast solver/simulator tests."""
    spec = PoolSpec(depth_sq=2.5e7, grid_halfwidth=6)
    grid = build_grid(spec)
    params = FlowParams.symmetric(2, 40.0, 40.0, k0=2.0, k_cross=2.0)
    t = make_time_grid(1.0, 50)
    return dict(spec=spec, grids=[grid, grid], params=params, time_grid=t,
                oracle=OracleSpec(100.0))


@pytest.fixture(scope="session")
def paper_reference():
    """Fee-structure parameterisation: duopoly, lam 50, k0 = k_cross = 2."""
    spec = PoolSpec(depth_sq=2.5e7, grid_halfwidth=20)
    grid = build_grid(spec)
    params = FlowParams.symmetric(2, 50.0, 50.0, k0=2.0, k_cross=2.0)
    t = make_time_grid(1.0, 1000)
    return dict(spec=spec, grids=[grid, grid], params=params, time_grid=t,
                oracle=OracleSpec(100.0))
