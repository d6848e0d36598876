"""Equilibrium fee solver over the joint inventory lattice.

Each player's dynamic program reduces, after an exponential change of
variable w = exp(k * (value - cash)), to a linear ODE system
dw/dt + A w = 0 with terminal condition w(T) = 1, where A is a nonnegative
tridiagonal generator over the player's own inventory ladder, conditioned
on the rivals' inventory state and the oracle price.  The solution is
w(t) = exp(A (T - t)) 1, computed with one scaling-and-squaring matrix
exponential per conditioning state followed by a backward vector recursion.
Equilibrium fees follow in closed form from log-ratios of adjacent w
values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .market import FlowParams
from .pools import InventoryGrid

#: Largest exponent passed to exp() before the solver refuses to continue.
_EXP_LIMIT = 700.0


class SolverError(RuntimeError):
    """Raised when the generator or w-surface leaves the finite range."""


@dataclass(frozen=True)
class GeneratorMatrix:
    """Tridiagonal transition-rate matrix of one player's reduced equation.

    ``down[j]`` is the coefficient of w(j-1) in row j (a buy takes one grid
    step of Y out of the pool), ``up[j]`` the coefficient of w(j+1) (a
    sell).  The edge rows lack the outgoing side; those entries are NaN.
    ``conditioning`` records the rival inventory indices and oracle value
    the matrix was built for.
    """

    player: int
    up: np.ndarray
    down: np.ndarray
    conditioning: tuple

    @property
    def dim(self) -> int:
        return self.up.shape[0]

    def to_matrix(self) -> np.ndarray:
        a = np.zeros((self.dim, self.dim))
        rows = np.arange(self.dim)
        a[rows[:-1], rows[:-1] + 1] = self.up[:-1]
        a[rows[1:], rows[1:] - 1] = self.down[1:]
        return a


@dataclass(frozen=True)
class WSurface:
    """Transformed value w on (time, own index, rival conditioning state).

    ``values`` has shape (n_times, 2N+1, n_tuples) where the last axis
    enumerates rival index tuples row-major in increasing venue order (a
    single all-zeros tuple for a monopoly).  w(T) = 1 and w is >= 1 and
    nonincreasing in t everywhere.
    """

    player: int
    time_grid: np.ndarray
    values: np.ndarray
    k_total: float
    rival_sizes: tuple

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_own(self) -> int:
        return self.values.shape[1]

    def tuple_column(self, rival_offsets) -> int:
        """Column of a rival state given 0-based offsets per rival."""
        col = 0
        for size, off in zip(self.rival_sizes, rival_offsets):
            col = col * size + off
        return col


def make_time_grid(horizon: float, steps: int) -> np.ndarray:
    if horizon <= 0 or steps < 1:
        raise ValueError("horizon must be positive and steps >= 1")
    return np.linspace(0.0, horizon, steps + 1)


def _theta(venue: int, rival_offsets, s: float, grids, params: FlowParams):
    """Flow-weighted reference rates entering the buy/sell exponents.

    Returns (theta_minus, theta_plus): the aggregate-decay-normalised blend
    of the oracle price and the rivals' fee-free buy/sell rates against
    which the venue's own quote competes.
    """
    k0 = float(params.k0[venue])
    acc_minus = k0 * (s - params.zeta)
    acc_plus = k0 * (s + params.zeta)
    for r, off in zip(params.rivals(venue), rival_offsets):
        kx = float(params.k_cross[venue, r])
        acc_minus += kx * float(grids[r].z_buy[off])
        acc_plus += kx * float(grids[r].z_sell[off])
    k = float(params.k_total[venue])
    return acc_minus / k, acc_plus / k


def _updown(venue: int, theta_minus: float, theta_plus: float,
            grid: InventoryGrid, params: FlowParams, mode: str):
    """Up/down generator coefficients for one conditioning state.

    ``mode='pde'`` evaluates rates and trade sizes at the row state, which
    is the convention of the reduced equation the fees are derived from;
    ``mode='column'`` evaluates them at the column state instead (one grid
    step shifted), kept for diagnostics.
    """
    if mode not in ("pde", "column"):
        raise ValueError(f"unknown generator mode {mode!r}")
    k = float(params.k_total[venue])
    lam_buy = float(params.lambda_buy[venue])
    lam_sell = float(params.lambda_sell[venue])
    zb, zs = grid.z_buy, grid.z_sell
    db, ds = grid.delta_buy, grid.delta_sell

    expo_down = k * (theta_minus - zb) * db - 1.0
    expo_up = k * (zs - theta_plus) * ds - 1.0
    worst = max(np.max(expo_down), np.max(expo_up))
    if worst > _EXP_LIMIT:
        j = int(np.argmax(np.maximum(expo_down, expo_up))) - grid.halfwidth
        raise SolverError(
            f"generator exponent {worst:.1f} exceeds {_EXP_LIMIT} at venue {venue}, "
            f"grid index {j}"
        )
    down = lam_buy * np.exp(expo_down)
    up = lam_sell * np.exp(expo_up)

    if mode == "column":
        # Entry (i, i+1) evaluated at state i+1, entry (i, i-1) at state i-1.
        up = np.roll(up, -1)
        down = np.roll(down, 1)
    up = up.copy()
    down = down.copy()
    up[-1] = np.nan
    down[0] = np.nan
    return up, down


def build_generator(player: int, opponent_state: tuple, s: float, grids,
                    params: FlowParams, mode: str = "pde") -> GeneratorMatrix:
    """Generator of ``player`` conditioned on the rivals' grid indices.

    ``opponent_state`` holds one signed grid index per rival venue, in
    increasing venue order.
    """
    rivals = params.rivals(player)
    if len(opponent_state) != len(rivals):
        raise ValueError(f"expected {len(rivals)} rival indices, got {len(opponent_state)}")
    offsets = [grids[r].offset(j) for r, j in zip(rivals, opponent_state)]
    theta_minus, theta_plus = _theta(player, offsets, s, grids, params)
    up, down = _updown(player, theta_minus, theta_plus, grids[player], params, mode)
    return GeneratorMatrix(
        player=player, up=up, down=down,
        conditioning=(tuple(opponent_state), float(s)),
    )


def _step_matrix(gen: GeneratorMatrix, dt: float) -> np.ndarray:
    e = expm(gen.to_matrix() * dt)
    if not np.all(np.isfinite(e)):
        raise SolverError("matrix exponential produced non-finite entries")
    return e


def _propagate(e_step: np.ndarray, n_times: int) -> np.ndarray:
    """Backward recursion w(t_k) = E w(t_{k+1}) from w(T) = 1."""
    w = np.empty((n_times, e_step.shape[0]))
    w[-1] = 1.0
    for k in range(n_times - 2, -1, -1):
        w[k] = e_step @ w[k + 1]
    return w


def _check_w(w: np.ndarray) -> None:
    if not np.all(np.isfinite(w)):
        raise SolverError("w-surface contains non-finite entries")
    if np.min(w) < 1.0 - 1e-9:
        raise SolverError(f"w-surface dips below 1 (min {np.min(w)!r})")


def solve_w(gen: GeneratorMatrix, time_grid) -> np.ndarray:
    """w(t_k) = exp(A (T - t_k)) 1 on a uniform time grid, shape (n_times, dim)."""
    t = np.asarray(time_grid, dtype=float)
    steps = np.diff(t)
    if t.size < 2 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError("time_grid must be uniform with at least two points")
    w = _propagate(_step_matrix(gen, float(steps[0])), t.size)
    _check_w(w)
    return w


def rival_tuples(player: int, grids, params: FlowParams):
    """All rival index tuples (signed indices, increasing venue order)."""
    ranges = [range(-grids[r].halfwidth, grids[r].halfwidth + 1)
              for r in params.rivals(player)]
    return list(itertools.product(*ranges))


def solve_player(player: int, grids, params: FlowParams, s: float,
                 time_grid, mode: str = "pde") -> WSurface:
    """Solve w for one player across every rival conditioning state."""
    t = np.asarray(time_grid, dtype=float)
    tuples = rival_tuples(player, grids, params)
    n_own = grids[player].size
    values = np.empty((t.size, n_own, len(tuples)))
    for col, state in enumerate(tuples):
        gen = build_generator(player, state, s, grids, params, mode)
        values[:, :, col] = solve_w(gen, t)
    rival_sizes = tuple(grids[r].size for r in params.rivals(player))
    return WSurface(player=player, time_grid=t, values=values,
                    k_total=float(params.k_total[player]), rival_sizes=rival_sizes)


def solve_two_player(grids, params: FlowParams, s: float, time_grid,
                     mode: str = "pde") -> tuple[WSurface, WSurface]:
    """Direct two-venue solve: one tridiagonal system per opponent index.

    Written independently of the general multi-player enumeration; with two
    venues both must produce identical surfaces bit for bit.
    """
    if params.n_venues != 2:
        raise ValueError("solve_two_player requires exactly two venues")
    t = np.asarray(time_grid, dtype=float)
    surfaces = []
    for player, rival in ((0, 1), (1, 0)):
        own, other = grids[player], grids[rival]
        values = np.empty((t.size, own.size, other.size))
        for col in range(other.size):
            l = col - other.halfwidth
            gen = build_generator(player, (l,), s, grids, params, mode)
            values[:, :, col] = solve_w(gen, t)
        surfaces.append(WSurface(player=player, time_grid=t, values=values,
                                 k_total=float(params.k_total[player]),
                                 rival_sizes=(other.size,)))
    return surfaces[0], surfaces[1]


def equilibrium_fees(surface: WSurface, grid: InventoryGrid):
    """First-order-condition fee maximizers from a solved w-surface.

    Returns (buy_fee, sell_fee) arrays of the surface's shape.  The buy fee
    at own index j uses the w ratio against j-1 and is undefined (NaN) at
    the lower edge; the sell fee mirrors it at the upper edge.
    """
    w = surface.values
    k = surface.k_total
    zb = grid.z_buy[np.newaxis, :, np.newaxis]
    db = grid.delta_buy[np.newaxis, :, np.newaxis]
    zs = grid.z_sell[np.newaxis, :, np.newaxis]
    ds = grid.delta_sell[np.newaxis, :, np.newaxis]
    buy = np.full_like(w, np.nan)
    sell = np.full_like(w, np.nan)
    buy[:, 1:, :] = (1.0 + np.log(w[:, 1:, :] / w[:, :-1, :])) / (k * zb[:, 1:, :] * db[:, 1:, :])
    sell[:, :-1, :] = (1.0 + np.log(w[:, :-1, :] / w[:, 1:, :])) / (k * zs[:, :-1, :] * ds[:, :-1, :])
    return buy, sell


def value_function(surface: WSurface, cash: float = 0.0) -> np.ndarray:
    """Value v = cash + log(w) / k at every lattice point of the surface."""
    return cash + np.log(surface.values) / surface.k_total


def hjb_residual(surface: WSurface, generators) -> float:
    """Max scaled residual of the reduced equation under the solved surface.

    Uses centered time differences at interior time points:
    r = d/dt w + down * w(j-1) + up * w(j+1), scaled elementwise by
    max(1, |d/dt w|).  Second-order accurate in the time step, so the
    returned value shrinks by ~4x when the step halves.
    """
    w = surface.values
    t = surface.time_grid
    if w.shape[0] < 3:
        raise ValueError("need at least three time points for a centered residual")
    dt = float(t[1] - t[0])
    gens = list(generators)
    if len(gens) != w.shape[2]:
        raise ValueError(f"expected {w.shape[2]} generators, got {len(gens)}")
    up = np.stack([np.nan_to_num(g.up, nan=0.0) for g in gens], axis=1)
    down = np.stack([np.nan_to_num(g.down, nan=0.0) for g in gens], axis=1)

    dw = (w[2:, :, :] - w[:-2, :, :]) / (2.0 * dt)
    mid = w[1:-1, :, :]
    flow = np.zeros_like(mid)
    flow[:, 1:, :] += down[np.newaxis, 1:, :] * mid[:, :-1, :]
    flow[:, :-1, :] += up[np.newaxis, :-1, :] * mid[:, 1:, :]
    resid = np.abs(dw + flow) / np.maximum(1.0, np.abs(dw))
    return float(np.max(resid)) if resid.size else 0.0
