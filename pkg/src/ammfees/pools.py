"""Constant-function pool mechanics on a discrete inventory grid.

A pool holds reserves (x, y) tied together by a level function x = phi(y).
Inventory moves on a grid of 2N+1 points chosen so that the marginal
exchange rate Z(y) = -phi'(y) steps by a fixed amount per grid index.  Three
rate ladders are precomputed per grid: the marginal rate (mid), the average
rate for buying one grid step of Y out of the pool (ask side), and the
average rate for selling one grid step into the pool (bid side).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np


class GridConstructionError(ValueError):
    """Raised when a pool spec cannot produce a valid inventory grid."""


class BoundaryError(IndexError):
    """Raised when a trade side is requested at the grid edge that lacks it."""


class ConstantProduct:
    """Level function of a constant-product pool: phi(y) = depth_sq / y."""

    def __init__(self, depth_sq: float):
        self.depth_sq = float(depth_sq)

    def phi(self, y):
        return self.depth_sq / y

    def phi_dot(self, y):
        return -self.depth_sq / (y * y)

    def y_at_rate(self, rate):
        """Inventory level at which the marginal rate equals ``rate``."""
        return np.sqrt(self.depth_sq / rate)


_LEVEL_FUNCTIONS = {"constant-product": ConstantProduct}


@dataclass(frozen=True)
class PoolSpec:
    """Static description of one pool: trading function, depth and grid.

    ``depth_sq`` is the invariant level of the trading function (units X*Y).
    The grid has 2*grid_halfwidth+1 inventory points; moving one index down
    raises the marginal rate by ``rate_step`` (units X/Y), with
    ``center_rate`` at index 0.
    """

    depth_sq: float
    grid_halfwidth: int
    rate_step: float = 0.1
    center_rate: float = 100.0
    kind: str = "constant-product"

    def __post_init__(self):
        if self.depth_sq <= 0:
            raise GridConstructionError(f"depth_sq must be positive, got {self.depth_sq}")
        if self.grid_halfwidth < 0:
            raise GridConstructionError(f"grid_halfwidth must be >= 0, got {self.grid_halfwidth}")
        if self.rate_step <= 0:
            raise GridConstructionError(f"rate_step must be positive, got {self.rate_step}")
        if self.center_rate <= 0:
            raise GridConstructionError(f"center_rate must be positive, got {self.center_rate}")
        if self.kind not in _LEVEL_FUNCTIONS:
            raise GridConstructionError(
                f"unknown trading-function kind {self.kind!r}; supported: {sorted(_LEVEL_FUNCTIONS)}"
            )
        # One virtual step past each edge is needed for the boundary ladder
        # entries, so the rate must stay positive one step beyond +N.
        edge = self.grid_halfwidth + 1
        if self.center_rate - self.rate_step * edge <= 0:
            raise GridConstructionError(
                f"marginal rate is non-positive at grid index {edge} "
                f"({self.center_rate} - {self.rate_step}*{edge} <= 0)"
            )

    @property
    def level(self):
        return _LEVEL_FUNCTIONS[self.kind](self.depth_sq)

    def to_dict(self) -> dict:
        return {
            "depth_sq": self.depth_sq,
            "grid_halfwidth": self.grid_halfwidth,
            "rate_step": self.rate_step,
            "center_rate": self.center_rate,
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoolSpec":
        return cls(**d)


class ExchangeRates(NamedTuple):
    z: float
    z_buy: Optional[float]
    z_sell: Optional[float]


@dataclass(frozen=True)
class FeeAdjustedQuote:
    """Executable one-step quotes after applying buy fee m and sell fee p."""

    buy_rate: Optional[float]
    sell_rate: Optional[float]
    buy_size: Optional[float]
    sell_size: Optional[float]


@dataclass(frozen=True)
class InventoryGrid:
    """Precomputed inventory ladder of one pool, indexed j in [-N, N].

    All arrays have length 2N+1 and are immutable.  ``z_buy[j]`` is the
    average rate for taking ``delta_buy[j] = y_j - y_{j-1}`` units of Y out
    of the pool; ``z_sell[j]`` the average rate for depositing
    ``delta_sell[j] = y_{j+1} - y_j``.  At j = -N (resp. j = +N) the pool
    itself cannot execute a buy (resp. sell), but the stored entry carries
    the rate extended one virtual grid step past the edge: competitors'
    order flow still reacts to an edge pool's quote, so that value must
    exist.  :meth:`rates_at` reports the trade-side entries as absent at the
    edges, matching what the pool can actually execute.
    """

    spec: PoolSpec
    y: np.ndarray
    x: np.ndarray
    z_marginal: np.ndarray
    z_buy: np.ndarray
    z_sell: np.ndarray
    delta_buy: np.ndarray
    delta_sell: np.ndarray

    @property
    def halfwidth(self) -> int:
        return self.spec.grid_halfwidth

    @property
    def size(self) -> int:
        return 2 * self.spec.grid_halfwidth + 1

    def offset(self, j: int) -> int:
        """Map signed grid index j in [-N, N] to the 0-based array offset."""
        n = self.spec.grid_halfwidth
        if not -n <= j <= n:
            raise IndexError(f"grid index {j} outside [-{n}, {n}]")
        return j + n

    def rates_at(self, j: int) -> ExchangeRates:
        """Marginal, buy and sell rates at index j; trade sides absent at edges."""
        n = self.spec.grid_halfwidth
        r = self.offset(j)
        return ExchangeRates(
            z=float(self.z_marginal[r]),
            z_buy=None if j == -n else float(self.z_buy[r]),
            z_sell=None if j == n else float(self.z_sell[r]),
        )

    def quote(self, j: int, m: float = 0.0, p: float = 0.0, side: str = "both") -> FeeAdjustedQuote:
        """Fee-adjusted one-step quotes at index j.

        The buy rate is (1+m)*z_buy, the sell rate (1-p)*z_sell.  Requesting
        a side at the grid edge that cannot execute it raises
        :class:`BoundaryError`.
        """
        if side not in ("both", "buy", "sell"):
            raise ValueError(f"side must be 'both', 'buy' or 'sell', got {side!r}")
        n = self.spec.grid_halfwidth
        r = self.offset(j)
        want_buy = side in ("both", "buy")
        want_sell = side in ("both", "sell")
        if want_buy and j == -n:
            raise BoundaryError(f"no buy side at lower grid edge j={j}")
        if want_sell and j == n:
            raise BoundaryError(f"no sell side at upper grid edge j={j}")
        return FeeAdjustedQuote(
            buy_rate=(1.0 + m) * float(self.z_buy[r]) if want_buy else None,
            sell_rate=(1.0 - p) * float(self.z_sell[r]) if want_sell else None,
            buy_size=float(self.delta_buy[r]) if want_buy else None,
            sell_size=float(self.delta_sell[r]) if want_sell else None,
        )

    def to_csv(self, path) -> None:
        """Dump the ladder to CSV (one row per grid index)."""
        n = self.spec.grid_halfwidth
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j", "y", "x", "z", "z_buy", "z_sell", "delta_buy", "delta_sell"])
            for r in range(self.size):
                writer.writerow(
                    [
                        r - n,
                        repr(float(self.y[r])),
                        repr(float(self.x[r])),
                        repr(float(self.z_marginal[r])),
                        repr(float(self.z_buy[r])),
                        repr(float(self.z_sell[r])),
                        repr(float(self.delta_buy[r])),
                        repr(float(self.delta_sell[r])),
                    ]
                )


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


def build_grid(spec: PoolSpec) -> InventoryGrid:
    """Construct the inventory grid and all rate ladders for ``spec``.

    Grid points satisfy Z(y_j) = center_rate - rate_step*j.  The buy/sell
    ladders are built from the level-function difference quotients and, for
    constant-product pools, cross-checked against the closed form
    z_buy(j) = depth_sq/(y_j*y_{j-1}) to 1e-12 relative.
    """
    n = spec.grid_halfwidth
    level = spec.level
    # Indices -N-1 .. N+1; the outermost two points are virtual and only
    # feed the edge entries of the trade ladders.
    j_ext = np.arange(-n - 1, n + 2, dtype=float)
    rates = spec.center_rate - spec.rate_step * j_ext
    if np.any(rates <= 0):
        bad = int(j_ext[np.argmax(rates <= 0)])
        raise GridConstructionError(f"marginal rate is non-positive at grid index {bad}")
    y_ext = level.y_at_rate(rates)
    x_ext = level.phi(y_ext)

    y = y_ext[1:-1]
    x = x_ext[1:-1]
    if not np.all(np.diff(y_ext) > 0):
        raise GridConstructionError("inventory grid is not strictly increasing")
    if not np.all(np.diff(x_ext) < 0):
        raise GridConstructionError("x grid is not strictly decreasing")

    z_marginal = -level.phi_dot(y)
    delta_buy = y_ext[1:-1] - y_ext[:-2]
    delta_sell = y_ext[2:] - y_ext[1:-1]
    z_buy = (x_ext[:-2] - x_ext[1:-1]) / delta_buy
    z_sell = (x_ext[1:-1] - x_ext[2:]) / delta_sell

    if isinstance(level, ConstantProduct):
        closed_buy = spec.depth_sq / (y_ext[1:-1] * y_ext[:-2])
        closed_sell = spec.depth_sq / (y_ext[1:-1] * y_ext[2:])
        # Compare in x-space: the difference quotient loses ~eps*x of
        # absolute precision to cancellation, so a fixed relative tolerance
        # would reject legitimately refined grids.
        eps = np.finfo(float).eps
        err = max(
            np.max(np.abs((z_buy - closed_buy) * delta_buy) / (eps * x)),
            np.max(np.abs((z_sell - closed_sell) * delta_sell) / (eps * x)),
        )
        if err > 512.0:
            raise GridConstructionError(
                f"difference-quotient and closed-form ladders disagree ({err:.0f} ulp)"
            )
        # The closed form is free of cancellation; store it.
        z_buy, z_sell = closed_buy, closed_sell

    return InventoryGrid(
        spec=spec,
        y=_freeze(y),
        x=_freeze(x),
        z_marginal=_freeze(z_marginal),
        z_buy=_freeze(z_buy),
        z_sell=_freeze(z_sell),
        delta_buy=_freeze(delta_buy),
        delta_sell=_freeze(delta_sell),
    )


def exchange_rates(grid: InventoryGrid, j: int) -> ExchangeRates:
    """Functional alias for :meth:`InventoryGrid.rates_at`."""
    return grid.rates_at(j)


def fee_adjusted_quote(grid: InventoryGrid, j: int, m: float = 0.0, p: float = 0.0,
                       side: str = "both") -> FeeAdjustedQuote:
    """Functional alias for :meth:`InventoryGrid.quote`."""
    return grid.quote(j, m, p, side)
