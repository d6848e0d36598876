"""Order-flow intensities controlled by fees, and the oracle price process.

Taker order arrivals at each venue are point processes whose intensities
rise exponentially as the venue's fee-adjusted quote becomes attractive
relative to (a) the external oracle price and (b) the competitors' fee-free
quotes.  Both comparison terms are scaled by the venue's own one-step trade
size, so larger trades amplify a given per-unit misalignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pools import FeeAdjustedQuote


@dataclass(frozen=True)
class FlowParams:
    """Baseline intensities and exponential decay coefficients, per venue.

    ``k0[i]`` weighs venue i's misalignment against the oracle, and
    ``k_cross[i, j]`` against rival venue j's fee-free quote (zero
    diagonal).  ``zeta`` is the external venue's half-spread; arbitrage
    against the oracle compares with S -/+ zeta on the buy/sell side.
    """

    lambda_buy: np.ndarray
    lambda_sell: np.ndarray
    k0: np.ndarray
    k_cross: np.ndarray
    zeta: float = 0.0

    def __post_init__(self):
        lb = np.atleast_1d(np.asarray(self.lambda_buy, dtype=float))
        ls = np.atleast_1d(np.asarray(self.lambda_sell, dtype=float))
        k0 = np.atleast_1d(np.asarray(self.k0, dtype=float))
        kx = np.atleast_2d(np.asarray(self.k_cross, dtype=float))
        m = lb.shape[0]
        if ls.shape != (m,) or k0.shape != (m,) or kx.shape != (m, m):
            raise ValueError(
                f"inconsistent venue counts: lambda_buy {lb.shape}, lambda_sell {ls.shape}, "
                f"k0 {k0.shape}, k_cross {kx.shape}"
            )
        if np.any(lb < 0) or np.any(ls < 0):
            raise ValueError("baseline intensities must be non-negative")
        if np.any(k0 <= 0):
            raise ValueError("k0 must be positive for every venue")
        if np.any(kx < 0):
            raise ValueError("k_cross must be non-negative entrywise")
        if np.any(np.diag(kx) != 0):
            raise ValueError("k_cross must have a zero diagonal")
        if np.any(k0 + kx.sum(axis=1) <= 0):
            raise ValueError("total decay k0 + sum(k_cross) must be positive")
        for name, a in ("lambda_buy", lb), ("lambda_sell", ls), ("k0", k0), ("k_cross", kx):
            a = a.copy()
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def n_venues(self) -> int:
        return self.lambda_buy.shape[0]

    @property
    def k_total(self) -> np.ndarray:
        """Per-venue aggregate decay k0 + sum of cross sensitivities."""
        return self.k0 + self.k_cross.sum(axis=1)

    def rivals(self, venue: int) -> list[int]:
        return [j for j in range(self.n_venues) if j != venue]

    @classmethod
    def symmetric(cls, n_venues: int, lam_buy: float, lam_sell: float,
                  k0: float, k_cross: float = 0.0, zeta: float = 0.0) -> "FlowParams":
        """All venues share the same baselines and decay coefficients."""
        kx = np.full((n_venues, n_venues), k_cross, dtype=float)
        np.fill_diagonal(kx, 0.0)
        return cls(
            lambda_buy=np.full(n_venues, lam_buy, dtype=float),
            lambda_sell=np.full(n_venues, lam_sell, dtype=float),
            k0=np.full(n_venues, k0, dtype=float),
            k_cross=kx,
            zeta=zeta,
        )

    def to_dict(self) -> dict:
        return {
            "lambda_buy": self.lambda_buy.tolist(),
            "lambda_sell": self.lambda_sell.tolist(),
            "k0": self.k0.tolist(),
            "k_cross": self.k_cross.tolist(),
            "zeta": self.zeta,
        }


@dataclass(frozen=True)
class OracleSpec:
    """External reference price: constant, or arithmetic Brownian motion."""

    s0: float
    sigma: float = 0.0
    mode: str = "constant"

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError(f"s0 must be positive, got {self.s0}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.mode not in ("constant", "arithmetic-brownian"):
            raise ValueError(f"unknown oracle mode {self.mode!r}")

    def to_dict(self) -> dict:
        return {"s0": self.s0, "sigma": self.sigma, "mode": self.mode}


def intensity(side: str, venue: int, own_quote: FeeAdjustedQuote,
              rival_rates, s: float, params: FlowParams, tradable: bool) -> float:
    """Arrival intensity of one venue-side given the current quotes.

    ``rival_rates`` holds the rivals' fee-free one-step rates for the same
    side (buy rates for side='buy', sell rates for side='sell'), one entry
    per rival in increasing venue order.  ``tradable`` is the boundary
    indicator: False when the pool sits at the grid edge for this side,
    which forces intensity zero.
    """
    if side not in ("buy", "sell"):
        raise ValueError(f"side must be 'buy' or 'sell', got {side!r}")
    if not tradable:
        return 0.0
    rival_rates = np.asarray(rival_rates, dtype=float)
    rivals = params.rivals(venue)
    if rival_rates.shape != (len(rivals),):
        raise ValueError(f"expected {len(rivals)} rival rates, got shape {rival_rates.shape}")

    if side == "buy":
        rate = own_quote.buy_rate
        size = own_quote.buy_size
        base = float(params.lambda_buy[venue])
    else:
        rate = own_quote.sell_rate
        size = own_quote.sell_size
        base = float(params.lambda_sell[venue])
    if rate is None or size is None:
        raise ValueError(f"own quote lacks the {side} side")
    inputs = [rate, size, s, params.zeta, *rival_rates.tolist()]
    if not all(math.isfinite(v) for v in inputs):
        raise ValueError(f"non-finite input to intensity: {inputs}")

    k0 = float(params.k0[venue])
    if side == "buy":
        expo = k0 * ((s - params.zeta) - rate)
        for r, zr in zip(rivals, rival_rates):
            expo += float(params.k_cross[venue, r]) * (zr - rate)
    else:
        expo = k0 * (rate - (s + params.zeta))
        for r, zr in zip(rivals, rival_rates):
            expo += float(params.k_cross[venue, r]) * (rate - zr)
    value = base * math.exp(expo * size)
    if not math.isfinite(value):
        raise ValueError(f"intensity overflowed for venue {venue} side {side}")
    return value


def sample_oracle(spec: OracleSpec, time_grid, rng: np.random.Generator) -> np.ndarray:
    """Sample one oracle path on ``time_grid`` (increasing, starting at 0)."""
    t = np.asarray(time_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("time_grid must be increasing and start at 0")
    if spec.mode == "constant" or spec.sigma == 0.0:
        return np.full(t.shape, spec.s0)
    increments = rng.standard_normal(t.size - 1) * np.sqrt(np.diff(t))
    path = np.empty(t.size)
    path[0] = spec.s0
    path[1:] = spec.s0 + spec.sigma * np.cumsum(increments)
    return path
