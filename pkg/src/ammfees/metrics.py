"""Post-simulation analytics: slippage, order routing, revenue comparisons.

Average slippage is the deviation of the fee-adjusted execution rate from
the pre-trade marginal rate, summed across venues and trades, divided by
the total traded quantity of the risky asset.  Its numerator decomposes
exactly into a fee-independent convexity charge (the bid/ask ladder walking
away from the mid) plus the cash fees collected.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .simulate import SimResult, TradeLog

logger = logging.getLogger(__name__)


class InfeasibleRouteError(ValueError):
    """Raised when a requested trade exceeds the available ladder depth."""


@dataclass(frozen=True)
class SlippageReport:
    avg_slippage: float        # mean over paths of (numerator / traded Y)
    ratio_of_means: float      # batch numerator / batch traded Y (diagnostic)
    convexity_component: float  # batch total, units X
    fee_component: float        # batch total, units X
    numerator_total: float      # batch total, units X
    total_volume_x: float       # notional traded, units X
    total_size_y: float         # traded quantity, units Y
    n_paths_used: int
    n_paths_excluded: int
    stderr: float


def avg_slippage(result: SimResult) -> SlippageReport:
    """Slippage report from a batch's per-path accumulators."""
    num = result.per_path["slip_num"].sum(axis=1)
    den = result.per_path["vol_y"].sum(axis=1)
    conv = result.per_path["conv_num"].sum(axis=1)
    fees = result.per_path["fees"].sum(axis=1)
    return _slippage_from_sums(num, den, conv, fees,
                               result.per_path["vol_x"].sum(axis=1))


def avg_slippage_from_log(log: TradeLog, n_paths: int) -> SlippageReport:
    """Slippage report recomputed from raw trade records.

    Uses only (mid_rate, exec_rate, size, fee_cash) per trade; serves as an
    independent route against the simulator's online accumulators.
    """
    per_trade_num = log.side * (log.exec_rate - log.mid_rate) * log.size
    paths = log.path.astype(np.int64)
    num = np.bincount(paths, weights=per_trade_num, minlength=n_paths)
    den = np.bincount(paths, weights=log.size, minlength=n_paths)
    fees = np.bincount(paths, weights=log.fee_cash, minlength=n_paths)
    conv = num - fees
    # Notional in X at the fee-free rate, reconstructed from the executed
    # cash net of the fee (fee_cash = fee * fee_free_rate * size).
    fee_free_rate = np.where(log.side > 0,
                             log.exec_rate - log.fee_cash / log.size,
                             log.exec_rate + log.fee_cash / log.size)
    vol_x = np.bincount(paths, weights=fee_free_rate * log.size, minlength=n_paths)
    return _slippage_from_sums(num, den, conv, fees, vol_x)


def _slippage_from_sums(num, den, conv, fees, vol_x) -> SlippageReport:
    used = den > 0
    n_excluded = int(np.sum(~used))
    if n_excluded:
        logger.warning("avg_slippage: excluded %d path(s) with no trades", n_excluded)
    if not np.any(used):
        raise ValueError("no path executed any trade")
    ratios = num[used] / den[used]
    se = float(ratios.std(ddof=1) / np.sqrt(ratios.size)) if ratios.size > 1 else 0.0
    return SlippageReport(
        avg_slippage=float(ratios.mean()),
        ratio_of_means=float(num[used].sum() / den[used].sum()),
        convexity_component=float(conv[used].sum()),
        fee_component=float(fees[used].sum()),
        numerator_total=float(num[used].sum()),
        total_volume_x=float(vol_x[used].sum()),
        total_size_y=float(den[used].sum()),
        n_paths_used=int(np.sum(used)),
        n_paths_excluded=n_excluded,
        stderr=se,
    )


# ---------------------------------------------------------------------------
# Strategic liquidity taker: route a parent trade across venues


@dataclass(frozen=True)
class RoutingReport:
    side: str
    trade_size: float          # executed quantity of Y under the best route
    child_steps: int
    routes: dict               # route tuple -> (cash, executed Y)
    best_route: tuple
    cost_best: float           # cash paid (buy) or received (sell)
    rate_best: float           # cash per unit Y
    cost_single: float         # all-to-one benchmark on the first venue
    rate_single: float


def _walk_ladder(side: str, venue: int, steps: int, offsets, t_index: int,
                 policy, grid) -> tuple[float, float]:
    """Cash and executed Y for ``steps`` one-step trades on one venue.

    The venue's own inventory walks with the trade; rival inventories stay
    frozen at the snapshot.  Fees are read from the policy at ``t_index``.
    """
    tabs = policy.venue_tables(venue)
    n_rivals = getattr(tabs.codec, "n_rivals", 0)
    rivals = [v for v in range(len(offsets)) if v != venue]
    if n_rivals:
        col = int(tabs.codec.columns(np.array([[offsets[r] for r in rivals]],
                                              dtype=np.int64))[0])
    else:
        col = 0
    r = int(offsets[venue])
    top = grid.size - 1
    cash = 0.0
    executed = 0.0
    for u in range(steps):
        if side == "buy":
            state = r - u
            if state < 1:
                raise InfeasibleRouteError(
                    f"buy of {steps} steps exhausts venue {venue} ladder at offset {state}"
                )
            fee = float(tabs.buy[t_index, state, col])
            cash += (1.0 + fee) * float(grid.z_buy[state]) * float(grid.delta_buy[state])
            executed += float(grid.delta_buy[state])
        else:
            state = r + u
            if state > top - 1:
                raise InfeasibleRouteError(
                    f"sell of {steps} steps exhausts venue {venue} ladder at offset {state}"
                )
            fee = float(tabs.sell[t_index, state, col])
            cash += (1.0 - fee) * float(grid.z_sell[state]) * float(grid.delta_sell[state])
            executed += float(grid.delta_sell[state])
    return cash, executed


def strategic_execution(side: str, total_steps: int, snapshot_offsets, t_index: int,
                        policies, grids) -> RoutingReport:
    """Cheapest routing of a parent trade split into one child per venue.

    ``total_steps`` is the parent size in grid steps summed across children
    (must be divisible by the venue count); every enumerated route assigns
    the equal-sized children to venues and walks each venue's fee-adjusted
    ladder from the snapshot state.  Buying minimises cash paid; selling
    maximises cash received.
    """
    if side not in ("buy", "sell"):
        raise ValueError(f"side must be 'buy' or 'sell', got {side!r}")
    m = len(grids)
    if total_steps < 1 or total_steps % m:
        raise ValueError(f"total_steps {total_steps} must be a positive multiple of {m}")
    child = total_steps // m

    routes = {}
    best_route, best_cash, best_exec = None, None, None
    for counts in itertools.combinations_with_replacement(range(m), m):
        alloc = tuple(sum(1 for c in counts if c == v) for v in range(m))
        if alloc in routes:
            continue
        try:
            cash = 0.0
            executed = 0.0
            for v, n_children in enumerate(alloc):
                if n_children:
                    c, e = _walk_ladder(side, v, n_children * child, snapshot_offsets,
                                        t_index, policies[v], grids[v])
                    cash += c
                    executed += e
        except InfeasibleRouteError:
            continue
        routes[alloc] = (cash, executed)
        better = (best_cash is None
                  or (side == "buy" and cash / executed < best_cash / best_exec)
                  or (side == "sell" and cash / executed > best_cash / best_exec))
        if better:
            best_route, best_cash, best_exec = alloc, cash, executed
    if best_route is None:
        raise InfeasibleRouteError("no feasible route for the requested size")

    single = tuple(m if v == 0 else 0 for v in range(m))
    if single in routes:
        single_cash, single_exec = routes[single]
        rate_single = single_cash / single_exec
    else:
        single_cash, rate_single = float("nan"), float("nan")
    return RoutingReport(
        side=side, trade_size=best_exec, child_steps=child, routes=routes,
        best_route=best_route, cost_best=best_cash, rate_best=best_cash / best_exec,
        cost_single=single_cash, rate_single=rate_single,
    )


def best_quote_rates(snapshot_offsets, t_index, policies, grids):
    """Best fee-adjusted one-step ask and bid across venues at a snapshot.

    Returns (best_ask, best_bid): the cheapest one-step buy rate and the
    highest one-step sell rate; NaN when no venue can serve the side.
    """
    asks, bids = [], []
    for v, grid in enumerate(grids):
        tabs = policies[v].venue_tables(v)
        n_rivals = getattr(tabs.codec, "n_rivals", 0)
        rivals = [u for u in range(len(grids)) if u != v]
        col = (int(tabs.codec.columns(np.array([[snapshot_offsets[r] for r in rivals]],
                                               dtype=np.int64))[0]) if n_rivals else 0)
        r = int(snapshot_offsets[v])
        if r >= 1:
            asks.append((1.0 + float(tabs.buy[t_index, r, col])) * float(grid.z_buy[r]))
        if r <= grid.size - 2:
            bids.append((1.0 - float(tabs.sell[t_index, r, col])) * float(grid.z_sell[r]))
    return (min(asks) if asks else float("nan"),
            max(bids) if bids else float("nan"))


# ---------------------------------------------------------------------------
# Venue and liquidity-provider revenue


def revenue_report(results, venue_take: float = 0.10) -> list:
    """Rows of (label, venue count, LP fee totals, venue take, per-LP revenue).

    ``results`` is an iterable of (label, SimResult).  The hosting venue
    collects a fixed share of all LP fees; per-LP revenue assumes the
    equal-split calibration.
    """
    rows = []
    for label, result in results:
        m = result.config.n_venues
        total = result.total_mean("fees")
        se = result.total_stderr("fees")
        rows.append({
            "label": label,
            "n_venues": m,
            "total_fees": total,
            "total_fees_se": se,
            "venue_revenue": venue_take * total,
            "venue_revenue_se": venue_take * se,
            "per_lp_revenue": total / m,
            "per_lp_revenue_se": se / m,
        })
    return rows
