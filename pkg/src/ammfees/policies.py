"""Fee policies: equilibrium tables and their linear/constant reductions.

Every policy materialises, per venue, dense fee tables of shape
(n_times, n_own_states, n_cols) plus a codec mapping the rivals' inventory
offsets to a column.  The codec lets structurally identical venues share
one table and lets symmetric games store one column per rival multiset
instead of per ordered tuple.
"""

from __future__ import annotations

import csv
import itertools
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .market import FlowParams
from .pools import InventoryGrid
from .solver import (
    SolverError,
    build_generator,
    equilibrium_fees,
    make_time_grid,
    solve_w,
)

_TABLE_BUDGET_BYTES = 4 << 30


# ---------------------------------------------------------------------------
# Rival-state codecs


class TrivialCodec:
    """Every rival state maps to the single column 0."""

    n_cols = 1

    def __init__(self, n_rivals: int):
        self.n_rivals = n_rivals

    def columns(self, offsets: np.ndarray) -> np.ndarray:
        return np.zeros(offsets.shape[0], dtype=np.int64)

    def representatives(self):
        return iter([()])


class ProductCodec:
    """Row-major enumeration of ordered rival offset tuples."""

    def __init__(self, sizes):
        self.sizes = tuple(int(s) for s in sizes)
        self.n_rivals = len(self.sizes)
        strides = []
        acc = 1
        for s in reversed(self.sizes):
            strides.append(acc)
            acc *= s
        self.strides = np.array(list(reversed(strides)), dtype=np.int64)
        self.n_cols = acc

    def columns(self, offsets: np.ndarray) -> np.ndarray:
        return offsets @ self.strides

    def representatives(self):
        return itertools.product(*(range(s) for s in self.sizes))


class SortedCodec:
    """One column per rival offset multiset (exchangeable rivals)."""

    def __init__(self, size: int, n_rivals: int):
        self.size = int(size)
        self.n_rivals = int(n_rivals)
        reps = list(itertools.combinations_with_replacement(range(self.size), self.n_rivals))
        self.reps = reps
        self.n_cols = len(reps)
        lookup = np.empty((self.size,) * self.n_rivals, dtype=np.int64)
        for col, rep in enumerate(reps):
            for perm in set(itertools.permutations(rep)):
                lookup[perm] = col
        self._lookup = lookup

    def columns(self, offsets: np.ndarray) -> np.ndarray:
        return self._lookup[tuple(offsets[:, i] for i in range(self.n_rivals))]

    def representatives(self):
        return iter(self.reps)


class RivalSumCodec:
    """Columns keyed by the sum of rival offsets (linear symmetric fees)."""

    def __init__(self, size: int, n_rivals: int):
        self.size = int(size)
        self.n_rivals = int(n_rivals)
        self.n_cols = n_rivals * (size - 1) + 1 if n_rivals else 1

    def columns(self, offsets: np.ndarray) -> np.ndarray:
        if self.n_rivals == 0:
            return np.zeros(offsets.shape[0], dtype=np.int64)
        return offsets.sum(axis=1)


@dataclass
class VenueTables:
    """Dense per-venue fee tables consumed by the simulator.

    ``buy[t, own, col]`` / ``sell[t, own, col]``; entries at the own-grid
    edge where the side cannot execute are NaN for table-backed kinds.
    """

    buy: np.ndarray
    sell: np.ndarray
    codec: object
    kind: str

    @property
    def n_times(self) -> int:
        return self.buy.shape[0]


# ---------------------------------------------------------------------------
# Policy kinds


class FeePolicy:
    """Common surface of all policy kinds."""

    kind: str = ""

    def venue_tables(self, venue: int) -> VenueTables:
        raise NotImplementedError

    @property
    def n_venues(self) -> int:
        raise NotImplementedError


@dataclass
class EquilibriumPolicy(FeePolicy):
    kind = "equilibrium"
    time_grid: np.ndarray
    tables: list
    k_total: np.ndarray
    oracle_value: float
    generator_mode: str = "pde"

    def venue_tables(self, venue: int) -> VenueTables:
        return self.tables[venue]

    @property
    def n_venues(self) -> int:
        return len(self.tables)


@dataclass
class LinearCoefficients:
    """Per-time plane coefficients for one venue-side.

    ``intercept`` has shape (n_times,), ``own_slope`` (n_times,),
    ``rival_slopes`` (n_times, n_rivals); slopes act on grid-index offsets
    from the center state.
    """

    intercept: np.ndarray
    own_slope: np.ndarray
    rival_slopes: np.ndarray


@dataclass
class LinearPolicy(FeePolicy):
    kind = "linear"
    time_grid: np.ndarray
    buy_coeffs: list
    sell_coeffs: list
    window: int
    n_own: list
    symmetric: bool
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_venues(self) -> int:
        return len(self.buy_coeffs)

    def venue_tables(self, venue: int) -> VenueTables:
        if venue not in self._cache:
            self._cache[venue] = self._materialize(venue)
        return self._cache[venue]

    def _materialize(self, venue: int) -> VenueTables:
        n_own = self.n_own[venue]
        center = (n_own - 1) // 2
        n_t = len(self.time_grid)
        n_rivals = self.buy_coeffs[venue].rival_slopes.shape[1]
        sides = {}
        for name, coeffs in (("buy", self.buy_coeffs[venue]), ("sell", self.sell_coeffs[venue])):
            own = np.arange(n_own)
            # The side undefined at its own grid edge is clamped to the
            # plane's value at the nearest interior state.
            own_eff = np.clip(own, 1, n_own - 1) if name == "buy" else np.clip(own, 0, n_own - 2)
            d_own = (own_eff - center)[np.newaxis, :, np.newaxis]
            base = (coeffs.intercept[:, np.newaxis, np.newaxis]
                    + coeffs.own_slope[:, np.newaxis, np.newaxis] * d_own)
            if n_rivals == 0:
                codec = TrivialCodec(0)
                tab = np.broadcast_to(base, (n_t, n_own, 1)).copy()
            elif self.symmetric:
                codec = RivalSumCodec(n_own, n_rivals)
                slope = coeffs.rival_slopes.mean(axis=1)
                d_riv = (np.arange(codec.n_cols) - n_rivals * center)[np.newaxis, np.newaxis, :]
                tab = base + slope[:, np.newaxis, np.newaxis] * d_riv
            else:
                codec = ProductCodec([n_own] * n_rivals)
                reps = np.array(list(codec.representatives()), dtype=np.int64)
                riv_term = coeffs.rival_slopes @ (reps - center).T
                tab = base + riv_term[:, np.newaxis, :]
            sides[name] = tab
        return VenueTables(buy=sides["buy"], sell=sides["sell"],
                           codec=codec, kind=self.kind)


@dataclass
class ConstantPolicy(FeePolicy):
    kind = "constant"
    time_grid: np.ndarray
    values: np.ndarray
    n_own: list
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_venues(self) -> int:
        return len(self.values)

    def venue_tables(self, venue: int) -> VenueTables:
        if venue not in self._cache:
            n_t = len(self.time_grid)
            shape = (n_t, self.n_own[venue], 1)
            tab = np.full(shape, float(self.values[venue]))
            self._cache[venue] = VenueTables(buy=tab, sell=tab.copy(),
                                             codec=TrivialCodec(0), kind=self.kind)
        return self._cache[venue]


@dataclass
class ZeroPolicy(FeePolicy):
    kind = "zero"
    time_grid: np.ndarray
    n_own: list
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_venues(self) -> int:
        return len(self.n_own)

    def venue_tables(self, venue: int) -> VenueTables:
        if venue not in self._cache:
            tab = np.zeros((len(self.time_grid), self.n_own[venue], 1))
            self._cache[venue] = VenueTables(buy=tab, sell=tab.copy(),
                                             codec=TrivialCodec(0), kind=self.kind)
        return self._cache[venue]


# ---------------------------------------------------------------------------
# Solving into a policy


def exchangeable_venues(grids, params: FlowParams) -> bool:
    """True when every venue is statistically identical to every other."""
    specs = {g.spec for g in grids}
    if len(specs) != 1:
        return False
    if np.unique(params.lambda_buy).size != 1 or np.unique(params.lambda_sell).size != 1:
        return False
    if np.unique(params.k0).size != 1:
        return False
    off_diag = params.k_cross[~np.eye(params.n_venues, dtype=bool)]
    return off_diag.size == 0 or np.unique(off_diag).size == 1


def _fees_from_w(w: np.ndarray, grid: InventoryGrid, k: float):
    zb, db = grid.z_buy, grid.delta_buy
    zs, ds = grid.z_sell, grid.delta_sell
    buy = np.full_like(w, np.nan)
    sell = np.full_like(w, np.nan)
    buy[:, 1:] = (1.0 + np.log(w[:, 1:] / w[:, :-1])) / (k * zb[1:] * db[1:])
    sell[:, :-1] = (1.0 + np.log(w[:, :-1] / w[:, 1:])) / (k * zs[:-1] * ds[:-1])
    return buy, sell


def _solve_venue_tables(venue: int, grids, params: FlowParams, s: float,
                        time_grid: np.ndarray, codec, mode: str, dtype) -> VenueTables:
    grid = grids[venue]
    k = float(params.k_total[venue])
    n_t = time_grid.size
    shape = (n_t, grid.size, codec.n_cols)
    if 2 * np.dtype(dtype).itemsize * np.prod(shape) > _TABLE_BUDGET_BYTES:
        raise SolverError(
            f"fee tables of shape {shape} exceed the memory budget; "
            "reduce the grid or use exchangeable venues"
        )
    buy = np.empty(shape, dtype=dtype)
    sell = np.empty(shape, dtype=dtype)
    rivals = params.rivals(venue)
    for col, offsets in enumerate(codec.representatives()):
        signed = tuple(off - grids[r].halfwidth for r, off in zip(rivals, offsets))
        gen = build_generator(venue, signed, s, grids, params, mode)
        w = solve_w(gen, time_grid)
        b, sl = _fees_from_w(w, grid, k)
        buy[:, :, col] = b
        sell[:, :, col] = sl
    return VenueTables(buy=buy, sell=sell, codec=codec, kind="equilibrium")


def solve_equilibrium_policy(grids, params: FlowParams, s: float, time_grid,
                             mode: str = "pde", dtype=None) -> EquilibriumPolicy:
    """Solve every venue's fee surface at oracle value ``s``.

    Exchangeable venues are detected and solved once, sharing tables; a
    symmetric game with three or more venues additionally collapses rival
    tuples to multisets.
    """
    t = np.asarray(time_grid, dtype=float)
    m = params.n_venues
    symmetric = m > 1 and exchangeable_venues(grids, params)
    if dtype is None:
        n_cols_full = int(np.prod([grids[r].size for r in params.rivals(0)])) if m > 1 else 1
        dtype = np.float64 if n_cols_full <= 4096 else np.float32

    if symmetric:
        size = grids[0].size
        codec = (SortedCodec(size, m - 1) if m >= 3 else
                 ProductCodec([size]) if m == 2 else TrivialCodec(0))
        shared = _solve_venue_tables(0, grids, params, s, t, codec, mode, dtype)
        tables = [shared] * m
    else:
        tables = []
        for v in range(m):
            sizes = [grids[r].size for r in params.rivals(v)]
            codec = ProductCodec(sizes) if sizes else TrivialCodec(0)
            tables.append(_solve_venue_tables(v, grids, params, s, t, codec, mode, dtype))
    return EquilibriumPolicy(time_grid=t, tables=tables,
                             k_total=params.k_total.copy(),
                             oracle_value=float(s), generator_mode=mode)


def policy_from_surfaces(surfaces, grids, oracle_value: float = float("nan")) -> EquilibriumPolicy:
    """Equilibrium policy from explicitly solved w-surfaces (one per venue)."""
    tables = []
    for surf, grid in zip(surfaces, grids):
        buy, sell = equilibrium_fees(surf, grid)
        codec = ProductCodec(surf.rival_sizes) if surf.rival_sizes else TrivialCodec(0)
        tables.append(VenueTables(buy=buy, sell=sell, codec=codec, kind="equilibrium"))
    return EquilibriumPolicy(
        time_grid=surfaces[0].time_grid, tables=tables,
        k_total=np.array([s.k_total for s in surfaces]),
        oracle_value=oracle_value,
    )


# ---------------------------------------------------------------------------
# Linear and constant reductions


def fit_linear_policy(policy: EquilibriumPolicy, window: int, grids,
                      symmetric: bool | None = None) -> LinearPolicy:
    """Least-squares plane fit of each fee surface around the center state.

    The neighborhood spans ``window`` grid steps in the own index and in
    every rival index; one plane is fitted per time point and side.
    """
    n_venues = policy.n_venues
    if symmetric is None:
        symmetric = n_venues > 1 and all(
            policy.venue_tables(v) is policy.venue_tables(0) for v in range(n_venues)
        )
    buy_coeffs, sell_coeffs, n_own = [], [], []
    for v in range(n_venues):
        tabs = policy.venue_tables(v)
        n = tabs.buy.shape[1]
        center = (n - 1) // 2
        if window < 1 or center - window < 1 or center + window > n - 2:
            raise ValueError(f"window {window} outside interior grid bounds for venue {v}")
        n_rivals = getattr(tabs.codec, "n_rivals", 0)
        own_range = np.arange(center - window, center + window + 1)
        riv_ranges = [own_range] * n_rivals
        points = list(itertools.product(own_range, *riv_ranges))
        pts = np.array(points, dtype=np.int64)
        design = np.column_stack([np.ones(len(pts))] + [pts[:, i] - center for i in range(pts.shape[1])])
        pinv = np.linalg.pinv(design)
        cols = (tabs.codec.columns(pts[:, 1:]) if n_rivals
                else np.zeros(len(pts), dtype=np.int64))
        for name, table, out in (("buy", tabs.buy, buy_coeffs), ("sell", tabs.sell, sell_coeffs)):
            fees = np.asarray(table[:, pts[:, 0], cols], dtype=float)
            coeffs = fees @ pinv.T
            out.append(LinearCoefficients(
                intercept=coeffs[:, 0],
                own_slope=coeffs[:, 1] if coeffs.shape[1] > 1 else np.zeros(len(coeffs)),
                rival_slopes=coeffs[:, 2:] if coeffs.shape[1] > 2 else np.zeros((len(coeffs), 0)),
            ))
        n_own.append(n)
    return LinearPolicy(time_grid=policy.time_grid, buy_coeffs=buy_coeffs,
                        sell_coeffs=sell_coeffs, window=window, n_own=n_own,
                        symmetric=symmetric)


def constant_policy(policy: EquilibriumPolicy, at_time: float = 0.5) -> ConstantPolicy:
    """One scalar per venue: the average of its two center fees at ``at_time``."""
    t = policy.time_grid
    idx = int(np.argmin(np.abs(t - at_time)))
    if abs(float(t[idx]) - at_time) > 1e-9:
        raise ValueError(f"time grid has no point at t={at_time}")
    values = []
    n_own = []
    for v in range(policy.n_venues):
        tabs = policy.venue_tables(v)
        n = tabs.buy.shape[1]
        center = (n - 1) // 2
        n_rivals = getattr(tabs.codec, "n_rivals", 0)
        col = (int(tabs.codec.columns(np.full((1, n_rivals), center, dtype=np.int64))[0])
               if n_rivals else 0)
        values.append(0.5 * (float(tabs.buy[idx, center, col]) + float(tabs.sell[idx, center, col])))
        n_own.append(n)
    return ConstantPolicy(time_grid=policy.time_grid, values=np.array(values), n_own=n_own)


def zero_policy(time_grid, grids) -> ZeroPolicy:
    return ZeroPolicy(time_grid=np.asarray(time_grid, dtype=float),
                      n_own=[g.size for g in grids])


# ---------------------------------------------------------------------------
# Portable serialization: CSV slices + JSON manifest


def export_policy(policy: EquilibriumPolicy, grids, out_dir, settings: dict | None = None,
                  time_stride: int = 1) -> dict:
    """Write per-time-slice fee CSVs plus a manifest; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    t = policy.time_grid
    manifest = {
        "kind": policy.kind,
        "n_venues": policy.n_venues,
        "time_grid": {"t_end": float(t[-1]), "steps": int(t.size - 1), "stride": int(time_stride)},
        "k_total": [float(k) for k in policy.k_total],
        "oracle_value": policy.oracle_value,
        "generator_mode": policy.generator_mode,
        "grids": [g.spec.to_dict() for g in grids],
        "settings": settings or {},
    }
    for v in range(policy.n_venues):
        tabs = policy.venue_tables(v)
        vdir = os.path.join(out_dir, f"venue{v}")
        os.makedirs(vdir, exist_ok=True)
        n_rivals = getattr(tabs.codec, "n_rivals", 0)
        reps = (np.array(list(tabs.codec.representatives()), dtype=np.int64)
                if n_rivals else np.zeros((1, 0), dtype=np.int64))
        cols = (tabs.codec.columns(reps) if n_rivals else np.zeros(1, dtype=np.int64))
        half = grids[v].halfwidth
        for k in range(0, t.size, time_stride):
            path = os.path.join(vdir, f"slice_{k:05d}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                header = (["own_j"] + [f"rival{r}_j" for r in range(n_rivals)]
                          + ["buy_fee", "sell_fee"])
                writer.writerow(header)
                for own in range(tabs.buy.shape[1]):
                    for rep, col in zip(reps, cols):
                        row = [own - half] + [int(o - half) for o in rep]
                        row += [repr(float(tabs.buy[k, own, col])),
                                repr(float(tabs.sell[k, own, col]))]
                        writer.writerow(row)
    with open(os.path.join(out_dir, "policy_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def load_policy(out_dir, grids=None) -> EquilibriumPolicy:
    """Reload a policy exported with stride 1."""
    with open(os.path.join(out_dir, "policy_manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest["time_grid"]["stride"] != 1:
        raise ValueError("only stride-1 exports can be reloaded")
    t = make_time_grid(manifest["time_grid"]["t_end"], manifest["time_grid"]["steps"])
    tables = []
    for v in range(manifest["n_venues"]):
        vdir = os.path.join(out_dir, f"venue{v}")
        slices = sorted(os.listdir(vdir))
        first = np.genfromtxt(os.path.join(vdir, slices[0]), delimiter=",", names=True)
        n_rivals = sum(1 for name in first.dtype.names if name.startswith("rival"))
        own = first["own_j"].astype(int)
        n_own = own.max() - own.min() + 1
        half = -own.min()
        if n_rivals:
            riv = np.column_stack([first[f"rival{r}_j"].astype(int) + half for r in range(n_rivals)])
            uniq = sorted({tuple(r) for r in riv})
            codec = (SortedCodec(n_own, n_rivals)
                     if len(uniq) < n_own ** n_rivals else ProductCodec([n_own] * n_rivals))
        else:
            codec = TrivialCodec(0)
        buy = np.empty((t.size, n_own, codec.n_cols))
        sell = np.empty_like(buy)
        for k, name in enumerate(slices):
            data = np.genfromtxt(os.path.join(vdir, name), delimiter=",", names=True)
            rows_own = data["own_j"].astype(int) + half
            if n_rivals:
                offs = np.column_stack([data[f"rival{r}_j"].astype(int) + half
                                        for r in range(n_rivals)])
                rows_col = codec.columns(offs)
            else:
                rows_col = np.zeros(rows_own.size, dtype=np.int64)
            buy[k, rows_own, rows_col] = data["buy_fee"]
            sell[k, rows_own, rows_col] = data["sell_fee"]
        tables.append(VenueTables(buy=buy, sell=sell, codec=codec, kind="equilibrium"))
    return EquilibriumPolicy(time_grid=t, tables=tables,
                             k_total=np.array(manifest["k_total"]),
                             oracle_value=manifest["oracle_value"],
                             generator_mode=manifest["generator_mode"])
