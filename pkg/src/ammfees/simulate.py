"""Monte Carlo simulation of fee-controlled order flow across venues.

Time-stepped thinning: each step draws, per venue and side, at most one
event with probability 1 - exp(-lambda*dt), where lambda is evaluated from
the pre-step state and the policy's fee at the current lattice slice.  All
draws of a step use the pre-step state; state updates apply afterwards.
Paths own independent RNG streams seeded as seed XOR path_index, so results
do not depend on chunking or scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .market import FlowParams, OracleSpec, sample_oracle
from .pools import InventoryGrid, build_grid

PER_PATH_STATS = ("fees", "n_buy", "n_sell", "vol_x", "vol_y",
                  "slip_num", "conv_num", "boundary_steps", "terminal_offset")

_CHUNK_FLOAT_BUDGET = 24_000_000


class ConfigurationError(ValueError):
    """Raised when a simulation or experiment configuration is inconsistent."""


@dataclass(frozen=True)
class SimConfig:
    """One simulation batch: market, policies, horizon and RNG seed."""

    horizon: float
    dt: float
    n_paths: int
    seed: int
    specs: list
    flow: FlowParams
    oracle: OracleSpec
    policies: list  # one FeePolicy per venue (entries may repeat one object)

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ConfigurationError("horizon and dt must be positive")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError(f"horizon/dt = {steps} is not an integer")
        if self.n_paths < 1:
            raise ConfigurationError("n_paths must be >= 1")
        m = len(self.specs)
        if self.flow.n_venues != m or len(self.policies) != m:
            raise ConfigurationError(
                f"venue count mismatch: {m} specs, {self.flow.n_venues} flow venues, "
                f"{len(self.policies)} policies"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def n_venues(self) -> int:
        return len(self.specs)


@dataclass
class TradeLog:
    """Flat arrays of executed trades (one entry per event)."""

    path: np.ndarray
    time: np.ndarray
    venue: np.ndarray
    side: np.ndarray  # +1 buy (Y leaves the pool), -1 sell
    size: np.ndarray
    exec_rate: np.ndarray
    mid_rate: np.ndarray
    fee_cash: np.ndarray

    def __len__(self) -> int:
        return self.path.size


@dataclass
class PathResult:
    """Per-venue outcome of a single simulated path."""

    path_index: int
    seed: int
    fees: np.ndarray
    n_buy: np.ndarray
    n_sell: np.ndarray
    vol_x: np.ndarray
    vol_y: np.ndarray
    slip_num: np.ndarray
    conv_num: np.ndarray
    boundary_steps: np.ndarray
    terminal_offset: np.ndarray
    log: Optional[TradeLog] = None


@dataclass
class SimResult:
    """Aggregated batch output with per-path statistics retained."""

    config: SimConfig
    per_path: dict
    log: Optional[TradeLog] = None
    snapshots: Optional[np.ndarray] = None  # (n_paths, n_snapshot_times, M)
    snapshot_steps: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.config.n_paths

    def mean(self, stat: str) -> np.ndarray:
        return self.per_path[stat].mean(axis=0)

    def stderr(self, stat: str) -> np.ndarray:
        a = self.per_path[stat]
        if a.shape[0] < 2:
            return np.zeros(a.shape[1])
        return a.std(axis=0, ddof=1) / np.sqrt(a.shape[0])

    def total_mean(self, stat: str) -> float:
        return float(self.per_path[stat].sum(axis=1).mean())

    def total_stderr(self, stat: str) -> float:
        a = self.per_path[stat].sum(axis=1)
        if a.shape[0] < 2:
            return 0.0
        return float(a.std(ddof=1) / np.sqrt(a.shape[0]))

    def path_result(self, p: int) -> PathResult:
        return PathResult(
            path_index=p, seed=self.config.seed ^ p,
            **{k: self.per_path[k][p] for k in PER_PATH_STATS},
        )


@dataclass
class _VenueContext:
    grid: InventoryGrid
    buy_tab: np.ndarray
    sell_tab: np.ndarray
    codec: object
    rivals: list
    top: int  # offset of the upper grid edge


def _policy_slices(cfg: SimConfig) -> np.ndarray:
    """Map simulation step index to policy lattice slice index."""
    n_times = cfg.policies[0].venue_tables(0).n_times
    for v in range(cfg.n_venues):
        if cfg.policies[v].venue_tables(v).n_times != n_times:
            raise ConfigurationError("policies disagree on the time lattice")
    n_slices = n_times - 1
    if n_slices < 1:
        raise ConfigurationError("policy lattice needs at least two time points")
    per = cfg.n_steps / n_slices
    if abs(per - round(per)) > 1e-9 or round(per) < 1:
        raise ConfigurationError(
            f"simulation steps ({cfg.n_steps}) must be an integer multiple of "
            f"policy slices ({n_slices})"
        )
    return np.repeat(np.arange(n_slices, dtype=np.int64), int(round(per)))


def _venue_contexts(cfg: SimConfig, grids) -> list:
    ctx = []
    for v in range(cfg.n_venues):
        tabs = cfg.policies[v].venue_tables(v)
        grid = grids[v]
        if tabs.buy.shape[1] != grid.size:
            raise ConfigurationError(
                f"policy for venue {v} covers {tabs.buy.shape[1]} states, grid has {grid.size}"
            )
        n_rivals = getattr(tabs.codec, "n_rivals", 0)
        rivals = [j for j in range(cfg.n_venues) if j != v]
        if n_rivals not in (0, len(rivals)):
            raise ConfigurationError(
                f"policy for venue {v} conditions on {n_rivals} rivals, market has {len(rivals)}"
            )
        ctx.append(_VenueContext(grid=grid, buy_tab=tabs.buy, sell_tab=tabs.sell,
                                 codec=tabs.codec, rivals=rivals, top=grid.size - 1))
    return ctx


def _chunk_size(cfg: SimConfig, requested) -> int:
    if requested is not None:
        return max(1, int(requested))
    per_path = cfg.n_steps * cfg.n_venues * 2
    return int(np.clip(_CHUNK_FLOAT_BUDGET // max(per_path, 1), 64, cfg.n_paths))


def _simulate_chunk(cfg: SimConfig, ctx: list, slices: np.ndarray,
                    path_ids: np.ndarray, collect_log: bool,
                    snapshot_steps=None):
    m = cfg.n_venues
    steps = cfg.n_steps
    dt = cfg.dt
    c = path_ids.size
    zeta = cfg.flow.zeta
    k0 = cfg.flow.k0
    kx = cfg.flow.k_cross
    k_tot = cfg.flow.k_total
    lam_b = cfg.flow.lambda_buy
    lam_s = cfg.flow.lambda_sell

    uniforms = np.empty((c, steps, m, 2))
    s_path = None
    brownian = cfg.oracle.mode == "arithmetic-brownian" and cfg.oracle.sigma > 0
    if brownian:
        s_path = np.empty((c, steps))
    times = np.arange(steps + 1) * dt
    for i, p in enumerate(path_ids):
        rng = np.random.default_rng(cfg.seed ^ int(p))
        uniforms[i] = rng.random((steps, m, 2))
        if brownian:
            s_path[i] = sample_oracle(cfg.oracle, times, rng)[:-1]

    state = np.full((c, m), ctx[0].top // 2, dtype=np.int64)
    for v in range(m):
        state[:, v] = ctx[v].top // 2

    stats = {name: np.zeros((c, m)) for name in
             ("fees", "vol_x", "vol_y", "slip_num", "conv_num")}
    counts = {name: np.zeros((c, m), dtype=np.int64) for name in
              ("n_buy", "n_sell", "boundary_steps")}
    log_chunks = [] if collect_log else None

    snap_lookup = {}
    snapshots = None
    if snapshot_steps is not None:
        snap_lookup = {int(k): i for i, k in enumerate(snapshot_steps)}
        snapshots = np.empty((c, len(snap_lookup), m), dtype=np.int64)

    ev_buy = np.empty((c, m), dtype=bool)
    ev_sell = np.empty((c, m), dtype=bool)
    for k in range(steps):
        if k in snap_lookup:
            snapshots[:, snap_lookup[k], :] = state
        t_slice = slices[k]
        s_k = s_path[:, k] if brownian else cfg.oracle.s0
        with np.errstate(invalid="ignore"):
            for v in range(m):
                vc = ctx[v]
                r = state[:, v]
                if vc.rivals:
                    cols = vc.codec.columns(state[:, vc.rivals])
                else:
                    cols = np.zeros(c, dtype=np.int64)
                grid = vc.grid
                zb = grid.z_buy[r]
                zs = grid.z_sell[r]
                db = grid.delta_buy[r]
                ds = grid.delta_sell[r]
                mfee = vc.buy_tab[t_slice, r, cols]
                pfee = vc.sell_tab[t_slice, r, cols]

                cross_b = 0.0
                cross_s = 0.0
                for rv in vc.rivals:
                    kxv = float(kx[v, rv])
                    if kxv != 0.0:
                        cross_b = cross_b + kxv * ctx[rv].grid.z_buy[state[:, rv]]
                        cross_s = cross_s + kxv * ctx[rv].grid.z_sell[state[:, rv]]

                bm = (1.0 + mfee) * zb
                sm = (1.0 - pfee) * zs
                lam_buy = lam_b[v] * np.exp((k0[v] * (s_k - zeta) + cross_b - k_tot[v] * bm) * db)
                lam_sell = lam_s[v] * np.exp((k_tot[v] * sm - k0[v] * (s_k + zeta) - cross_s) * ds)
                can_buy = r > 0
                can_sell = r < vc.top
                p_buy = np.where(can_buy, -np.expm1(-lam_buy * dt), 0.0)
                p_sell = np.where(can_sell, -np.expm1(-lam_sell * dt), 0.0)
                eb = uniforms[:, k, v, 0] < p_buy
                es = uniforms[:, k, v, 1] < p_sell
                ev_buy[:, v] = eb
                ev_sell[:, v] = es

                zm = grid.z_marginal[r]
                fee_b = np.where(eb, mfee * zb * db, 0.0)
                fee_s = np.where(es, pfee * zs * ds, 0.0)
                stats["fees"][:, v] += fee_b + fee_s
                stats["vol_x"][:, v] += np.where(eb, zb * db, 0.0) + np.where(es, zs * ds, 0.0)
                stats["vol_y"][:, v] += np.where(eb, db, 0.0) + np.where(es, ds, 0.0)
                stats["slip_num"][:, v] += (np.where(eb, ((1.0 + mfee) * zb - zm) * db, 0.0)
                                            + np.where(es, (zm - (1.0 - pfee) * zs) * ds, 0.0))
                stats["conv_num"][:, v] += (np.where(eb, (zb - zm) * db, 0.0)
                                            + np.where(es, (zm - zs) * ds, 0.0))
                counts["n_buy"][:, v] += eb
                counts["n_sell"][:, v] += es
                counts["boundary_steps"][:, v] += (r == 0) | (r == vc.top)

                if collect_log and (eb.any() or es.any()):
                    for side, ev, rate, size, fee in ((1, eb, (1.0 + mfee) * zb, db, fee_b),
                                                      (-1, es, (1.0 - pfee) * zs, ds, fee_s)):
                        idx = np.nonzero(ev)[0]
                        if idx.size:
                            log_chunks.append((
                                path_ids[idx], np.full(idx.size, k * dt + dt),
                                np.full(idx.size, v, dtype=np.int64),
                                np.full(idx.size, side, dtype=np.int64),
                                size[idx], rate[idx], zm[idx], fee[idx],
                            ))
        state += ev_sell.astype(np.int64) - ev_buy.astype(np.int64)

    out = {**stats, **{k_: v_.astype(float) for k_, v_ in counts.items()}}
    out["terminal_offset"] = state.astype(float)
    log = None
    if collect_log:
        if log_chunks:
            cols = [np.concatenate([chunk[i] for chunk in log_chunks]) for i in range(8)]
        else:
            cols = [np.empty(0)] * 8
        log = TradeLog(*cols)
    return out, log, snapshots


def run_batch(cfg: SimConfig, collect_log: bool = False,
              chunk_size: Optional[int] = None, grids=None,
              snapshot_steps=None) -> SimResult:
    """Simulate all paths; deterministic for a given seed regardless of chunking.

    ``snapshot_steps`` optionally records the joint inventory state at the
    start of the listed step indices (used by routing analytics).
    """
    if grids is None:
        grids = [build_grid(spec) for spec in cfg.specs]
    ctx = _venue_contexts(cfg, grids)
    slices = _policy_slices(cfg)
    chunk = _chunk_size(cfg, chunk_size)

    per_path = {name: np.empty((cfg.n_paths, cfg.n_venues)) for name in PER_PATH_STATS}
    logs = [] if collect_log else None
    snaps = None
    if snapshot_steps is not None:
        snaps = np.empty((cfg.n_paths, len(snapshot_steps), cfg.n_venues), dtype=np.int64)
    for start in range(0, cfg.n_paths, chunk):
        ids = np.arange(start, min(start + chunk, cfg.n_paths))
        out, log, chunk_snaps = _simulate_chunk(cfg, ctx, slices, ids, collect_log,
                                                snapshot_steps)
        for name in PER_PATH_STATS:
            per_path[name][ids] = out[name]
        if collect_log and log is not None:
            logs.append(log)
        if snaps is not None:
            snaps[ids] = chunk_snaps

    log = None
    if collect_log:
        log = TradeLog(*[np.concatenate([getattr(l, f) for l in logs]) if logs else np.empty(0)
                         for f in ("path", "time", "venue", "side", "size",
                                   "exec_rate", "mid_rate", "fee_cash")])
    return SimResult(config=cfg, per_path=per_path, log=log, snapshots=snaps,
                     snapshot_steps=(np.asarray(snapshot_steps, dtype=np.int64)
                                     if snapshot_steps is not None else None))


def simulate_path(cfg: SimConfig, path_index: int, grids=None) -> PathResult:
    """Simulate one path (with its trade log); same kernel as :func:`run_batch`."""
    if not 0 <= path_index < cfg.n_paths:
        raise ConfigurationError(f"path_index {path_index} outside [0, {cfg.n_paths})")
    if grids is None:
        grids = [build_grid(spec) for spec in cfg.specs]
    ctx = _venue_contexts(cfg, grids)
    slices = _policy_slices(cfg)
    out, log, _ = _simulate_chunk(cfg, ctx, slices, np.array([path_index]), True)
    return PathResult(
        path_index=path_index, seed=cfg.seed ^ path_index,
        **{k: out[k][0] for k in PER_PATH_STATS}, log=log,
    )
