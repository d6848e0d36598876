"""Independent cross-checks for the solver and the simulator.

These routines deliberately avoid the production code paths: the RK4
integrator and the truncated Taylor series validate the matrix-exponential
solve, and the forward-equation oracle computes exact expected trade
statistics of the continuous-time model, against which the Monte Carlo
engine (and its discretization bias) can be measured.
"""

from __future__ import annotations

import numpy as np

from .simulate import SimConfig, ConfigurationError, _policy_slices, _venue_contexts
from .pools import build_grid
from .solver import GeneratorMatrix


def _apply_tridiagonal(up: np.ndarray, down: np.ndarray, w: np.ndarray) -> np.ndarray:
    """A @ w for the generator's banded structure, without forming A."""
    out = np.zeros_like(w)
    out[1:] += down[1:] * w[:-1]
    out[:-1] += up[:-1] * w[1:]
    return out


def rk4_w(gen: GeneratorMatrix, time_grid, substeps: int = 4) -> np.ndarray:
    """Integrate dw/dtau = A w from w(tau=0) = 1, reported on the time grid.

    tau = T - t, so the output at grid index k equals w(t_k); index -1 is
    the all-ones terminal condition.
    """
    t = np.asarray(time_grid, dtype=float)
    up = np.nan_to_num(gen.up, nan=0.0)
    down = np.nan_to_num(gen.down, nan=0.0)
    h = float(t[1] - t[0]) / substeps
    out = np.empty((t.size, gen.dim))
    w = np.ones(gen.dim)
    out[-1] = w
    for k in range(t.size - 2, -1, -1):
        for _ in range(substeps):
            k1 = _apply_tridiagonal(up, down, w)
            k2 = _apply_tridiagonal(up, down, w + 0.5 * h * k1)
            k3 = _apply_tridiagonal(up, down, w + 0.5 * h * k2)
            k4 = _apply_tridiagonal(up, down, w + h * k3)
            w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k] = w
    return out


def series_w(gen: GeneratorMatrix, tau: float, tol: float = 1e-16,
             max_terms: int = 400) -> np.ndarray:
    """Brute-force truncated Taylor series of exp(A tau) 1."""
    up = np.nan_to_num(gen.up, nan=0.0)
    down = np.nan_to_num(gen.down, nan=0.0)
    term = np.ones(gen.dim)
    total = term.copy()
    for n in range(1, max_terms):
        term = _apply_tridiagonal(up, down, term) * (tau / n)
        total += term
        if np.max(np.abs(term)) <= tol * np.max(total):
            return total
    raise RuntimeError("series did not converge; increase max_terms")


def bernoulli_expected_stats(cfg: SimConfig, grids=None) -> dict:
    """Exact expected per-venue statistics of the discretized event scheme.

    Forward recursion of the discrete-time chain the simulator actually
    samples: per step and venue-side, one event with probability
    1 - exp(-lambda*dt).  Against :func:`ctmc_expected_stats` this isolates
    the time-discretization bias; against the Monte Carlo engine it leaves
    pure sampling noise.
    """
    if cfg.oracle.mode != "constant" and cfg.oracle.sigma > 0:
        raise ConfigurationError("expectation oracles require a constant oracle price")
    if grids is None:
        grids = [build_grid(spec) for spec in cfg.specs]
    ctx = _venue_contexts(cfg, grids)
    m = cfg.n_venues
    sizes = tuple(c.grid.size for c in ctx)
    if int(np.prod(sizes)) > 2_000_000:
        raise ConfigurationError("joint state space too large for the oracle")

    offs = np.indices(sizes).reshape(m, -1).T
    s = cfg.oracle.s0
    zeta, k0, kx, k_tot = cfg.flow.zeta, cfg.flow.k0, cfg.flow.k_cross, cfg.flow.k_total
    slices = _policy_slices(cfg)
    dt = cfg.dt

    p = np.zeros(sizes)
    p[tuple(c.top // 2 for c in ctx)] = 1.0
    acc = np.zeros((m, 5))  # n_buy, n_sell, fees, vol_x, vol_y

    def venue_fields(v, k_slice):
        gv_grid = ctx[v].grid
        r = offs[:, v]
        cols = (ctx[v].codec.columns(offs[:, ctx[v].rivals]) if ctx[v].rivals
                else np.zeros(offs.shape[0], dtype=np.int64))
        mfee = np.nan_to_num(ctx[v].buy_tab[k_slice, r, cols].astype(float))
        pfee = np.nan_to_num(ctx[v].sell_tab[k_slice, r, cols].astype(float))
        zb, zs = gv_grid.z_buy[r], gv_grid.z_sell[r]
        db, ds = gv_grid.delta_buy[r], gv_grid.delta_sell[r]
        cross_b = np.zeros(offs.shape[0])
        cross_s = np.zeros(offs.shape[0])
        for rv in ctx[v].rivals:
            kxv = float(kx[v, rv])
            if kxv != 0.0:
                cross_b += kxv * ctx[rv].grid.z_buy[offs[:, rv]]
                cross_s += kxv * ctx[rv].grid.z_sell[offs[:, rv]]
        lam_b = np.where(r > 0, cfg.flow.lambda_buy[v] * np.exp(
            (k0[v] * (s - zeta) + cross_b - k_tot[v] * (1.0 + mfee) * zb) * db), 0.0)
        lam_s = np.where(r < ctx[v].top, cfg.flow.lambda_sell[v] * np.exp(
            (k_tot[v] * (1.0 - pfee) * zs - k0[v] * (s + zeta) - cross_s) * ds), 0.0)
        pb = (-np.expm1(-lam_b * dt)).reshape(sizes)
        ps = (-np.expm1(-lam_s * dt)).reshape(sizes)
        return (pb, ps, (mfee * zb * db).reshape(sizes), (pfee * zs * ds).reshape(sizes),
                (zb * db).reshape(sizes), (zs * ds).reshape(sizes),
                db.reshape(sizes), ds.reshape(sizes))

    def shift(a, axis, direction):
        out = np.zeros_like(a)
        src = [slice(None)] * m
        dst = [slice(None)] * m
        if direction < 0:
            src[axis], dst[axis] = slice(1, None), slice(0, -1)
        else:
            src[axis], dst[axis] = slice(0, -1), slice(1, None)
        out[tuple(dst)] = a[tuple(src)]
        return out

    import itertools as _it

    current_slice = -1
    fields = move_weights = None
    for k, k_slice in enumerate(slices):
        if k_slice != current_slice:
            fields = [venue_fields(v, k_slice) for v in range(m)]
            # Per venue: net inventory move -1/0/+1 with both-sides draws
            # combined; all probabilities conditioned on the pre-step state.
            move_weights = []
            for v in range(m):
                pb, ps = fields[v][0], fields[v][1]
                down = pb * (1.0 - ps)
                up = ps * (1.0 - pb)
                move_weights.append({-1: down, 0: 1.0 - down - up, +1: up})
            current_slice = k_slice
        for v in range(m):
            pb, ps, fee_b, fee_s, nb, ns, db, ds = fields[v]
            acc[v, 0] += float((p * pb).sum())
            acc[v, 1] += float((p * ps).sum())
            acc[v, 2] += float((p * (pb * fee_b + ps * fee_s)).sum())
            acc[v, 3] += float((p * (pb * nb + ps * ns)).sum())
            acc[v, 4] += float((p * (pb * db + ps * ds)).sum())
        # Simultaneous venue moves: expand over all joint move combinations
        # so every factor is evaluated at the source state.
        p_next = np.zeros_like(p)
        for moves in _it.product((-1, 0, 1), repeat=m):
            weighted = p
            for v, mv in enumerate(moves):
                weighted = weighted * move_weights[v][mv]
            for v, mv in enumerate(moves):
                if mv:
                    weighted = shift(weighted, v, mv)
            p_next += weighted
        p = p_next

    return {
        "n_buy": acc[:, 0], "n_sell": acc[:, 1], "fees": acc[:, 2],
        "vol_x": acc[:, 3], "vol_y": acc[:, 4],
        "probability_mass": float(p.sum()),
    }


def ctmc_expected_stats(cfg: SimConfig, grids=None, substeps: int = 2) -> dict:
    """Exact expected per-venue statistics of the continuous-time model.

    Integrates the forward (master) equation of the joint inventory chain
    across the policy lattice, with piecewise-constant rates within each
    slice, accumulating expected buy/sell counts, fee revenue and notional
    volume.  Only usable with a constant oracle.
    """
    if cfg.oracle.mode != "constant" and cfg.oracle.sigma > 0:
        raise ConfigurationError("forward-equation oracle requires a constant oracle price")
    if grids is None:
        grids = [build_grid(spec) for spec in cfg.specs]
    ctx = _venue_contexts(cfg, grids)
    m = cfg.n_venues
    sizes = tuple(c.grid.size for c in ctx)
    n_states = int(np.prod(sizes))
    if n_states > 2_000_000:
        raise ConfigurationError(f"joint state space too large for the oracle ({n_states})")

    offs = np.indices(sizes).reshape(m, -1).T  # (n_states, M) offsets
    s = cfg.oracle.s0
    zeta = cfg.flow.zeta
    k0 = cfg.flow.k0
    kx = cfg.flow.k_cross
    k_tot = cfg.flow.k_total

    slices = _policy_slices(cfg)
    slice_ids, slice_counts = np.unique(slices, return_counts=True)
    slice_dt = cfg.dt * slice_counts[0]

    # Static per-venue geometry fields over the joint lattice.
    geo = []
    for v in range(m):
        r = offs[:, v]
        g = ctx[v].grid
        cross_b = np.zeros(n_states)
        cross_s = np.zeros(n_states)
        for rv in ctx[v].rivals:
            kxv = float(kx[v, rv])
            if kxv != 0.0:
                cross_b += kxv * ctx[rv].grid.z_buy[offs[:, rv]]
                cross_s += kxv * ctx[rv].grid.z_sell[offs[:, rv]]
        cols = (ctx[v].codec.columns(offs[:, ctx[v].rivals]) if ctx[v].rivals
                else np.zeros(n_states, dtype=np.int64))
        geo.append({
            "r": r, "cols": cols, "zb": g.z_buy[r], "zs": g.z_sell[r],
            "db": g.delta_buy[r], "ds": g.delta_sell[r],
            "cross_b": cross_b, "cross_s": cross_s,
            "can_buy": r > 0, "can_sell": r < ctx[v].top,
        })

    p = np.zeros(sizes)
    p[tuple(c.top // 2 for c in ctx)] = 1.0
    acc = np.zeros((m, 5))  # n_buy, n_sell, fees, vol_x, vol_y

    def shift(a, axis, direction):
        out = np.zeros_like(a)
        src = [slice(None)] * m
        dst = [slice(None)] * m
        if direction < 0:  # mass moves to the lower neighbor
            src[axis] = slice(1, None)
            dst[axis] = slice(0, -1)
        else:
            src[axis] = slice(0, -1)
            dst[axis] = slice(1, None)
        out[tuple(dst)] = a[tuple(src)]
        return out

    for k_slice in slice_ids:
        rate_b, rate_s, fields = [], [], []
        for v in range(m):
            gv = geo[v]
            mfee = np.nan_to_num(ctx[v].buy_tab[k_slice, gv["r"], gv["cols"]].astype(float))
            pfee = np.nan_to_num(ctx[v].sell_tab[k_slice, gv["r"], gv["cols"]].astype(float))
            bm = (1.0 + mfee) * gv["zb"]
            sm = (1.0 - pfee) * gv["zs"]
            lb = np.where(gv["can_buy"],
                          cfg.flow.lambda_buy[v]
                          * np.exp((k0[v] * (s - zeta) + gv["cross_b"] - k_tot[v] * bm) * gv["db"]),
                          0.0).reshape(sizes)
            ls = np.where(gv["can_sell"],
                          cfg.flow.lambda_sell[v]
                          * np.exp((k_tot[v] * sm - k0[v] * (s + zeta) - gv["cross_s"]) * gv["ds"]),
                          0.0).reshape(sizes)
            rate_b.append(lb)
            rate_s.append(ls)
            fee_field = (lb * (mfee * gv["zb"] * gv["db"]).reshape(sizes)
                         + ls * (pfee * gv["zs"] * gv["ds"]).reshape(sizes))
            volx_field = (lb * (gv["zb"] * gv["db"]).reshape(sizes)
                          + ls * (gv["zs"] * gv["ds"]).reshape(sizes))
            voly_field = lb * gv["db"].reshape(sizes) + ls * gv["ds"].reshape(sizes)
            fields.append((lb, ls, fee_field, volx_field, voly_field))

        def deriv(q):
            dq = np.zeros_like(q)
            da = np.empty((m, 5))
            for v in range(m):
                lb, ls, fee_f, volx_f, voly_f = fields[v]
                fb = lb * q
                fs = ls * q
                dq += shift(fb, v, -1) - fb + shift(fs, v, +1) - fs
                da[v] = (fb.sum(), fs.sum(), (fee_f * q).sum(),
                         (volx_f * q).sum(), (voly_f * q).sum())
            return dq, da

        h = slice_dt / substeps
        for _ in range(substeps):
            k1, a1 = deriv(p)
            k2, a2 = deriv(p + 0.5 * h * k1)
            k3, a3 = deriv(p + 0.5 * h * k2)
            k4, a4 = deriv(p + h * k3)
            p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            acc += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)

    return {
        "n_buy": acc[:, 0], "n_sell": acc[:, 1], "fees": acc[:, 2],
        "vol_x": acc[:, 3], "vol_y": acc[:, 4],
        "probability_mass": float(p.sum()),
    }
