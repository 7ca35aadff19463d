"""Vectorized NumPy implementations of the hot kernels.

This module is the pure-Python fallback for the compiled extension in
``_kernels.pyx``.  The two must implement the identical per-ray algorithm
(same sample positions, same walk order, same bisection update sequence) so
that results agree across backends.
"""

from __future__ import annotations

import numpy as np

STATE_EMPTY = 0
STATE_OCCUPIED = 1
STATE_UNKNOWN = 2

HIT_NONE = 0
HIT_OCCUPIED = 1
HIT_UNKNOWN = 2

SPACING_LINEAR = 0
SPACING_INVERSE = 1

_EPS_Z = 1e-9
_BISECT_TOL = 1e-3
_BISECT_MAX_ITERS = 20


def _states_chunk(pts, rot, trans, fx, fy, cx, cy, width, height, offsets, depth, valid, mode):
    n = pts.shape[0]
    nviews = rot.shape[0]
    any_inside = np.zeros(n, dtype=bool)
    any_front = np.zeros(n, dtype=bool)
    for i in range(nviews):
        cam = pts @ rot[i].T + trans[i]
        z = cam[:, 2]
        ok = z > _EPS_Z
        zz = np.where(ok, z, 1.0)
        u = fx[i] * cam[:, 0] / zz + cx[i]
        v = fy[i] * cam[:, 1] / zz + cy[i]
        w, h = int(width[i]), int(height[i])
        inb = ok & (u >= -0.5) & (u <= w - 0.5) & (v >= -0.5) & (v <= h - 0.5)
        dmap = depth[offsets[i] : offsets[i + 1]].reshape(h, w)
        vmap = valid[offsets[i] : offsets[i + 1]].reshape(h, w)
        uc = np.where(inb, u, 0.0)
        vc = np.where(inb, v, 0.0)
        if mode == 0:  # nearest
            iu = np.clip(np.floor(uc + 0.5).astype(np.int64), 0, w - 1)
            iv = np.clip(np.floor(vc + 0.5).astype(np.int64), 0, h - 1)
            d = dmap[iv, iu].astype(np.float64)
            dvalid = vmap[iv, iu] != 0
        else:  # bilinear_min: min over the valid 2x2 neighborhood
            iu0 = np.clip(np.floor(uc).astype(np.int64), 0, w - 1)
            iv0 = np.clip(np.floor(vc).astype(np.int64), 0, h - 1)
            iu1 = np.minimum(iu0 + 1, w - 1)
            iv1 = np.minimum(iv0 + 1, h - 1)
            d = np.full(n, np.inf)
            dvalid = np.zeros(n, dtype=bool)
            for jj, ii in ((iv0, iu0), (iv0, iu1), (iv1, iu0), (iv1, iu1)):
                vv = vmap[jj, ii] != 0
                d = np.where(vv, np.minimum(d, dmap[jj, ii].astype(np.float64)), d)
                dvalid |= vv
        eff = inb & dvalid
        any_inside |= eff
        any_front |= eff & ~(z > d)
    out = np.full(n, STATE_UNKNOWN, dtype=np.uint8)
    out[any_inside] = STATE_OCCUPIED
    out[any_front] = STATE_EMPTY
    return out


def occupancy_states(points, rot, trans, fx, fy, cx, cy, width, height, offsets,
                     depth, valid, mode, chunk=262144):
    """Occupancy state codes for (N, 3) world points against a packed view set."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.empty(pts.shape[0], dtype=np.uint8)
    for start in range(0, pts.shape[0], chunk):
        sl = slice(start, min(start + chunk, pts.shape[0]))
        out[sl] = _states_chunk(pts[sl], rot, trans, fx, fy, cx, cy, width, height,
                                offsets, depth, valid, mode)
    return out


def coarse_positions(n, near, far, spacing, frac):
    """Sample positions for fractional in-stratum offsets ``frac`` (shape (..., n))."""
    if spacing == SPACING_LINEAR:
        return near + frac * (far - near)
    inv = 1.0 / near + frac * (1.0 / far - 1.0 / near)
    return 1.0 / inv


def _terminating(states, policy_occupied):
    if policy_occupied:
        return states != STATE_EMPTY
    return states == STATE_OCCUPIED


def first_hit(origins, dirs, rot, trans, fx, fy, cx, cy, width, height, offsets,
              depth, valid, mode, near, far, n_coarse, spacing, n_fine,
              n_surface, surface_sigma, policy_occupied, est, jitter):
    """First terminating sample along each ray, refined by bisection.

    Rays are ``origins + t * dirs`` for t in [near, far].  Returns
    ``(status, t_hit)`` where status is 0 (no hit), 1 (occupied) or
    2 (terminated by an unknown region under the occupied-unknown policy).
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = origins.shape[0]
    view_args = (rot, trans, fx, fy, cx, cy, width, height, offsets, depth, valid, mode)

    def states_at(ts, rows=None):
        o = origins if rows is None else origins[rows]
        d = dirs if rows is None else dirs[rows]
        pts = o[:, None, :] + ts[..., None] * d[:, None, :]
        flat = occupancy_states(pts.reshape(-1, 3), *view_args)
        return flat.reshape(ts.shape)

    idx = np.arange(n_coarse, dtype=np.float64)
    if jitter is None:
        frac = np.broadcast_to((idx + 0.5) / n_coarse, (n, n_coarse))
    else:
        frac = (idx[None, :] + np.asarray(jitter, dtype=np.float64)) / n_coarse
    walk = coarse_positions(n_coarse, near, far, spacing, frac)

    if est is not None and n_surface > 0:
        e = np.asarray(est, dtype=np.float64).reshape(-1)
        lo_s = np.clip(e - 2.0 * surface_sigma, near, far)
        hi_s = np.clip(e + 2.0 * surface_sigma, near, far)
        sfrac = (np.arange(n_surface, dtype=np.float64) + 0.5) / n_surface
        surf = lo_s[:, None] + sfrac[None, :] * (hi_s - lo_s)[:, None]
        walk = np.sort(np.concatenate([walk, surf], axis=1), axis=1)
    else:
        walk = np.ascontiguousarray(walk)

    st = states_at(walk)
    term = _terminating(st, policy_occupied)
    hit_any = term.any(axis=1)
    k = np.argmax(term, axis=1)

    status = np.zeros(n, dtype=np.uint8)
    t_out = np.full(n, np.nan)
    if not hit_any.any():
        return status, t_out

    rows = np.nonzero(hit_any)[0]
    kk = k[rows]
    hi = walk[rows, kk]
    lo = np.where(kk > 0, walk[rows, np.maximum(kk - 1, 0)], near)
    hstate = st[rows, kk]

    if n_fine > 0:
        ffrac = (np.arange(n_fine, dtype=np.float64) + 0.5) / n_fine
        fine = lo[:, None] + ffrac[None, :] * (hi - lo)[:, None]
        fst = states_at(fine, rows)
        fterm = _terminating(fst, policy_occupied)
        fhit = fterm.any(axis=1)
        fk = np.argmax(fterm, axis=1)
        # first terminating fine sample tightens hi; all earlier ones raise lo
        hi = np.where(fhit, fine[np.arange(len(rows)), fk], hi)
        hstate = np.where(fhit, fst[np.arange(len(rows)), fk], hstate)
        new_lo = np.where(
            fhit,
            np.where(fk > 0, fine[np.arange(len(rows)), np.maximum(fk - 1, 0)], lo),
            fine[:, -1],
        )
        lo = new_lo

    active = (hi - lo) > _BISECT_TOL
    for _ in range(_BISECT_MAX_ITERS):
        if not active.any():
            break
        arows = np.nonzero(active)[0]
        mid = 0.5 * (lo[arows] + hi[arows])
        mst = states_at(mid[:, None], rows[arows])[:, 0]
        mterm = _terminating(mst, policy_occupied)
        hi[arows] = np.where(mterm, mid, hi[arows])
        hstate[arows] = np.where(mterm, mst, hstate[arows])
        lo[arows] = np.where(mterm, lo[arows], mid)
        active[arows] = (hi[arows] - lo[arows]) > _BISECT_TOL

    status[rows] = np.where(hstate == STATE_OCCUPIED, HIT_OCCUPIED, HIT_UNKNOWN).astype(np.uint8)
    t_out[rows] = 0.5 * (lo + hi)
    return status, t_out


def _trilinear_weights(g, dim):
    i0 = np.clip(np.floor(g).astype(np.int64), 0, dim - 2)
    f = g - i0
    return i0, f


def _gather_theta_omega(logits, log_omega, gu, gv, gz, inb):
    """Interpolated occupancy/uncertainty at grid coords; zero outside the grid."""
    nz, nh, nw = logits.shape
    iz, fz = _trilinear_weights(gz, nz)
    iv, fv = _trilinear_weights(gv, nh)
    iu, fu = _trilinear_weights(gu, nw)
    theta = np.zeros(gu.shape)
    omega = np.zeros(gu.shape)
    for dz in (0, 1):
        wz = np.where(dz == 1, fz, 1.0 - fz)
        for dy in (0, 1):
            wy = np.where(dy == 1, fv, 1.0 - fv)
            for dx in (0, 1):
                wx = np.where(dx == 1, fu, 1.0 - fu)
                w = wz * wy * wx
                l = logits[iz + dz, iv + dy, iu + dx]
                o = log_omega[iz + dz, iv + dy, iu + dx]
                theta += w * (1.0 / (1.0 + np.exp(-l)))
                omega += w * np.exp(o)
    theta = np.where(inb, theta, 0.0)
    omega = np.where(inb, omega, 0.0)
    return theta, omega


def field_render_forward(logits, log_omega, gu, gv, gz, inb, tvals, deltas):
    """Soft compositing of the occupancy field along pre-sampled rays.

    All (N, K) inputs are per-ray per-sample: grid coordinates, an in-grid
    mask, z-depths and sample spacings.  Returns per-ray depth, variance and
    total weight plus per-sample caches for the backward pass.
    """
    theta, omega = _gather_theta_omega(logits, log_omega, gu, gv, gz, inb)
    alpha = 1.0 - np.exp(-theta * deltas)
    one_minus = 1.0 - alpha
    trans = np.ones_like(alpha)
    trans[:, 1:] = np.cumprod(one_minus[:, :-1], axis=1)
    w = trans * alpha
    wsum = w.sum(axis=1)
    depth = (w * tvals).sum(axis=1)
    spread = (w * (tvals - depth[:, None]) ** 2).sum(axis=1)
    var = (w * omega).sum(axis=1) + spread
    return depth, var, wsum, theta, omega, alpha, trans


def field_render_backward(logits, log_omega, gu, gv, gz, inb, tvals, deltas,
                          theta, omega, alpha, trans, depth, dl_ddepth, dl_dvar):
    """Gradients of (depth, var) losses w.r.t. field logits and log-uncertainty."""
    nz, nh, nw = logits.shape
    w = trans * alpha
    resid = tvals - depth[:, None]
    a_sum = (w * resid).sum(axis=1)
    geff = dl_ddepth - 2.0 * dl_dvar * a_sum
    g_w = geff[:, None] * tvals + dl_dvar[:, None] * (omega + resid**2)
    g_omega = dl_dvar[:, None] * w

    # d/dtheta_m = delta_m * (g_m * (T_m - w_m) - sum_{k>m} g_k w_k)
    gw_w = g_w * w
    suffix = np.zeros_like(gw_w)
    suffix[:, :-1] = np.cumsum(gw_w[:, ::-1], axis=1)[:, ::-1][:, 1:]
    g_theta = deltas * (g_w * (trans - w) - suffix)

    g_theta = np.where(inb, g_theta, 0.0)
    g_omega = np.where(inb, g_omega, 0.0)

    iz, fz = _trilinear_weights(gz, nz)
    iv, fv = _trilinear_weights(gv, nh)
    iu, fu = _trilinear_weights(gu, nw)
    size = nz * nh * nw
    dlogits = np.zeros(size)
    dlog_omega = np.zeros(size)
    for dz in (0, 1):
        wz = np.where(dz == 1, fz, 1.0 - fz)
        for dy in (0, 1):
            wy = np.where(dy == 1, fv, 1.0 - fv)
            for dx in (0, 1):
                wx = np.where(dx == 1, fu, 1.0 - fu)
                wgt = wz * wy * wx
                idx = ((iz + dz) * nh + (iv + dy)) * nw + (iu + dx)
                l = logits.reshape(-1)[idx]
                sig = 1.0 / (1.0 + np.exp(-l))
                contrib_l = (g_theta * wgt * sig * (1.0 - sig)).ravel()
                o = log_omega.reshape(-1)[idx]
                contrib_o = (g_omega * wgt * np.exp(o)).ravel()
                flat = idx.ravel()
                dlogits += np.bincount(flat, weights=contrib_l, minlength=size)
                dlog_omega += np.bincount(flat, weights=contrib_o, minlength=size)
    return dlogits.reshape(nz, nh, nw), dlog_omega.reshape(nz, nh, nw)
