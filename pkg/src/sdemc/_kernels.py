"""Euler-Maruyama exit kernels (numba) and coefficient packing.

The kernels are deliberately free of Python objects: polynomials arrive as
flat term arrays (coefficients, exponent rows, slot offsets) and domains as a
kind code plus parameter vectors.  Paths are processed in fixed-size blocks;
everything a path produces depends only on (seed, path index), so results are
bit-identical for any thread count or batch split.  Per-block histogram rows
are reduced in block order by the caller, which keeps floating-point sums
deterministic as well.

Draw order per path and step is defined in ``_rng``: the gaussian increments
first, then one uniform reserved for the boundary-crossing (Brownian bridge)
test.  The bridge fires when that uniform falls below the crossing
probability exp(-2 d(x) d(x') / (a_nn dt)) aggregated over candidate faces,
with a_nn the noise quadratic form along the face normal frozen at the step
start.  Balls use the tangent-halfspace approximation of the same formula.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange, uint64

from ._rng import step_draws
from .polyfield import MultiPoly

__all__ = [
    "DOM_CODES",
    "pack_polys",
    "pack_model",
    "pack_domain",
    "exit_kernel",
    "cycle_kernel",
    "KIND_EXITED_U",
    "KIND_EXITED_CLOSURE",
    "KIND_CENSORED",
    "KIND_EXPLODED",
    "FLAG_REENTERED",
    "FLAG_BRIDGE_EXIT",
]

KIND_EXITED_U = 0
KIND_EXITED_CLOSURE = 1
KIND_CENSORED = 2
KIND_EXPLODED = 3

FLAG_REENTERED = 1
FLAG_BRIDGE_EXIT = 2

DOM_CODES = {
    "none": -1,
    "full": 0,
    "box": 1,
    "ball": 2,
    "outside_ball": 3,
    "halfspace": 4,
    "sublevel": 5,
}

_EXP_CUTOFF = 40.0  # exp(-40) ~ 4e-18: treat the face as uncrossable


@njit(inline="always", cache=True)
def _cross_theta(d0, d1):
    """Crossing fraction along a step chord from signed boundary distances.

    d1 < 0 means the endpoint already lies past the boundary: linear
    interpolation of the signed distance.  Otherwise the standard bridge
    attribution d0 / (d0 + d1), which locates the minimum of the pinned
    Brownian excursion in expectation.
    """
    if d1 < 0.0:
        return d0 / (d0 - d1)
    s = d0 + d1
    return d0 / s if s > 0.0 else 0.0


def pack_polys(polys, dim):
    """Flatten polynomials into (coeffs, exponent rows, slot offsets)."""
    coeffs = []
    rows = []
    offsets = [0]
    for p in polys:
        if p.dim != dim:
            raise ValueError("polynomial dimension mismatch")
        for e, c in sorted(p.terms.items()):
            coeffs.append(c)
            rows.append(e)
        offsets.append(len(coeffs))
    c = np.asarray(coeffs, dtype=np.float64)
    e = np.asarray(rows, dtype=np.int64).reshape(len(coeffs), dim)
    o = np.asarray(offsets, dtype=np.int64)
    return c, e, o


def pack_model(model):
    """Slots 0..m-1: drift components; slot m + j*r + i: sigma[j][i]."""
    m, r = model.dim_state, model.dim_noise
    polys = list(model.drift.components)
    for j in range(m):
        for i in range(r):
            polys.append(model.sigma[j][i])
    return pack_polys(polys, m)


def pack_domain(domain, dim):
    """(kind, v1, v2, scal, sub_coeffs, sub_expts, sub_offsets, sub_tol)."""
    z = np.zeros(dim, dtype=np.float64)
    empty_c, empty_e, empty_o = pack_polys([MultiPoly.zero(dim)], dim)
    if domain is None:
        return (-1, z, z, 0.0, empty_c, empty_e, empty_o, 0.0)
    kind = DOM_CODES[domain.kind]
    if domain.kind == "box":
        return (
            kind,
            np.asarray(domain.lo, dtype=np.float64),
            np.asarray(domain.hi, dtype=np.float64),
            0.0,
            empty_c,
            empty_e,
            empty_o,
            0.0,
        )
    if domain.kind in ("ball", "outside_ball"):
        return (
            kind,
            np.asarray(domain.center, dtype=np.float64),
            z,
            float(domain.radius),
            empty_c,
            empty_e,
            empty_o,
            0.0,
        )
    if domain.kind == "halfspace":
        return (
            kind,
            np.asarray(domain.normal, dtype=np.float64),
            z,
            float(domain.offset),
            empty_c,
            empty_e,
            empty_o,
            0.0,
        )
    if domain.kind == "sublevel":
        sc, se, so = pack_polys([domain.level_poly], dim)
        return (kind, z, z, 0.0, sc, se, so, float(domain.boundary_tol))
    return (kind, z, z, 0.0, empty_c, empty_e, empty_o, 0.0)  # full


@njit(inline="always", cache=True)
def _poly_eval(coeffs, expts, offsets, slot, x):
    acc = 0.0
    for t in range(offsets[slot], offsets[slot + 1]):
        v = coeffs[t]
        for d in range(x.shape[0]):
            e = expts[t, d]
            for _ in range(e):
                v *= x[d]
        acc += v
    return acc


@njit(inline="always", cache=True)
def _membership(kind, v1, v2, scal, sc, se, so, stol, x):
    """-1 interior, 0 boundary, +1 exterior.  Exact comparisons except sublevel."""
    if kind == 0:
        return -1
    if kind == 1:
        on_face = False
        for j in range(x.shape[0]):
            if x[j] < v1[j] or x[j] > v2[j]:
                return 1
            if x[j] == v1[j] or x[j] == v2[j]:
                on_face = True
        return 0 if on_face else -1
    if kind == 2 or kind == 3:
        d2 = 0.0
        for j in range(x.shape[0]):
            dd = x[j] - v1[j]
            d2 += dd * dd
        r2 = scal * scal
        if d2 == r2:
            return 0
        inside_ball = d2 < r2
        if kind == 2:
            return -1 if inside_ball else 1
        return 1 if inside_ball else -1
    if kind == 4:
        v = 0.0
        for j in range(x.shape[0]):
            v += v1[j] * x[j]
        if v == scal:
            return 0
        return -1 if v < scal else 1
    if kind == 5:
        val = _poly_eval(sc, se, so, 0, x)
        band = stol * (1.0 + abs(val))
        if val < -band:
            return -1
        if val > band:
            return 1
        return 0
    return -1


@njit(inline="always", cache=True)
def _normal_form(sig, r_noise, v):
    """v^T (sigma sigma^T) v from sigma columns: sum_i (v . sigma_col_i)^2."""
    acc = 0.0
    for i in range(r_noise):
        dot = 0.0
        for j in range(v.shape[0]):
            dot += v[j] * sig[j, i]
        acc += dot * dot
    return acc


@njit(inline="always", cache=True)
def _bridge_test(kind, v1, v2, scal, x, xn, sig, r_noise, dt, u, y, scratch):
    """Boundary-crossing test for the step x -> xn (both in the closed set).

    Returns the crossing fraction theta in [0, 1] and writes the exit state
    into y, or returns -1.0 when no crossing is sampled.  scratch is a
    length-dim buffer.
    """
    m = x.shape[0]
    if kind == 1:
        pnc = 1.0
        best_p = 0.0
        best_k = -1
        best_hi = False
        for k in range(m):
            akk = 0.0
            for i in range(r_noise):
                akk += sig[k, i] * sig[k, i]
            if akk <= 0.0:
                continue
            denom = akk * dt
            d0 = x[k] - v1[k]
            d1 = xn[k] - v1[k]
            ex = 2.0 * d0 * d1 / denom
            if ex < _EXP_CUTOFF:
                p = math.exp(-ex)
                pnc *= 1.0 - min(p, 1.0)
                if p > best_p:
                    best_p = p
                    best_k = k
                    best_hi = False
            d0 = v2[k] - x[k]
            d1 = v2[k] - xn[k]
            ex = 2.0 * d0 * d1 / denom
            if ex < _EXP_CUTOFF:
                p = math.exp(-ex)
                pnc *= 1.0 - min(p, 1.0)
                if p > best_p:
                    best_p = p
                    best_k = k
                    best_hi = True
        if best_k < 0 or u >= 1.0 - pnc:
            return -1.0
        if best_hi:
            d0 = v2[best_k] - x[best_k]
            d1 = v2[best_k] - xn[best_k]
            face = v2[best_k]
        else:
            d0 = x[best_k] - v1[best_k]
            d1 = xn[best_k] - v1[best_k]
            face = v1[best_k]
        theta = _cross_theta(d0, d1)
        for j in range(m):
            y[j] = x[j] + theta * (xn[j] - x[j])
        y[best_k] = face
        return theta

    if kind == 2 or kind == 3:
        n0 = 0.0
        n1 = 0.0
        for j in range(m):
            dd = x[j] - v1[j]
            scratch[j] = dd
            n0 += dd * dd
            dd = xn[j] - v1[j]
            n1 += dd * dd
        n0 = math.sqrt(n0)
        n1 = math.sqrt(n1)
        if kind == 2:
            d0 = scal - n0
            d1 = scal - n1
        else:
            d0 = n0 - scal
            d1 = n1 - scal
        if n0 <= 0.0:
            return -1.0
        for j in range(m):
            scratch[j] /= n0
        ann = _normal_form(sig, r_noise, scratch)
        if ann <= 0.0:
            return -1.0
        ex = 2.0 * d0 * d1 / (ann * dt)
        if ex >= _EXP_CUTOFF:
            return -1.0
        if u >= math.exp(-ex):
            return -1.0
        theta = _cross_theta(d0, d1)
        nrm = 0.0
        for j in range(m):
            y[j] = x[j] + theta * (xn[j] - x[j])
            dd = y[j] - v1[j]
            nrm += dd * dd
        nrm = math.sqrt(nrm)
        if nrm > 0.0:
            for j in range(m):
                y[j] = v1[j] + scal * (y[j] - v1[j]) / nrm
        return theta

    if kind == 4:
        dot0 = 0.0
        dot1 = 0.0
        for j in range(m):
            dot0 += v1[j] * x[j]
            dot1 += v1[j] * xn[j]
        d0 = scal - dot0
        d1 = scal - dot1
        ann = _normal_form(sig, r_noise, v1)
        if ann <= 0.0:
            return -1.0
        ex = 2.0 * d0 * d1 / (ann * dt)
        if ex >= _EXP_CUTOFF:
            return -1.0
        if u >= math.exp(-ex):
            return -1.0
        theta = _cross_theta(d0, d1)
        doty = 0.0
        for j in range(m):
            y[j] = x[j] + theta * (xn[j] - x[j])
            doty += v1[j] * y[j]
        for j in range(m):
            y[j] -= (doty - scal) * v1[j]
        return theta

    return -1.0


@njit(inline="always", cache=True)
def _grid_cell(grid_lo, grid_inv, grid_n, x):
    """Row-major cell index or -1 when x is outside the gridded box."""
    lin = 0
    for j in range(x.shape[0]):
        c = int(math.floor((x[j] - grid_lo[j]) * grid_inv[j]))
        if c < 0 or c >= grid_n[j]:
            return -1
        lin = lin * grid_n[j] + c
    return lin


@njit(cache=True, parallel=True)
def exit_kernel(
    seed,
    path0,
    n_paths,
    block_size,
    x0,
    r_noise,
    mp_c,
    mp_e,
    mp_o,
    u_kind,
    u_v1,
    u_v2,
    u_scal,
    u_sc,
    u_se,
    u_so,
    u_tol,
    mon_kind,
    mon_v1,
    mon_v2,
    mon_scal,
    mon_sc,
    mon_se,
    mon_so,
    mon_tol,
    f_c,
    f_e,
    f_o,
    n_f,
    beta,
    grid_on,
    grid_lo,
    grid_inv,
    grid_n,
    dt,
    max_steps,
    bridge_on,
    stop_mode,
    start_membership,
    explosion_bound,
    words_len,
    gauss_len,
    out_time,
    out_kind,
    out_state,
    out_tau_pos,
    out_mon_time,
    out_steps,
    out_flags,
    out_integrals,
    out_discount,
    hist_blocks,
):
    m = x0.shape[0]
    sdt = math.sqrt(dt)
    edt = math.exp(-beta * dt) if beta != 0.0 else 1.0
    cw = (1.0 - edt) / beta if beta != 0.0 else dt
    n_blocks = (n_paths + block_size - 1) // block_size
    for blk in prange(n_blocks):
        lo = blk * block_size
        hi = min(lo + block_size, n_paths)
        x = np.empty(m, dtype=np.float64)
        xn = np.empty(m, dtype=np.float64)
        y = np.empty(m, dtype=np.float64)
        scratch = np.empty(m, dtype=np.float64)
        bv = np.empty(m, dtype=np.float64)
        sig = np.empty((m, r_noise), dtype=np.float64)
        gauss = np.empty(gauss_len, dtype=np.float64)
        words = np.empty(words_len, dtype=np.uint64)
        for ii in range(lo, hi):
            path = uint64(path0 + ii)
            for j in range(m):
                x[j] = x0[j]
            t = 0.0
            disc = 1.0
            mu_x = start_membership
            kind = KIND_CENSORED
            stop_t = max_steps * dt
            tau_pos = math.inf
            mon_t = math.inf
            flags = 0
            steps = max_steps
            stopped = False
            for k in range(max_steps):
                u_b = step_draws(seed, path, uint64(k), r_noise, words, gauss)
                for j in range(m):
                    bv[j] = _poly_eval(mp_c, mp_e, mp_o, j, x)
                for j in range(m):
                    for i in range(r_noise):
                        sig[j, i] = _poly_eval(mp_c, mp_e, mp_o, m + j * r_noise + i, x)
                expl = False
                for j in range(m):
                    acc = 0.0
                    for i in range(r_noise):
                        acc += sig[j, i] * gauss[i]
                    v = x[j] + bv[j] * dt + sdt * acc
                    xn[j] = v
                    if not math.isfinite(v) or abs(v) > explosion_bound:
                        expl = True
                if expl:
                    kind = KIND_EXPLODED
                    stop_t = t + dt
                    steps = k + 1
                    if mu_x == -1:
                        w = disc * cw
                        for s in range(n_f):
                            out_integrals[ii, s] += _poly_eval(f_c, f_e, f_o, s, x) * w
                        if grid_on:
                            cell = _grid_cell(grid_lo, grid_inv, grid_n, x)
                            if cell >= 0:
                                hist_blocks[blk, cell] += w
                    disc *= edt
                    for j in range(m):
                        y[j] = xn[j]
                    stopped = True
                    break
                if mon_kind >= 0 and mon_t == math.inf:
                    mm = _membership(
                        mon_kind, mon_v1, mon_v2, mon_scal, mon_sc, mon_se, mon_so, mon_tol, xn
                    )
                    if mm >= 0:
                        mon_t = t + dt
                mu_n = _membership(u_kind, u_v1, u_v2, u_scal, u_sc, u_se, u_so, u_tol, xn)
                # bridge first for steps starting on the boundary: the crossing
                # probability there is exact (d0 = 0 gives p = 1 for noisy faces)
                theta = -1.0
                if bridge_on and (mu_x == 0 or mu_n < (0 if stop_mode == 0 else 1)):
                    theta = _bridge_test(
                        u_kind, u_v1, u_v2, u_scal, x, xn, sig, r_noise, dt, u_b, y, scratch
                    )
                if mu_x == 0 and theta >= 0.0:
                    # started on the boundary and the bridge fired: no interior
                    # time accrues, the path stops at the crossing
                    kind = KIND_EXITED_U if stop_mode == 0 else KIND_EXITED_CLOSURE
                    stop_t = t + theta * dt
                    steps = k + 1
                    if tau_pos == math.inf:
                        tau_pos = stop_t
                    flags |= FLAG_BRIDGE_EXIT
                    disc *= math.exp(-beta * theta * dt) if beta != 0.0 else 1.0
                    stopped = True
                    break
                if stop_mode == 0:
                    if mu_n >= 0:
                        kind = KIND_EXITED_U if mu_n == 0 else KIND_EXITED_CLOSURE
                        stop_t = t + dt
                        steps = k + 1
                        tau_pos = stop_t
                        if mu_x == -1:
                            w = disc * cw
                            for s in range(n_f):
                                out_integrals[ii, s] += (
                                    _poly_eval(f_c, f_e, f_o, s, x) * w
                                )
                            if grid_on:
                                cell = _grid_cell(grid_lo, grid_inv, grid_n, x)
                                if cell >= 0:
                                    hist_blocks[blk, cell] += w
                        disc *= edt
                        for j in range(m):
                            y[j] = xn[j]
                        stopped = True
                        break
                    if theta >= 0.0:
                        kind = KIND_EXITED_U
                        stop_t = t + theta * dt
                        steps = k + 1
                        tau_pos = stop_t
                        flags |= FLAG_BRIDGE_EXIT
                        if mu_x == -1:
                            w = (
                                disc * (theta * dt)
                                if beta == 0.0
                                else disc * (1.0 - math.exp(-beta * theta * dt)) / beta
                            )
                            for s in range(n_f):
                                out_integrals[ii, s] += (
                                    _poly_eval(f_c, f_e, f_o, s, x) * w
                                )
                            if grid_on:
                                cell = _grid_cell(grid_lo, grid_inv, grid_n, x)
                                if cell >= 0:
                                    hist_blocks[blk, cell] += w
                        disc *= math.exp(-beta * theta * dt) if beta != 0.0 else 1.0
                        stopped = True
                        break
                else:
                    if mu_n == 1:
                        kind = KIND_EXITED_CLOSURE
                        stop_t = t + dt
                        steps = k + 1
                        if tau_pos == math.inf:
                            tau_pos = stop_t
                        if mu_x == -1:
                            w = disc * cw
                            for s in range(n_f):
                                out_integrals[ii, s] += (
                                    _poly_eval(f_c, f_e, f_o, s, x) * w
                                )
                            if grid_on:
                                cell = _grid_cell(grid_lo, grid_inv, grid_n, x)
                                if cell >= 0:
                                    hist_blocks[blk, cell] += w
                        disc *= edt
                        for j in range(m):
                            y[j] = xn[j]
                        stopped = True
                        break
                    if theta >= 0.0:
                        kind = KIND_EXITED_CLOSURE
                        stop_t = t + theta * dt
                        steps = k + 1
                        if tau_pos == math.inf:
                            tau_pos = stop_t
                        flags |= FLAG_BRIDGE_EXIT
                        if mu_x == -1:
                            w = (
                                disc * (theta * dt)
                                if beta == 0.0
                                else disc * (1.0 - math.exp(-beta * theta * dt)) / beta
                            )
                            for s in range(n_f):
                                out_integrals[ii, s] += (
                                    _poly_eval(f_c, f_e, f_o, s, x) * w
                                )
                            if grid_on:
                                cell = _grid_cell(grid_lo, grid_inv, grid_n, x)
                                if cell >= 0:
                                    hist_blocks[blk, cell] += w
                        disc *= math.exp(-beta * theta * dt) if beta != 0.0 else 1.0
                        stopped = True
                        break
                    if mu_n == 0 and tau_pos == math.inf:
                        tau_pos = t + dt
                # continuing step
                if mu_x == -1:
                    w = disc * cw
                    for s in range(n_f):
                        out_integrals[ii, s] += _poly_eval(f_c, f_e, f_o, s, x) * w
                    if grid_on:
                        cell = _grid_cell(grid_lo, grid_inv, grid_n, x)
                        if cell >= 0:
                            hist_blocks[blk, cell] += w
                if mu_x == 0 and mu_n == -1:
                    flags |= FLAG_REENTERED
                mu_x = mu_n
                for j in range(m):
                    x[j] = xn[j]
                t += dt
                disc *= edt
            if stopped:
                for j in range(m):
                    out_state[ii, j] = y[j]
            else:
                for j in range(m):
                    out_state[ii, j] = x[j]
            out_time[ii] = stop_t
            out_kind[ii] = kind
            out_tau_pos[ii] = tau_pos
            out_mon_time[ii] = mon_t
            out_steps[ii] = steps
            out_flags[ii] = flags
            out_discount[ii] = disc


@njit(cache=True, parallel=True)
def cycle_kernel(
    seed,
    n_chains,
    x0s,
    r_noise,
    mp_c,
    mp_e,
    mp_o,
    center,
    rho_in,
    rho_out,
    dt,
    max_steps_per_cycle,
    n_cycles,
    grid_on,
    grid_lo,
    grid_inv,
    grid_n,
    explosion_bound,
    words_len,
    gauss_len,
    out_duration,
    out_point,
    out_counts,
    out_steps_tot,
    out_steps_in,
    out_ok,
):
    """Alternating sphere-hit excursions for the cycle construction.

    Each chain alternates: outward to the sphere |x-c| = rho_out, back inward
    to |x-c| = rho_in; one cycle is a completed out-and-back pair.  Crossing
    times are refined by bisection along the step chord; the trajectory itself
    is never altered.  Occupation is recorded as integer counts of full steps
    per grid cell, assigned to the cycle containing the step's left endpoint.
    """
    m = x0s.shape[1]
    sdt = math.sqrt(dt)
    for c in prange(n_chains):
        x = np.empty(m, dtype=np.float64)
        xn = np.empty(m, dtype=np.float64)
        bv = np.empty(m, dtype=np.float64)
        sig = np.empty((m, r_noise), dtype=np.float64)
        gauss = np.empty(gauss_len, dtype=np.float64)
        words = np.empty(words_len, dtype=np.uint64)
        for j in range(m):
            x[j] = x0s[c, j]
        step = uint64(0)
        t = 0.0
        cycle_start = 0.0
        phase_out = True
        alive = True
        for cyc in range(n_cycles):
            if not alive:
                out_ok[c, cyc] = 0
                continue
            steps_this_cycle = 0
            done = False
            while not done:
                if steps_this_cycle >= max_steps_per_cycle:
                    alive = False
                    out_ok[c, cyc] = 0
                    done = True
                    continue
                u_b = step_draws(seed, uint64(c), step, r_noise, words, gauss)
                step += uint64(1)
                steps_this_cycle += 1
                for j in range(m):
                    bv[j] = _poly_eval(mp_c, mp_e, mp_o, j, x)
                for j in range(m):
                    for i in range(r_noise):
                        sig[j, i] = _poly_eval(mp_c, mp_e, mp_o, m + j * r_noise + i, x)
                expl = False
                for j in range(m):
                    acc = 0.0
                    for i in range(r_noise):
                        acc += sig[j, i] * gauss[i]
                    v = x[j] + bv[j] * dt + sdt * acc
                    xn[j] = v
                    if not math.isfinite(v) or abs(v) > explosion_bound:
                        expl = True
                if expl:
                    alive = False
                    out_ok[c, cyc] = 0
                    done = True
                    continue
                out_steps_tot[c, cyc] += 1
                if grid_on:
                    cell = _grid_cell(grid_lo, grid_inv, grid_n, x)
                    if cell >= 0:
                        out_counts[c, cyc, cell] += 1
                        out_steps_in[c, cyc] += 1
                # crossing detection against the active sphere
                rho = rho_out if phase_out else rho_in
                nx2 = 0.0
                nn2 = 0.0
                for j in range(m):
                    dd = x[j] - center[j]
                    nx2 += dd * dd
                    dd = xn[j] - center[j]
                    nn2 += dd * dd
                r2 = rho * rho
                crossed = (nn2 >= r2) if phase_out else (nn2 <= r2)
                if crossed:
                    # bisect |x + theta (xn - x) - c| = rho on the step chord
                    a = 0.0
                    b = 1.0
                    for _ in range(48):
                        mid = 0.5 * (a + b)
                        d2 = 0.0
                        for j in range(m):
                            dd = x[j] + mid * (xn[j] - x[j]) - center[j]
                            d2 += dd * dd
                        mid_out = d2 >= r2
                        if mid_out == phase_out:
                            b = mid
                        else:
                            a = mid
                    theta = 0.5 * (a + b)
                    t_cross = t + theta * dt
                    if phase_out:
                        phase_out = False
                    else:
                        # cycle complete: chain point projected onto the sphere
                        nrm = 0.0
                        for j in range(m):
                            dd = x[j] + theta * (xn[j] - x[j]) - center[j]
                            out_point[c, cyc, j] = dd
                            nrm += dd * dd
                        nrm = math.sqrt(nrm)
                        for j in range(m):
                            if nrm > 0.0:
                                out_point[c, cyc, j] = (
                                    center[j] + rho_in * out_point[c, cyc, j] / nrm
                                )
                            else:
                                out_point[c, cyc, j] = center[j] + (
                                    rho_in if j == 0 else 0.0
                                )
                        out_duration[c, cyc] = t_cross - cycle_start
                        out_ok[c, cyc] = 1
                        cycle_start = t_cross
                        phase_out = True
                        done = True
                for j in range(m):
                    x[j] = xn[j]
                t += dt
