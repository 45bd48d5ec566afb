"""Stopped-diffusion simulation: exit times tau, tau0, taubar, censoring.

The batch engine steps Euler-Maruyama paths until the first exit from a
domain U (or from its closure, in closure mode), a finite horizon, or
numerical explosion.  Randomness is counter-based and keyed by
(seed, path index), so a path's trajectory is a pure function of those two
integers: results are bit-identical for any thread count, block split, or
horizon extension, and common random numbers across start points come for
free.

Two engines share one contract: the numba kernel in ``_kernels`` (fast path)
and ``simulate_stopped_reference`` here (plain Python, same draws, same
floating-point operation order), which exists to cross-validate the kernel
and to record full trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import n_gauss_scratch, n_scratch_words, step_draws
from ._kernels import (
    FLAG_BRIDGE_EXIT,
    FLAG_REENTERED,
    KIND_CENSORED,
    KIND_EXITED_CLOSURE,
    KIND_EXITED_U,
    KIND_EXPLODED,
    pack_domain,
    pack_model,
    pack_polys,
)
from .model import Domain, DiffusionModel
from .polyfield import MultiPoly

__all__ = [
    "SimConfig",
    "HistGrid",
    "ExitRecord",
    "TrajectoryBatch",
    "KIND_NAMES",
    "FLAG_REENTERED",
    "FLAG_BRIDGE_EXIT",
    "FLAG_EXPLODED",
    "step_em",
    "simulate_stopped",
    "simulate_stopped_reference",
    "exit_time_triple",
    "dump_exits_csv",
    "dump_paths_csv",
    "apply_thread_count",
]

FLAG_EXPLODED = 4

KIND_NAMES = {
    KIND_EXITED_U: "exited_U",
    KIND_EXITED_CLOSURE: "exited_closure",
    KIND_CENSORED: "censored",
}

_STOP_MODES = {"exit": 0, "closure": 1}


@dataclass(frozen=True)
class SimConfig:
    """Time stepping, censoring, and reproducibility knobs.

    horizon is the censoring time; paths still inside at the last whole step
    before it are reported censored.  bridge_correction enables the
    within-step boundary-crossing test that removes the dominant O(sqrt(dt))
    exit-time bias.  threads = 0 leaves the worker count alone.
    """

    dt: float = 1e-3
    horizon: float = 100.0
    seed: int = 0
    bridge_correction: bool = True
    store_path: bool = False
    path_stride: int = 1
    threads: int = 0
    block_size: int = 1024
    explosion_bound: float = 1e12

    def __post_init__(self):
        assert self.dt > 0.0, "dt must be positive"
        assert self.dt < self.horizon, "dt must be smaller than the horizon"
        assert self.seed >= 0, "seed must be a nonnegative 64-bit integer"
        assert self.path_stride >= 1
        assert self.block_size >= 1
        assert self.explosion_bound > 0.0

    @property
    def max_steps(self) -> int:
        return max(1, int(math.ceil(self.horizon / self.dt - 1e-12)))

    def replace(self, **kw) -> "SimConfig":
        from dataclasses import replace as _replace

        return _replace(self, **kw)


@dataclass(frozen=True)
class HistGrid:
    """Regular box grid for occupation histograms, row-major cell order."""

    lo: tuple
    hi: tuple
    shape: tuple

    def __post_init__(self):
        assert len(self.lo) == len(self.hi) == len(self.shape)
        assert all(h > l for l, h in zip(self.lo, self.hi))
        assert all(int(n) >= 1 for n in self.shape)
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def n_cells(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    @property
    def cell_volume(self) -> float:
        v = 1.0
        for l, h, s in zip(self.lo, self.hi, self.shape):
            v *= (h - l) / s
        return v

    def axis_centers(self, axis: int) -> np.ndarray:
        w = (self.hi[axis] - self.lo[axis]) / self.shape[axis]
        return self.lo[axis] + w * (np.arange(self.shape[axis]) + 0.5)

    def centers(self) -> np.ndarray:
        """(n_cells, dim) array of cell centers in row-major cell order."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def packs(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        widths = [(h - l) / s for l, h, s in zip(self.lo, self.hi, self.shape)]
        inv = np.asarray([1.0 / w for w in widths], dtype=np.float64)
        n = np.asarray(self.shape, dtype=np.int64)
        return lo, inv, n


@dataclass(frozen=True)
class ExitRecord:
    """One path's stopped-process outcome.

    exit_time/exit_point are None exactly when the path was censored.
    first_step_outside_closure_time is the closure exit time when the path
    left the closure, else None.
    """

    path_index: int
    exit_kind: str
    exit_time: float | None
    exit_point: tuple | None
    tau_pos: float | None
    first_step_outside_closure_time: float | None
    steps: int
    reentered: bool
    bridge_exit: bool
    exploded: bool
    integrals: tuple
    discount: float


@dataclass
class TrajectoryBatch:
    """Vectorized exit records for n_paths paths of one configuration.

    kind holds codes 0 exited_U / 1 exited_closure / 2 censored (explosions
    are reported as exited_closure with the FLAG_EXPLODED bit set, and
    counted in explosion_fraction).  time is the exit-time estimate, equal to
    the censoring time for censored paths.  tau_pos is the first positive
    grid time observed outside U (inf if never), which estimates tau in
    closure mode.  integrals holds one discounted left-endpoint occupation
    quadrature column per requested integrand; discount is e^(-beta * stop).
    """

    model: DiffusionModel
    domain: Domain | None
    config: SimConfig
    x0: np.ndarray
    stop_mode: str
    start_membership: int
    path0: int
    beta: float
    time: np.ndarray
    kind: np.ndarray
    state: np.ndarray
    tau_pos: np.ndarray
    monitor_time: np.ndarray
    steps: np.ndarray
    flags: np.ndarray
    integrals: np.ndarray
    discount: np.ndarray
    hist_raw: np.ndarray | None = None
    grid: HistGrid | None = None
    paths: list = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return int(self.time.shape[0])

    @property
    def exited_mask(self) -> np.ndarray:
        return self.kind != KIND_CENSORED

    @property
    def censored_mask(self) -> np.ndarray:
        return self.kind == KIND_CENSORED

    @property
    def exploded_mask(self) -> np.ndarray:
        return (self.flags & FLAG_EXPLODED) != 0

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored_mask))

    @property
    def explosion_fraction(self) -> float:
        return float(np.mean(self.exploded_mask))

    def record(self, i: int) -> ExitRecord:
        censored = self.kind[i] == KIND_CENSORED
        closure = self.kind[i] == KIND_EXITED_CLOSURE
        tp = float(self.tau_pos[i])
        return ExitRecord(
            path_index=self.path0 + i,
            exit_kind=KIND_NAMES[int(self.kind[i])],
            exit_time=None if censored else float(self.time[i]),
            exit_point=None if censored else tuple(float(v) for v in self.state[i]),
            tau_pos=None if math.isinf(tp) else tp,
            first_step_outside_closure_time=float(self.time[i]) if closure else None,
            steps=int(self.steps[i]),
            reentered=bool(self.flags[i] & FLAG_REENTERED),
            bridge_exit=bool(self.flags[i] & FLAG_BRIDGE_EXIT),
            exploded=bool(self.flags[i] & FLAG_EXPLODED),
            integrals=tuple(float(v) for v in self.integrals[i]),
            discount=float(self.discount[i]),
        )

    def summary(self) -> dict:
        exited = self.exited_mask
        out = {
            "n_paths": self.n_paths,
            "censored_fraction": self.censored_fraction,
            "explosion_fraction": self.explosion_fraction,
            "mean_steps": float(np.mean(self.steps)),
        }
        if np.any(exited):
            out["mean_exit_time"] = float(np.mean(self.time[exited]))
        return out


def apply_thread_count(threads: int) -> int:
    """Clamp and apply a numba worker count; returns the count in effect."""
    import numba

    if threads and threads > 0:
        n = min(int(threads), int(numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
        return n
    return int(numba.get_num_threads())


def step_em(model: DiffusionModel, x, dt: float, gaussians) -> np.ndarray:
    """One Euler-Maruyama step x' = x + b(x) dt + sigma(x) sqrt(dt) xi."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(gaussians, dtype=np.float64)
    assert g.shape == (model.dim_noise,)
    b = model.drift_at(x)
    s = model.sigma_at(x)
    return x + b * dt + math.sqrt(dt) * (s @ g)


def _resolve_start(domain, x0, start_membership):
    if domain is None:
        return -1
    mu = int(domain.membership(x0))
    if start_membership is not None:
        return int(start_membership)
    if mu == 1:
        raise ValueError("x0 lies outside the closure of U")
    return mu


def _prepare(model, domain, x0, integrands, grid, monitor):
    m = model.dim_state
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (m,):
        raise ValueError(f"x0 must have shape ({m},)")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    integrands = tuple(integrands)
    for f in integrands:
        if not isinstance(f, MultiPoly):
            raise TypeError("integrands must be MultiPoly instances")
        if f.dim != m:
            raise ValueError("integrand dimension mismatch")
    mp = pack_model(model)
    upack = pack_domain(domain, m)
    mpack = pack_domain(monitor, m)
    if integrands:
        fpack = pack_polys(integrands, m)
    else:
        fpack = pack_polys([MultiPoly.zero(m)], m)
    if grid is not None:
        if grid.dim != m:
            raise ValueError("grid dimension mismatch")
        glo, ginv, gn = grid.packs()
        grid_on = True
    else:
        glo = np.zeros(m, dtype=np.float64)
        ginv = np.ones(m, dtype=np.float64)
        gn = np.ones(m, dtype=np.int64)
        grid_on = False
    return x0, integrands, mp, upack, mpack, fpack, grid_on, glo, ginv, gn


def simulate_stopped(
    model: DiffusionModel,
    domain: Domain | None,
    x0,
    cfg: SimConfig,
    n_paths: int = 1,
    *,
    stop_mode: str = "exit",
    integrands=(),
    beta: float = 0.0,
    monitor: Domain | None = None,
    grid: HistGrid | None = None,
    path0: int = 0,
    start_membership: int | None = None,
) -> TrajectoryBatch:
    """Run n_paths stopped paths from x0 and collect exit records.

    stop_mode "exit" stops at the first step observed outside U (boundary or
    exterior) or at a bridge crossing; "closure" stops only on leaving the
    closure, recording tau_pos - the first positive grid time outside U -
    along the way.  Paths are keyed (cfg.seed, path0 + i); rerunning any
    sub-range reproduces the same records.
    """
    assert n_paths >= 1
    assert beta >= 0.0, "beta must be nonnegative (discounting only)"
    if stop_mode not in _STOP_MODES:
        raise ValueError(f"stop_mode must be one of {sorted(_STOP_MODES)}")
    x0, integrands, mp, upack, mpack, fpack, grid_on, glo, ginv, gn = _prepare(
        model, domain, x0, integrands, grid, monitor
    )
    mu0 = _resolve_start(domain, x0, start_membership)
    m = model.dim_state
    r = model.dim_noise
    n_f = len(integrands)
    max_steps = cfg.max_steps
    apply_thread_count(cfg.threads)

    out_time = np.empty(n_paths, dtype=np.float64)
    out_kind = np.empty(n_paths, dtype=np.int64)
    out_state = np.empty((n_paths, m), dtype=np.float64)
    out_tau_pos = np.empty(n_paths, dtype=np.float64)
    out_mon_time = np.empty(n_paths, dtype=np.float64)
    out_steps = np.empty(n_paths, dtype=np.int64)
    out_flags = np.empty(n_paths, dtype=np.int64)
    out_integrals = np.zeros((n_paths, max(n_f, 1)), dtype=np.float64)
    out_discount = np.empty(n_paths, dtype=np.float64)
    n_blocks = (n_paths + cfg.block_size - 1) // cfg.block_size
    hist_blocks = np.zeros((n_blocks if grid_on else 1, gn.prod() if grid_on else 1))

    _kernels.exit_kernel(
        np.uint64(cfg.seed),
        int(path0),
        n_paths,
        cfg.block_size,
        x0,
        r,
        mp[0],
        mp[1],
        mp[2],
        upack[0],
        upack[1],
        upack[2],
        upack[3],
        upack[4],
        upack[5],
        upack[6],
        upack[7],
        mpack[0],
        mpack[1],
        mpack[2],
        mpack[3],
        mpack[4],
        mpack[5],
        mpack[6],
        mpack[7],
        fpack[0],
        fpack[1],
        fpack[2],
        n_f,
        float(beta),
        grid_on,
        glo,
        ginv,
        gn,
        cfg.dt,
        max_steps,
        cfg.bridge_correction,
        _STOP_MODES[stop_mode],
        mu0,
        cfg.explosion_bound,
        n_scratch_words(r),
        n_gauss_scratch(r),
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
    )

    flags = out_flags.copy()
    exploded = out_kind == KIND_EXPLODED
    flags[exploded] |= FLAG_EXPLODED
    kind = out_kind.copy()
    kind[exploded] = KIND_EXITED_CLOSURE

    return TrajectoryBatch(
        model=model,
        domain=domain,
        config=cfg,
        x0=x0,
        stop_mode=stop_mode,
        start_membership=mu0,
        path0=path0,
        beta=float(beta),
        time=out_time,
        kind=kind,
        state=out_state,
        tau_pos=out_tau_pos,
        monitor_time=out_mon_time,
        steps=out_steps,
        flags=flags,
        integrals=out_integrals[:, :n_f] if n_f else out_integrals[:, :0],
        discount=out_discount,
        hist_raw=hist_blocks.sum(axis=0) if grid_on else None,
        grid=grid,
    )


def _poly_eval_py(coeffs, expts, offsets, slot, x):
    # mirrors _kernels._poly_eval term-for-term for bit-identical results
    acc = 0.0
    for t in range(offsets[slot], offsets[slot + 1]):
        v = float(coeffs[t])
        for d in range(len(x)):
            for _ in range(int(expts[t, d])):
                v *= x[d]
        acc += v
    return acc


def _membership_py(pack, x):
    kind, v1, v2, scal, sc, se, so, stol = pack
    m = len(x)
    if kind == 0:
        return -1
    if kind == 1:
        on_face = False
        for j in range(m):
            if x[j] < v1[j] or x[j] > v2[j]:
                return 1
            if x[j] == v1[j] or x[j] == v2[j]:
                on_face = True
        return 0 if on_face else -1
    if kind in (2, 3):
        d2 = 0.0
        for j in range(m):
            dd = x[j] - v1[j]
            d2 += dd * dd
        r2 = scal * scal
        if d2 == r2:
            return 0
        inside = d2 < r2
        if kind == 2:
            return -1 if inside else 1
        return 1 if inside else -1
    if kind == 4:
        v = 0.0
        for j in range(m):
            v += v1[j] * x[j]
        if v == scal:
            return 0
        return -1 if v < scal else 1
    if kind == 5:
        val = _poly_eval_py(sc, se, so, 0, x)
        band = stol * (1.0 + abs(val))
        if val < -band:
            return -1
        if val > band:
            return 1
        return 0
    return -1


def _cross_theta_py(d0, d1):
    if d1 < 0.0:
        return d0 / (d0 - d1)
    s = d0 + d1
    return d0 / s if s > 0.0 else 0.0


def _bridge_test_py(pack, x, xn, sig, r_noise, dt, u):
    kind, v1, v2, scal = pack[0], pack[1], pack[2], pack[3]
    m = len(x)
    cutoff = 40.0
    if kind == 1:
        pnc = 1.0
        best_p = 0.0
        best_k = -1
        best_hi = False
        for k in range(m):
            akk = 0.0
            for i in range(r_noise):
                akk += sig[k][i] * sig[k][i]
            if akk <= 0.0:
                continue
            denom = akk * dt
            d0 = x[k] - v1[k]
            d1 = xn[k] - v1[k]
            ex = 2.0 * d0 * d1 / denom
            if ex < cutoff:
                p = math.exp(-ex)
                pnc *= 1.0 - min(p, 1.0)
                if p > best_p:
                    best_p, best_k, best_hi = p, k, False
            d0 = v2[k] - x[k]
            d1 = v2[k] - xn[k]
            ex = 2.0 * d0 * d1 / denom
            if ex < cutoff:
                p = math.exp(-ex)
                pnc *= 1.0 - min(p, 1.0)
                if p > best_p:
                    best_p, best_k, best_hi = p, k, True
        if best_k < 0 or u >= 1.0 - pnc:
            return -1.0, None
        if best_hi:
            d0 = v2[best_k] - x[best_k]
            d1 = v2[best_k] - xn[best_k]
            face = v2[best_k]
        else:
            d0 = x[best_k] - v1[best_k]
            d1 = xn[best_k] - v1[best_k]
            face = v1[best_k]
        theta = _cross_theta_py(d0, d1)
        y = [x[j] + theta * (xn[j] - x[j]) for j in range(m)]
        y[best_k] = face
        return theta, y
    if kind in (2, 3):
        n0 = 0.0
        n1 = 0.0
        v = [0.0] * m
        for j in range(m):
            dd = x[j] - v1[j]
            v[j] = dd
            n0 += dd * dd
            dd = xn[j] - v1[j]
            n1 += dd * dd
        n0 = math.sqrt(n0)
        n1 = math.sqrt(n1)
        if kind == 2:
            d0, d1 = scal - n0, scal - n1
        else:
            d0, d1 = n0 - scal, n1 - scal
        if n0 <= 0.0:
            return -1.0, None
        for j in range(m):
            v[j] /= n0
        ann = 0.0
        for i in range(r_noise):
            dot = 0.0
            for j in range(m):
                dot += v[j] * sig[j][i]
            ann += dot * dot
        if ann <= 0.0:
            return -1.0, None
        ex = 2.0 * d0 * d1 / (ann * dt)
        if ex >= cutoff or u >= math.exp(-ex):
            return -1.0, None
        theta = _cross_theta_py(d0, d1)
        y = [x[j] + theta * (xn[j] - x[j]) for j in range(m)]
        nrm = math.sqrt(sum((y[j] - v1[j]) ** 2 for j in range(m)))
        if nrm > 0.0:
            y = [v1[j] + scal * (y[j] - v1[j]) / nrm for j in range(m)]
        return theta, y
    if kind == 4:
        dot0 = sum(v1[j] * x[j] for j in range(m))
        dot1 = sum(v1[j] * xn[j] for j in range(m))
        d0, d1 = scal - dot0, scal - dot1
        ann = 0.0
        for i in range(r_noise):
            dot = 0.0
            for j in range(m):
                dot += v1[j] * sig[j][i]
            ann += dot * dot
        if ann <= 0.0:
            return -1.0, None
        ex = 2.0 * d0 * d1 / (ann * dt)
        if ex >= cutoff or u >= math.exp(-ex):
            return -1.0, None
        theta = _cross_theta_py(d0, d1)
        y = [x[j] + theta * (xn[j] - x[j]) for j in range(m)]
        doty = sum(v1[j] * y[j] for j in range(m))
        y = [y[j] - (doty - scal) * v1[j] for j in range(m)]
        return theta, y
    return -1.0, None


def simulate_stopped_reference(
    model: DiffusionModel,
    domain: Domain | None,
    x0,
    cfg: SimConfig,
    n_paths: int = 1,
    *,
    stop_mode: str = "exit",
    integrands=(),
    beta: float = 0.0,
    monitor: Domain | None = None,
    grid: HistGrid | None = None,
    path0: int = 0,
    start_membership: int | None = None,
) -> TrajectoryBatch:
    """Plain-Python twin of simulate_stopped, step-for-step identical.

    Slow; intended for kernel cross-validation and (with cfg.store_path) for
    recording trajectories.  Stored paths are subsampled by cfg.path_stride
    and always include the stopping state.
    """
    assert n_paths >= 1
    assert beta >= 0.0
    if stop_mode not in _STOP_MODES:
        raise ValueError(f"stop_mode must be one of {sorted(_STOP_MODES)}")
    x0a, integrands, mp, upack, mpack, fpack, grid_on, glo, ginv, gn = _prepare(
        model, domain, x0, integrands, grid, monitor
    )
    mu0 = _resolve_start(domain, x0a, start_membership)
    mode = _STOP_MODES[stop_mode]
    m = model.dim_state
    r = model.dim_noise
    n_f = len(integrands)
    max_steps = cfg.max_steps
    dt = cfg.dt
    sdt = math.sqrt(dt)
    edt = math.exp(-beta * dt) if beta != 0.0 else 1.0
    cw = (1.0 - edt) / beta if beta != 0.0 else dt
    mp_c, mp_e, mp_o = mp
    f_c, f_e, f_o = fpack

    out_time = np.empty(n_paths)
    out_kind = np.empty(n_paths, dtype=np.int64)
    out_state = np.empty((n_paths, m))
    out_tau_pos = np.empty(n_paths)
    out_mon_time = np.empty(n_paths)
    out_steps = np.empty(n_paths, dtype=np.int64)
    out_flags = np.empty(n_paths, dtype=np.int64)
    out_integrals = np.zeros((n_paths, max(n_f, 1)))
    out_discount = np.empty(n_paths)
    hist = np.zeros(int(gn.prod())) if grid_on else None
    words = np.empty(n_scratch_words(r), dtype=np.uint64)
    gauss = np.empty(n_gauss_scratch(r))
    paths = []

    for ii in range(n_paths):
        pidx = np.uint64(path0 + ii)
        x = [float(v) for v in x0a]
        t = 0.0
        disc = 1.0
        mu_x = mu0
        kind = KIND_CENSORED
        stop_t = max_steps * dt
        tau_pos = math.inf
        mon_t = math.inf
        flags = 0
        steps = max_steps
        stopped = False
        y_final = None
        trace = [(0.0, tuple(x))] if cfg.store_path else None
        for k in range(max_steps):
            u_b = step_draws(np.uint64(cfg.seed), pidx, np.uint64(k), r, words, gauss)
            bv = [_poly_eval_py(mp_c, mp_e, mp_o, j, x) for j in range(m)]
            sig = [
                [_poly_eval_py(mp_c, mp_e, mp_o, m + j * r + i, x) for i in range(r)]
                for j in range(m)
            ]
            expl = False
            xn = [0.0] * m
            for j in range(m):
                acc = 0.0
                for i in range(r):
                    acc += sig[j][i] * gauss[i]
                v = x[j] + bv[j] * dt + sdt * acc
                xn[j] = v
                if not math.isfinite(v) or abs(v) > cfg.explosion_bound:
                    expl = True

            def _accrue(weight):
                if mu_x != -1 or weight == 0.0:
                    return
                for s in range(n_f):
                    out_integrals[ii, s] += _poly_eval_py(f_c, f_e, f_o, s, x) * weight
                if grid_on:
                    lin = 0
                    inside = True
                    for j in range(m):
                        c = int(math.floor((x[j] - glo[j]) * ginv[j]))
                        if c < 0 or c >= gn[j]:
                            inside = False
                            break
                        lin = lin * int(gn[j]) + c
                    if inside:
                        hist[lin] += weight

            if expl:
                kind = KIND_EXPLODED
                stop_t = t + dt
                steps = k + 1
                _accrue(disc * cw)
                disc *= edt
                y_final = xn
                stopped = True
                break
            if mpack[0] >= 0 and mon_t == math.inf:
                if _membership_py(mpack, xn) >= 0:
                    mon_t = t + dt
            mu_n = _membership_py(upack, xn)
            theta, y = -1.0, None
            if cfg.bridge_correction and (mu_x == 0 or mu_n < (0 if mode == 0 else 1)):
                theta, y = _bridge_test_py(upack, x, xn, sig, r, dt, u_b)
            if mu_x == 0 and theta >= 0.0:
                kind = KIND_EXITED_U if mode == 0 else KIND_EXITED_CLOSURE
                stop_t = t + theta * dt
                steps = k + 1
                if tau_pos == math.inf:
                    tau_pos = stop_t
                flags |= FLAG_BRIDGE_EXIT
                disc *= math.exp(-beta * theta * dt) if beta != 0.0 else 1.0
                y_final = y
                stopped = True
                break
            if mode == 0:
                if mu_n >= 0:
                    kind = KIND_EXITED_U if mu_n == 0 else KIND_EXITED_CLOSURE
                    stop_t = t + dt
                    steps = k + 1
                    tau_pos = stop_t
                    _accrue(disc * cw)
                    disc *= edt
                    y_final = xn
                    stopped = True
                    break
                if theta >= 0.0:
                    kind = KIND_EXITED_U
                    stop_t = t + theta * dt
                    steps = k + 1
                    tau_pos = stop_t
                    flags |= FLAG_BRIDGE_EXIT
                    w = (
                        disc * (theta * dt)
                        if beta == 0.0
                        else disc * (1.0 - math.exp(-beta * theta * dt)) / beta
                    )
                    _accrue(w)
                    disc *= math.exp(-beta * theta * dt) if beta != 0.0 else 1.0
                    y_final = y
                    stopped = True
                    break
            else:
                if mu_n == 1:
                    kind = KIND_EXITED_CLOSURE
                    stop_t = t + dt
                    steps = k + 1
                    if tau_pos == math.inf:
                        tau_pos = stop_t
                    _accrue(disc * cw)
                    disc *= edt
                    y_final = xn
                    stopped = True
                    break
                if theta >= 0.0:
                    kind = KIND_EXITED_CLOSURE
                    stop_t = t + theta * dt
                    steps = k + 1
                    if tau_pos == math.inf:
                        tau_pos = stop_t
                    flags |= FLAG_BRIDGE_EXIT
                    w = (
                        disc * (theta * dt)
                        if beta == 0.0
                        else disc * (1.0 - math.exp(-beta * theta * dt)) / beta
                    )
                    _accrue(w)
                    disc *= math.exp(-beta * theta * dt) if beta != 0.0 else 1.0
                    y_final = y
                    stopped = True
                    break
                if mu_n == 0 and tau_pos == math.inf:
                    tau_pos = t + dt
            _accrue(disc * cw)
            if mu_x == 0 and mu_n == -1:
                flags |= FLAG_REENTERED
            mu_x = mu_n
            x = xn
            t += dt
            disc *= edt
            if cfg.store_path and (k + 1) % cfg.path_stride == 0:
                trace.append((t, tuple(x)))
        final = y_final if stopped else x
        out_state[ii] = final
        out_time[ii] = stop_t
        out_kind[ii] = kind
        out_tau_pos[ii] = tau_pos
        out_mon_time[ii] = mon_t
        out_steps[ii] = steps
        out_flags[ii] = flags
        out_discount[ii] = disc
        if cfg.store_path:
            if not trace or trace[-1][0] != stop_t:
                trace.append((stop_t, tuple(final)))
            paths.append(trace)

    flags = out_flags.copy()
    exploded = out_kind == KIND_EXPLODED
    flags[exploded] |= FLAG_EXPLODED
    kind_arr = out_kind.copy()
    kind_arr[exploded] = KIND_EXITED_CLOSURE
    return TrajectoryBatch(
        model=model,
        domain=domain,
        config=cfg,
        x0=x0a,
        stop_mode=stop_mode,
        start_membership=mu0,
        path0=path0,
        beta=float(beta),
        time=out_time,
        kind=kind_arr,
        state=out_state,
        tau_pos=out_tau_pos,
        monitor_time=out_mon_time,
        steps=out_steps,
        flags=flags,
        integrals=out_integrals[:, :n_f] if n_f else out_integrals[:, :0],
        discount=out_discount,
        hist_raw=hist,
        grid=grid,
        paths=paths,
    )


def exit_time_triple(model, domain, x0, cfg: SimConfig, path_index: int = 0):
    """One path's (tau, tau0, taubar) estimates plus flags.

    tau0 is the first t >= 0 outside U (0 for boundary starts), tau the first
    positive such time, taubar the first exit from the closure.  Censored
    entries are None.  The definitional ordering tau0 <= tau <= taubar holds
    whenever the entries are present.
    """
    batch = simulate_stopped(
        model, domain, x0, cfg, 1, stop_mode="closure", path0=path_index
    )
    rec = batch.record(0)
    tau = rec.tau_pos
    tau0 = 0.0 if batch.start_membership >= 0 else tau
    taubar = rec.exit_time if rec.exit_kind == "exited_closure" else None
    flags = {
        "censored": rec.exit_kind == "censored",
        "reentered": rec.reentered,
        "bridge_exit": rec.bridge_exit,
        "exploded": rec.exploded,
    }
    return tau, tau0, taubar, flags


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def dump_exits_csv(batch: TrajectoryBatch, path) -> None:
    """Exit records as CSV: one row per path, 17 significant digits."""
    m = batch.state.shape[1]
    n_f = batch.integrals.shape[1]
    cols = ["path_index", "exit_time", "exit_kind", "censored"]
    cols += [f"exit_point_{j}" for j in range(m)]
    cols += ["tau_pos", "steps", "flags", "discount"]
    cols += [f"integral_{s}" for s in range(n_f)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(batch.n_paths):
            censored = batch.kind[i] == KIND_CENSORED
            row = [
                str(batch.path0 + i),
                "" if censored else _fmt(batch.time[i]),
                KIND_NAMES[int(batch.kind[i])],
                "1" if censored else "0",
            ]
            row += ["" if censored else _fmt(v) for v in batch.state[i]]
            tp = batch.tau_pos[i]
            row.append("" if math.isinf(tp) else _fmt(tp))
            row.append(str(int(batch.steps[i])))
            row.append(str(int(batch.flags[i])))
            row.append(_fmt(batch.discount[i]))
            row += [_fmt(v) for v in batch.integrals[i]]
            fh.write(",".join(row) + "\n")


def dump_paths_csv(batch: TrajectoryBatch, path) -> None:
    """Stored trajectories as CSV rows (path_index, t, x_0..x_{m-1})."""
    if not batch.paths:
        raise ValueError("batch has no stored paths (set store_path in SimConfig)")
    m = batch.state.shape[1]
    cols = ["path_index", "t"] + [f"x_{j}" for j in range(m)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i, trace in enumerate(batch.paths):
            for t, xs in trace:
                fh.write(
                    ",".join([str(batch.path0 + i), _fmt(t)] + [_fmt(v) for v in xs])
                    + "\n"
                )
