"""Long-run behavior: explosion certificates, cycles, invariant measure.

Four layers, in the order one would use them on a new model:

* ``certify_nonexplosive`` checks a polynomial Lyapunov pair
  Lw <= C w + D on an exhaustion, with exact polynomial residuals on grids
  and boundary minima that must grow.
* ``run_cycles`` drives chains through out-and-back sphere excursions
  between two concentric spheres and records per-cycle durations, return
  points and occupation counts.
* ``embedded_chain_stationary`` and ``estimate_invariant_measure`` turn the
  cycle records into a stationary law of the return chain and a normalized
  occupation measure with batch-means errors.
* ``classify_recurrence`` and ``estimate_exp_exit_bound`` are verdict-style
  probes: hitting-probability saturation curves for the trichotomy
  transient / null / positive, and a censor-aware sweep of exp(delta tau)
  over a start grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import cycle_kernel, pack_model
from ._rng import n_gauss_scratch, n_scratch_words
from .model import DiffusionModel, Domain, Exhaustion, boundary_sample
from .polyfield import MultiPoly
from .simulate import HistGrid, SimConfig, apply_thread_count, simulate_stopped

__all__ = [
    "LyapunovCertificate",
    "certify_nonexplosive",
    "CycleConfig",
    "CycleSample",
    "run_cycles",
    "ChainMeasure",
    "embedded_chain_stationary",
    "InvariantMeasureEstimate",
    "estimate_invariant_measure",
    "RecurrenceReport",
    "classify_recurrence",
    "ExpExitReport",
    "estimate_exp_exit_bound",
]


# ---------------------------------------------------------------------------
# Lyapunov certificate


@dataclass(frozen=True)
class LyapunovCertificate:
    """Grid evidence for Lw <= C w + D on an exhaustion of the state space.

    ``residual`` is the exact polynomial Lw - C w - D; ``residual_max[k-1]``
    is its max over the grid covering the closure of X_k, and
    ``boundary_minima[k-1]`` is the min of w over boundary samples of X_k.
    Validity needs every residual max <= 0, w >= 0 on all grids, strictly
    increasing boundary minima, and the last minimum above the growth floor.
    """

    w: MultiPoly
    residual: MultiPoly
    exhaustion: Exhaustion
    C: float
    D: float
    k_max: int
    grid_n: int
    growth_floor: float
    residual_max: tuple
    boundary_minima: tuple
    nonneg_ok: bool
    valid: bool
    witness_point: tuple | None = None
    witness_value: float = 0.0
    note: str = ""

    def lines(self) -> list:
        out = [
            "Lyapunov certificate (C=%g, D=%g, k<=%d): %s"
            % (self.C, self.D, self.k_max, "VALID" if self.valid else "invalid")
        ]
        for k, (r, wb) in enumerate(zip(self.residual_max, self.boundary_minima), 1):
            out.append("  X_%d: max(Lw - Cw - D) = %.6g, min_boundary w = %.6g" % (k, r, wb))
        if self.note:
            out.append("  note: " + self.note)
        if self.witness_point is not None:
            out.append(
                "  residual > 0 at %s (value %.6g)"
                % (list(self.witness_point), self.witness_value)
            )
        return out


def _cover_grid(domain: Domain, grid_n: int) -> np.ndarray:
    """Grid points covering the closure of a bounded ball/box domain."""
    if domain.kind == "ball":
        c = np.asarray(domain.center)
        axes = [np.linspace(c[j] - domain.radius, c[j] + domain.radius, grid_n) for j in range(domain.dim)]
    elif domain.kind == "box":
        axes = [np.linspace(domain.lo[j], domain.hi[j], grid_n) for j in range(domain.dim)]
    else:
        raise ValueError("exhaustion members must be balls or boxes")
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    return pts[domain.membership(pts) != 1]  # closure = interior + boundary


def certify_nonexplosive(
    model: DiffusionModel,
    w: MultiPoly,
    exhaustion: Exhaustion,
    C: float,
    D: float,
    k_max: int,
    grid_n: int,
    *,
    growth_floor: float = 10.0,
    boundary_n: int = 256,
) -> LyapunovCertificate:
    """Check the pair (w, C, D) on X_1 .. X_{k_max} with exact residuals.

    The residual Lw - C w - D is formed once as a polynomial, so grid values
    carry no differencing error.  Boundary minima of w must increase strictly
    in k and clear the growth floor at k_max, which is the grid version of
    w -> infinity along the exhaustion.
    """
    if not isinstance(w, MultiPoly):
        raise TypeError("certify_nonexplosive needs a polynomial w; got %r" % type(w).__name__)
    assert C > 0.0 and D > 0.0
    assert k_max >= 2 and grid_n >= 4
    residual = model.generator(w) - (w * C) - MultiPoly.const(w.dim, D)
    res_max, bnd_min = [], []
    nonneg_ok = True
    witness = None
    witness_val = 0.0
    for k in range(1, k_max + 1):
        dom = exhaustion.domain(k)
        pts = _cover_grid(dom, grid_n)
        rv = np.asarray(residual(pts), dtype=np.float64)
        wv = np.asarray(w(pts), dtype=np.float64)
        if np.any(wv < 0.0):
            nonneg_ok = False
        mx = float(np.max(rv))
        res_max.append(mx)
        if mx > 0.0 and witness is None:
            witness = tuple(pts[int(np.argmax(rv))].tolist())
            witness_val = mx
        bpts = boundary_sample(dom, boundary_n, seed=0)
        bnd_min.append(float(np.min(np.asarray(w(bpts), dtype=np.float64))))
    increasing = all(b > a for a, b in zip(bnd_min, bnd_min[1:]))
    grows = bnd_min[-1] >= growth_floor
    ok = nonneg_ok and witness is None and increasing and grows
    note = ""
    if not nonneg_ok:
        note = "w takes negative values on the sampled exhaustion"
    elif witness is not None:
        note = "drift condition fails inside the exhaustion"
    elif not increasing:
        note = "boundary minima of w do not increase along the exhaustion"
    elif not grows:
        note = "w too flat: last boundary minimum %.3g below floor %.3g" % (
            bnd_min[-1],
            growth_floor,
        )
    return LyapunovCertificate(
        w=w,
        residual=residual,
        exhaustion=exhaustion,
        C=float(C),
        D=float(D),
        k_max=int(k_max),
        grid_n=int(grid_n),
        growth_floor=float(growth_floor),
        residual_max=tuple(res_max),
        boundary_minima=tuple(bnd_min),
        nonneg_ok=nonneg_ok,
        valid=ok,
        witness_point=witness,
        witness_value=witness_val,
        note=note,
    )


# ---------------------------------------------------------------------------
# cycles between concentric spheres


@dataclass(frozen=True)
class CycleConfig:
    """Concentric sphere pair: out to |x-c| = rho_out, back to |x-c| = rho_in."""

    center: tuple
    rho_in: float
    rho_out: float

    def __post_init__(self):
        assert self.rho_in > 0.0
        if not self.rho_in < self.rho_out:
            raise ValueError("need rho_in < rho_out")

    @property
    def inner(self) -> Domain:
        return Domain.ball(self.center, self.rho_in)

    @property
    def outer(self) -> Domain:
        return Domain.ball(self.center, self.rho_out)


@dataclass
class CycleSample:
    """Raw cycle records from ``run_cycles``.

    Arrays are (n_chains, n_cycles[, ...]); ``ok`` marks completed cycles.
    ``counts`` are integer full-step occupation counts per grid cell assigned
    to the cycle owning the step's left endpoint; ``steps_in`` tallies the
    same steps, so counts.sum(cell axis) == steps_in exactly.
    """

    cycle: CycleConfig
    cfg: SimConfig
    grid: HistGrid | None
    start_points: np.ndarray
    durations: np.ndarray
    points: np.ndarray
    counts: np.ndarray
    steps_tot: np.ndarray
    steps_in: np.ndarray
    ok: np.ndarray

    @property
    def n_chains(self) -> int:
        return int(self.ok.shape[0])

    @property
    def n_cycles(self) -> int:
        return int(self.ok.shape[1])

    @property
    def completed(self) -> int:
        return int(np.sum(self.ok))

    @property
    def censored(self) -> int:
        return int(self.ok.size - np.sum(self.ok))


def run_cycles(
    model: DiffusionModel,
    cycle: CycleConfig,
    n_cycles: int,
    cfg: SimConfig,
    *,
    n_chains: int = 4,
    grid: HistGrid | None = None,
    max_steps_per_cycle: int | None = None,
) -> CycleSample:
    """Drive n_chains independent chains through n_cycles sphere excursions.

    Starts are spread deterministically over the inner sphere.  Crossing
    times are bisection-refined along the step chord; trajectories are never
    teleported, so the chain's randomness is exactly the underlying path's.
    A chain that exhausts max_steps_per_cycle or explodes forfeits its
    remaining cycles (ok = 0 rows).  Raises if no cycle completes at all.
    """
    assert n_cycles >= 1 and n_chains >= 1
    m = model.dim_state
    assert len(cycle.center) == m
    if max_steps_per_cycle is None:
        max_steps_per_cycle = cfg.max_steps
    starts = boundary_sample(cycle.inner, n_chains, seed=cfg.seed)
    mp_c, mp_e, mp_o = pack_model(model)
    r = model.dim_noise
    if grid is not None:
        assert grid.dim == m
        grid_on = True
        grid_lo, grid_inv, grid_nv = grid.packs()
        ncells = grid.n_cells
    else:
        grid_on = False
        grid_lo = np.zeros(m)
        grid_inv = np.ones(m)
        grid_nv = np.ones(m, dtype=np.int64)
        ncells = 1
    out_duration = np.zeros((n_chains, n_cycles))
    out_point = np.zeros((n_chains, n_cycles, m))
    out_counts = np.zeros((n_chains, n_cycles, ncells), dtype=np.int64)
    out_steps_tot = np.zeros((n_chains, n_cycles), dtype=np.int64)
    out_steps_in = np.zeros((n_chains, n_cycles), dtype=np.int64)
    out_ok = np.zeros((n_chains, n_cycles), dtype=np.int8)
    apply_thread_count(cfg.threads)
    cycle_kernel(
        np.uint64(cfg.seed),
        n_chains,
        np.ascontiguousarray(starts, dtype=np.float64),
        r,
        mp_c,
        mp_e,
        mp_o,
        np.asarray(cycle.center, dtype=np.float64),
        float(cycle.rho_in),
        float(cycle.rho_out),
        cfg.dt,
        int(max_steps_per_cycle),
        n_cycles,
        grid_on,
        grid_lo,
        grid_inv,
        grid_nv,
        cfg.explosion_bound,
        n_scratch_words(r),
        n_gauss_scratch(r),
        out_duration,
        out_point,
        out_counts,
        out_steps_tot,
        out_steps_in,
        out_ok,
    )
    ok = out_ok.astype(bool)
    if not np.any(ok):
        raise RuntimeError(
            "zero completed cycles: raise max_steps_per_cycle, shrink rho_out, "
            "or check that the model actually returns to the inner sphere"
        )
    return CycleSample(
        cycle=cycle,
        cfg=cfg,
        grid=grid,
        start_points=starts,
        durations=out_duration,
        points=out_point,
        counts=out_counts,
        steps_tot=out_steps_tot,
        steps_in=out_steps_in,
        ok=ok,
    )


# ---------------------------------------------------------------------------
# embedded return chain


@dataclass(frozen=True)
class ChainMeasure:
    """Empirical stationary law of the inner-sphere return chain.

    1D spheres are two atoms (left/right of the center); higher dimensions
    are binned by angle in the first two coordinates.
    """

    kind: str  # "atoms" | "angular"
    labels: tuple
    masses: tuple
    n_points: int

    def lines(self) -> list:
        out = ["return-chain law (%s, %d points):" % (self.kind, self.n_points)]
        for lab, mass in zip(self.labels, self.masses):
            out.append("  %s: %.4f" % (lab, mass))
        return out


def embedded_chain_stationary(
    samples: CycleSample, *, burn_in: int = 0, n_bins: int = 16
) -> ChainMeasure:
    """Histogram the completed-cycle return points after a burn-in."""
    assert burn_in >= 0
    if burn_in >= samples.n_cycles:
        raise ValueError("burn_in consumes every cycle")
    ok = samples.ok[:, burn_in:]
    pts = samples.points[:, burn_in:][ok]
    if pts.shape[0] < 10:
        raise ValueError("too few completed cycles after burn-in (%d)" % pts.shape[0])
    c = np.asarray(samples.cycle.center)
    if pts.shape[1] == 1:
        right = pts[:, 0] > c[0]
        n = pts.shape[0]
        masses = (float(np.sum(~right)) / n, float(np.sum(right)) / n)
        return ChainMeasure(
            kind="atoms", labels=("-rho", "+rho"), masses=masses, n_points=n
        )
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    edges = np.linspace(-math.pi, math.pi, n_bins + 1)
    hist, _ = np.histogram(ang, bins=edges)
    n = pts.shape[0]
    labels = tuple(
        "[%+.2f, %+.2f)" % (edges[i], edges[i + 1]) for i in range(n_bins)
    )
    return ChainMeasure(
        kind="angular",
        labels=labels,
        masses=tuple(float(h) / n for h in hist),
        n_points=n,
    )


# ---------------------------------------------------------------------------
# invariant measure from occupation


@dataclass(frozen=True)
class InvariantMeasureEstimate:
    """Normalized occupation measure over the cycle grid.

    mu is the mean occupation (time units) per completed cycle per cell;
    mass = sum(mu) is the mean per-cycle time spent in the gridded region;
    mu_tilde = mu / mass.  stderr is per-cell batch means over chains.
    """

    grid: HistGrid
    mu: np.ndarray
    mass: float
    mu_tilde: np.ndarray
    stderr: np.ndarray
    n_cycles_used: int
    mean_cycle_duration: float

    def total_mass(self) -> float:
        return float(np.sum(self.mu_tilde))


def estimate_invariant_measure(
    samples: CycleSample,
    grid: HistGrid | None = None,
    *,
    burn_in: int = 0,
    min_cycles: int = 100,
) -> InvariantMeasureEstimate:
    """Ratio-of-means occupation estimate from completed cycles.

    ``grid`` defaults to the one the cycles were accumulated on; passing a
    different grid is an error since occupation counts are not re-binnable.
    """
    if samples.grid is None:
        raise ValueError("run_cycles must be given a grid to estimate occupation")
    if grid is not None and grid != samples.grid:
        raise ValueError("occupation was accumulated on a different grid; rerun run_cycles")
    if burn_in >= samples.n_cycles:
        raise ValueError("burn_in consumes every cycle")
    ok = samples.ok[:, burn_in:]
    n_used = int(np.sum(ok))
    if n_used < min_cycles:
        raise ValueError(
            "only %d completed cycles after burn-in; need >= %d" % (n_used, min_cycles)
        )
    counts = samples.counts[:, burn_in:][ok]  # (n_used, ncells)
    dt = samples.cfg.dt
    mu = counts.mean(axis=0) * dt
    mass = float(np.sum(mu))
    if mass <= 0.0:
        raise ValueError("no occupation recorded on the grid; widen it")
    mu_tilde = mu / mass

    # batch means: one batch per chain when possible, else splits of cycles
    ok_full = samples.ok[:, burn_in:]
    batches = []
    if samples.n_chains >= 2:
        for c in range(samples.n_chains):
            sel = samples.counts[c, burn_in:][ok_full[c]]
            if sel.shape[0] > 0:
                tot = float(sel.sum())
                if tot > 0:
                    batches.append(sel.sum(axis=0) / tot)
    else:
        sel = samples.counts[0, burn_in:][ok_full[0]]
        split = np.array_split(sel, min(8, sel.shape[0]), axis=0)
        for part in split:
            tot = float(part.sum())
            if part.shape[0] > 0 and tot > 0:
                batches.append(part.sum(axis=0) / tot)
    if len(batches) >= 2:
        bm = np.stack(batches, axis=0)
        stderr = bm.std(axis=0, ddof=1) / math.sqrt(bm.shape[0])
    else:
        stderr = np.full(mu.shape, np.nan)
    return InvariantMeasureEstimate(
        grid=samples.grid,
        mu=mu,
        mass=mass,
        mu_tilde=mu_tilde,
        stderr=stderr,
        n_cycles_used=n_used,
        mean_cycle_duration=float(samples.durations[:, burn_in:][ok].mean()),
    )


# ---------------------------------------------------------------------------
# recurrence trichotomy


@dataclass(frozen=True)
class RecurrenceReport:
    """Hitting-probability saturation curves for a target ball.

    For each start, P{hit by T} over the horizon schedule plus conditional
    hitting-time means, and a per-start verdict; the overall verdict is the
    common one or "inconclusive".
    """

    center: tuple
    radius: float
    starts: tuple
    horizons: tuple
    hit_probs: np.ndarray  # (n_starts, n_horizons)
    hit_stderrs: np.ndarray
    cond_means: np.ndarray
    per_start: tuple
    verdict: str
    n_paths: int

    def lines(self) -> list:
        out = ["recurrence probe of ball(%s, %g): %s" % (list(self.center), self.radius, self.verdict)]
        for i, x in enumerate(self.starts):
            row = ", ".join(
                "P(T=%g)=%.4f" % (T, self.hit_probs[i, j])
                for j, T in enumerate(self.horizons)
            )
            out.append("  from %s: %s [%s]" % (list(x), row, self.per_start[i]))
        return out


def classify_recurrence(
    model: DiffusionModel,
    center,
    radius: float,
    starts,
    horizons,
    n_paths: int,
    cfg: SimConfig,
    *,
    plateau_gap: float = 0.01,
    transient_cap: float = 0.95,
    recurrent_floor: float = 0.99,
    positive_growth: float = 1.15,
    null_growth: float = 1.25,
) -> RecurrenceReport:
    """Classify the ball's hitting behavior from each start.

    Verdict logic per start, using the last two horizons: a flat curve
    saturating visibly below 1 reads transient; a curve at 1 with stable
    conditional hitting means reads positive recurrent; a still-rising curve
    with conditional means growing by >= null_growth per horizon doubling
    reads null recurrent; anything else is inconclusive.
    """
    hs = tuple(sorted(float(t) for t in horizons))
    assert len(hs) >= 2 and hs[0] > 0.0
    target = Domain.outside_ball(center, radius)
    starts = [np.asarray(x, dtype=np.float64) for x in starts]
    for x in starts:
        if int(target.membership(x)) != -1:
            raise ValueError("start %s is not strictly outside the ball" % x)
    run_cfg = cfg.replace(horizon=hs[-1])
    n_s, n_t = len(starts), len(hs)
    probs = np.zeros((n_s, n_t))
    errs = np.zeros((n_s, n_t))
    cmeans = np.full((n_s, n_t), np.nan)
    verdicts = []
    for i, x in enumerate(starts):
        batch = simulate_stopped(model, target, x, run_cfg, n_paths, stop_mode="exit")
        hit = batch.exited_mask & ~batch.exploded_mask
        for j, T in enumerate(hs):
            sel = hit & (batch.time <= T)
            p = float(np.mean(sel))
            probs[i, j] = p
            errs[i, j] = math.sqrt(p * (1.0 - p) / n_paths)
            if np.any(sel):
                cmeans[i, j] = float(np.mean(batch.time[sel]))
        dp = probs[i, -1] - probs[i, -2]
        rise_tol = max(plateau_gap, 3.0 * errs[i, -1])
        growth = (
            cmeans[i, -1] / cmeans[i, -2]
            if np.isfinite(cmeans[i, -2]) and cmeans[i, -2] > 0
            else np.nan
        )
        if dp <= rise_tol and probs[i, -1] <= transient_cap:
            verdicts.append("transient-evidence")
        elif probs[i, -1] >= recurrent_floor and np.isfinite(growth) and growth <= positive_growth:
            verdicts.append("positive-recurrent-evidence")
        elif dp > rise_tol and np.isfinite(growth) and growth >= null_growth:
            verdicts.append("null-recurrent-evidence")
        else:
            verdicts.append("inconclusive")
    overall = verdicts[0] if len(set(verdicts)) == 1 else "inconclusive"
    return RecurrenceReport(
        center=tuple(float(v) for v in center),
        radius=float(radius),
        starts=tuple(tuple(x.tolist()) for x in starts),
        horizons=hs,
        hit_probs=probs,
        hit_stderrs=errs,
        cond_means=cmeans,
        per_start=tuple(verdicts),
        verdict=overall,
        n_paths=n_paths,
    )


# ---------------------------------------------------------------------------
# exponential exit-moment sweep


@dataclass(frozen=True)
class ExpExitReport:
    """Censor-aware sweep of E exp(delta tau) over starts and deltas.

    estimates[d, i] uses exp(delta min(tau, T)); growth[d, i] compares the
    same samples censored at T/2, so a value near 1 means the estimate is
    still climbing with the horizon.  tail_rates[i] is the mean-excess
    estimate of the exponential tail rate lambda of tau from start i; since
    exp(delta tau) has a power tail of index lambda/delta, the moment only
    exists for delta < lambda.  finite[d] needs every start to keep the
    censor share and growth under tolerance AND delta under
    tail_margin * tail_rate.  delta_star is the largest finite delta, or
    None.
    """

    deltas: tuple
    starts: tuple
    horizon: float
    estimates: np.ndarray  # (n_deltas, n_starts)
    stderrs: np.ndarray
    growth: np.ndarray
    censor_share: np.ndarray
    tail_rates: tuple
    finite: tuple
    delta_star: float | None
    n_paths: int
    growth_tol: float
    censor_tol: float
    tail_margin: float

    def lines(self) -> list:
        out = [
            "exp exit-moment sweep (T=%g): delta* = %s" % (self.horizon, self.delta_star),
            "  tail rate of tau per start: %s"
            % ", ".join("%.3g" % r for r in self.tail_rates),
        ]
        for d, delta in enumerate(self.deltas):
            out.append(
                "  delta=%g: sup estimate %.6g, max growth %.3f, max censor share %.3f -> %s"
                % (
                    delta,
                    float(np.max(self.estimates[d])),
                    float(np.max(self.growth[d])),
                    float(np.max(self.censor_share[d])),
                    "finite" if self.finite[d] else "not resolved",
                )
            )
        return out


def _tail_rate(tau: np.ndarray) -> float:
    """Mean-excess estimate of the exponential tail rate of tau.

    Uses the top ~sqrt(n) exceedances; for an exp(lambda) tail the mean
    excess over the threshold is 1/lambda.  Returns inf when the excesses
    collapse (bounded or near-deterministic tau), nan when too few samples.
    """
    n = tau.size
    if n < 100:
        return math.nan
    k = max(10, int(math.sqrt(n)))
    srt = np.sort(tau)
    thr = srt[n - k - 1]
    excess = float(np.mean(srt[n - k :] - thr))
    if excess <= 0.0:
        return math.inf
    return 1.0 / excess


def estimate_exp_exit_bound(
    model: DiffusionModel,
    domain: Domain,
    deltas,
    starts,
    n_paths: int,
    cfg: SimConfig,
    *,
    growth_tol: float = 0.1,
    censor_tol: float = 0.01,
    tail_margin: float = 0.8,
) -> ExpExitReport:
    """Sweep E_x exp(delta tau) over a start grid with divergence detection.

    One batch per start serves every delta.  Censored paths contribute
    exp(delta T), making each estimate a lower bound.  A delta is reported
    finite only when, at every start, the censored contribution is a
    negligible share, the T/2-vs-T growth is small, and delta clears the
    mean-excess tail rate of tau with a margin; the last rule catches
    divergence carried by tails too thin for censoring to see.
    """
    ds = tuple(sorted(float(d) for d in deltas))
    assert ds and ds[0] >= 0.0
    assert 0.0 < tail_margin <= 1.0
    starts = [np.asarray(x, dtype=np.float64) for x in starts]
    T = cfg.horizon
    n_d, n_s = len(ds), len(starts)
    est = np.zeros((n_d, n_s))
    err = np.zeros((n_d, n_s))
    gro = np.zeros((n_d, n_s))
    cen = np.zeros((n_d, n_s))
    rates = []
    all_censored = True
    for i, x in enumerate(starts):
        if int(domain.membership(x)) != -1:
            raise ValueError("start %s is not interior to the domain" % x)
        batch = simulate_stopped(model, domain, x, cfg, n_paths, stop_mode="exit")
        keep = ~batch.exploded_mask
        tau = np.where(batch.censored_mask, T, batch.time)[keep]
        cens = batch.censored_mask[keep]
        if not np.all(cens):
            all_censored = False
        rates.append(_tail_rate(batch.time[batch.exited_mask & ~batch.exploded_mask]))
        for d, delta in enumerate(ds):
            vals = np.exp(delta * tau)
            half = np.exp(delta * np.minimum(tau, 0.5 * T))
            mT = float(np.mean(vals))
            mH = float(np.mean(half))
            est[d, i] = mT
            err[d, i] = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
            gro[d, i] = (mT - mH) / mT if mT > 0 else 0.0
            cen[d, i] = float(np.sum(vals[cens]) / np.sum(vals)) if np.any(cens) else 0.0
    if all_censored:
        raise RuntimeError(
            "every path censored at every start; the horizon never observes an exit"
        )

    def tail_ok(delta: float) -> bool:
        if delta == 0.0:
            return True
        return all(
            (not math.isnan(r)) and delta <= tail_margin * r for r in rates
        )

    finite = tuple(
        bool(np.all(cen[d] <= censor_tol) and np.all(gro[d] <= growth_tol) and tail_ok(ds[d]))
        for d in range(n_d)
    )
    delta_star = None
    for d in range(n_d):
        if finite[d]:
            delta_star = ds[d]
    return ExpExitReport(
        deltas=ds,
        starts=tuple(tuple(x.tolist()) for x in starts),
        horizon=T,
        estimates=est,
        stderrs=err,
        growth=gro,
        censor_share=cen,
        tail_rates=tuple(rates),
        finite=finite,
        delta_star=delta_star,
        n_paths=n_paths,
        growth_tol=growth_tol,
        censor_tol=censor_tol,
        tail_margin=tail_margin,
    )
