"""Monte Carlo estimators for path functionals of the stopped diffusion.

Everything here reduces to a TrajectoryBatch from ``simulate``: the
boundary-value representation u(x) = E[int_0^tau f + g(x_tau)], exit-time
moments and exponential transforms, survival and escape probabilities,
discounted Green functionals with occupation histograms, and the two residual
verifiers (Dynkin's identity for polynomials, and a finite-difference check
that the estimated field satisfies its PDE).

Censoring policy: quantities that are a.s. finite drop censored paths and
report the censored fraction; possibly-infinite quantities (escape
probabilities, exponential moments with positive rate) are reported only as
flagged bounds.  Explosions are excluded from estimator samples and surfaced
as a fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Domain, DiffusionModel
from .polyfield import MultiPoly
from .simulate import HistGrid, SimConfig, simulate_stopped

__all__ = [
    "MCEstimate",
    "GreenEstimate",
    "EscapeReport",
    "PhiFunctional",
    "PhiReport",
    "PDEResidualReport",
    "estimate_u_stoc",
    "estimate_exit_moment",
    "estimate_exp_moment",
    "estimate_survival",
    "survival_curve",
    "estimate_escape_prob",
    "estimate_phi_functional",
    "estimate_green",
    "dynkin_residual",
    "pde_residual_grid",
]


@dataclass(frozen=True)
class MCEstimate:
    """A sample mean with its Monte Carlo error and censoring bookkeeping.

    bias is "" for unbiased-at-horizon estimators, "lower-bound" or
    "upper-bound" when censoring makes the reported mean one-sided.
    """

    mean: float
    stderr: float
    n: int
    censored_fraction: float = 0.0
    bias: str = ""
    note: str = ""

    def interval(self, z: float = 3.0) -> tuple:
        return (self.mean - z * self.stderr, self.mean + z * self.stderr)


def _mc(samples, censored_fraction=0.0, bias="", note="") -> MCEstimate:
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    if n == 0:
        raise ValueError("no samples available for the estimate")
    mean = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MCEstimate(mean, stderr, n, float(censored_fraction), bias, note)


def _eval_g(g, states: np.ndarray) -> np.ndarray:
    if g is None:
        return np.zeros(states.shape[0])
    if isinstance(g, MultiPoly):
        return np.atleast_1d(g(states))
    out = np.asarray(g(states), dtype=np.float64)
    if out.shape != (states.shape[0],):
        raise ValueError("boundary payoff callable must map (n, m) states to (n,)")
    return out


def _clean_mask(batch) -> np.ndarray:
    return ~batch.exploded_mask


def estimate_u_stoc(
    model: DiffusionModel,
    domain: Domain,
    f: MultiPoly | None,
    g,
    x,
    n_paths: int,
    cfg: SimConfig,
) -> MCEstimate:
    """E_x[int_0^tau f(x_s) ds + g(x_tau)] over non-censored paths.

    f must be a polynomial (or None for 0); g may be a polynomial, a callable
    on (n, m) state arrays, or None.  Raises when every path is censored.
    """
    integrands = (f,) if f is not None else ()
    batch = simulate_stopped(model, domain, x, cfg, n_paths, integrands=integrands)
    ok = batch.exited_mask & _clean_mask(batch)
    if not np.any(ok):
        raise ValueError(
            f"all paths censored (censored_fraction={batch.censored_fraction:g}); "
            "increase the horizon"
        )
    samples = np.zeros(int(np.sum(ok)))
    if f is not None:
        samples = samples + batch.integrals[ok, 0]
    samples = samples + _eval_g(g, batch.state[ok])
    note = ""
    if batch.explosion_fraction > 0.0:
        note = f"explosion_fraction={batch.explosion_fraction:g}"
    return _mc(samples, batch.censored_fraction, note=note)


def estimate_exit_moment(
    model: DiffusionModel, domain: Domain, x, k: int, n_paths: int, cfg: SimConfig
) -> MCEstimate:
    """E_x[tau^k] over non-censored paths; biased low if censoring occurs."""
    assert k >= 1 and k == int(k)
    batch = simulate_stopped(model, domain, x, cfg, n_paths)
    ok = batch.exited_mask & _clean_mask(batch)
    if not np.any(ok):
        raise ValueError("all paths censored; increase the horizon")
    bias = "lower-bound" if batch.censored_fraction > 0.0 else ""
    return _mc(batch.time[ok] ** k, batch.censored_fraction, bias=bias)


def estimate_exp_moment(
    model: DiffusionModel, domain: Domain, x, delta: float, n_paths: int, cfg: SimConfig
) -> MCEstimate:
    """E_x[e^(delta tau)].

    delta < 0 is the Laplace transform: every path contributes its exact
    discount factor e^(delta (tau ^ horizon)), so the value pairs exactly
    with estimate_green(beta=-delta, f=1) on shared paths.  delta > 0 is
    reported as a lower bound whenever censoring occurs (censored paths
    contribute e^(delta horizon) <= their true value).
    """
    if delta == 0.0:
        return MCEstimate(1.0, 0.0, n_paths, 0.0, note="identically 1 at delta=0")
    if delta < 0.0:
        batch = simulate_stopped(model, domain, x, cfg, n_paths, beta=-delta)
        bias = "upper-bound" if batch.censored_fraction > 0.0 else ""
        note = "censored paths contribute e^(delta*horizon)" if bias else ""
        return _mc(batch.discount, batch.censored_fraction, bias=bias, note=note)
    batch = simulate_stopped(model, domain, x, cfg, n_paths)
    ok = _clean_mask(batch)
    samples = np.exp(delta * batch.time[ok])
    bias = "lower-bound" if batch.censored_fraction > 0.0 else ""
    note = "censored paths contribute e^(delta*horizon)" if bias else ""
    return _mc(samples, batch.censored_fraction, bias=bias, note=note)


def estimate_survival(
    model: DiffusionModel, domain: Domain, x, t: float, n_paths: int, cfg: SimConfig
) -> MCEstimate:
    """P_x{tau > t} for t below the horizon: exact binomial fraction."""
    if t >= cfg.horizon:
        raise ValueError("t must be below the censoring horizon")
    batch = simulate_stopped(model, domain, x, cfg, n_paths)
    hits = batch.time > t
    p = float(np.mean(hits))
    stderr = math.sqrt(p * (1.0 - p) / batch.n_paths)
    return MCEstimate(p, stderr, batch.n_paths, 0.0)


def survival_curve(batch, ts) -> tuple:
    """(estimates, stderrs) of P{tau > t} per t from one batch.

    Exactly nonincreasing in t on the fixed path set; all ts must sit below
    the batch horizon for the fractions to be censoring-free.
    """
    ts = np.asarray(ts, dtype=np.float64)
    if np.any(ts >= batch.config.horizon):
        raise ValueError("survival times must be below the horizon")
    est = np.array([float(np.mean(batch.time > t)) for t in ts])
    stderr = np.sqrt(est * (1.0 - est) / batch.n_paths)
    return est, stderr


@dataclass(frozen=True)
class EscapeReport:
    """Bracketing evidence for P_x{tau = infinity}: upper bounds P{tau > T}."""

    horizons: tuple
    upper: tuple
    stderr: tuple
    n: int

    @property
    def bracket(self) -> tuple:
        return (0.0, self.upper[-1])


def estimate_escape_prob(
    model: DiffusionModel, domain: Domain, x, horizons, n_paths: int, cfg: SimConfig
) -> EscapeReport:
    """Monotone upper estimates P{tau > T_i} over an increasing schedule."""
    horizons = tuple(float(T) for T in horizons)
    assert all(b > a for a, b in zip(horizons, horizons[1:])), "schedule must increase"
    run_cfg = cfg.replace(horizon=horizons[-1] + cfg.dt)
    batch = simulate_stopped(model, domain, x, run_cfg, n_paths)
    est, err = survival_curve(batch, horizons)
    return EscapeReport(horizons, tuple(est), tuple(err), batch.n_paths)


@dataclass(frozen=True)
class PhiFunctional:
    """A monotone time transform phi with its derivative, for E phi(tau)."""

    phi: object
    dphi: object
    phi0: float
    name: str = ""


@dataclass(frozen=True)
class PhiReport:
    v1: MCEstimate
    v2: MCEstimate
    representation: float
    agrees: bool


def estimate_phi_functional(
    model: DiffusionModel,
    domain: Domain,
    x,
    phi: PhiFunctional,
    n_paths: int,
    cfg: SimConfig,
    rep_grid: int = 4096,
) -> PhiReport:
    """v1 = E phi(tau), v2 = E phi'(tau), and the survival-curve cross-check.

    The representation value phi(0) + int phi'(t) P{tau > t} dt is computed
    by trapezoid on the empirical survival curve over [0, horizon]; it must
    agree with the direct v1 within 3 combined stderr for light-tailed tau.
    """
    batch = simulate_stopped(model, domain, x, cfg, n_paths)
    ok = batch.exited_mask & _clean_mask(batch)
    if not np.any(ok):
        raise ValueError("all paths censored; increase the horizon")
    taus = batch.time[ok]
    bias = "lower-bound" if batch.censored_fraction > 0.0 else ""
    v1 = _mc(np.asarray(phi.phi(taus), dtype=np.float64), batch.censored_fraction, bias)
    v2 = _mc(np.asarray(phi.dphi(taus), dtype=np.float64), batch.censored_fraction, bias)
    tgrid = np.linspace(0.0, batch.config.horizon, rep_grid)
    sorted_times = np.sort(batch.time)
    surv = 1.0 - np.searchsorted(sorted_times, tgrid, side="right") / batch.n_paths
    dphi_grid = np.asarray(phi.dphi(tgrid), dtype=np.float64)
    rep = float(phi.phi0 + np.trapezoid(dphi_grid * surv, tgrid))
    # trapezoid of a staircase: error <= max|phi'| * grid step * TV(S) / 2, TV <= 1
    slack = 0.5 * float(np.max(np.abs(dphi_grid))) * (tgrid[1] - tgrid[0])
    agrees = abs(rep - v1.mean) <= 3.0 * v1.stderr + slack
    return PhiReport(v1, v2, rep, agrees)


@dataclass(frozen=True)
class GreenEstimate:
    """Discounted occupation functional G_beta f(x) with optional histogram.

    hist_mass (when a grid is supplied) holds per-cell expected discounted
    occupation mass, cell order row-major; mass is only ever deposited from
    states inside U, so cells outside U stay zero.
    """

    beta: float
    value: MCEstimate
    grid: HistGrid | None = None
    hist_mass: np.ndarray | None = None

    @property
    def total_mass(self) -> float:
        if self.hist_mass is None:
            raise ValueError("no histogram was requested")
        return float(np.sum(self.hist_mass))


def estimate_green(
    model: DiffusionModel,
    domain: Domain,
    beta: float,
    f: MultiPoly,
    x,
    n_paths: int,
    cfg: SimConfig,
    grid: HistGrid | None = None,
) -> GreenEstimate:
    """G_beta f(x) = E_x int_0^tau f(x_s) e^(-beta s) ds, left-endpoint rule.

    All paths contribute their (possibly truncated) discounted integral; the
    truncation bias is below e^(-beta horizon) sup|f| / beta and is reported
    in the note together with the censored fraction.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    batch = simulate_stopped(
        model, domain, x, cfg, n_paths, integrands=(f,), beta=beta, grid=grid
    )
    note = (
        f"censoring bias <= {math.exp(-beta * cfg.horizon) / beta:.3g} * sup|f|"
        if batch.censored_fraction > 0.0
        else ""
    )
    value = _mc(batch.integrals[:, 0], batch.censored_fraction, note=note)
    hist = None
    if grid is not None:
        hist = batch.hist_raw / batch.n_paths
    return GreenEstimate(float(beta), value, grid, hist)


def dynkin_residual(
    model: DiffusionModel,
    phi: MultiPoly,
    x,
    t: float,
    n_paths: int,
    cfg: SimConfig,
    box: Domain | None = None,
) -> MCEstimate:
    """E phi(x_(t ^ tau_K)) - phi(x) - E int_0^(t ^ tau_K) (L phi) ds.

    L phi is computed exactly; K defaults to the box x +/- 10.  Horizon-
    censored paths are genuine samples here (the stopping time is t ^ tau_K),
    so censored_fraction is reported as 0.
    """
    if not isinstance(phi, MultiPoly):
        raise TypeError("phi must be a MultiPoly")
    x = np.asarray(x, dtype=np.float64)
    if box is None:
        box = Domain.box([v - 10.0 for v in x], [v + 10.0 for v in x])
    lphi = model.generator(phi)
    run_cfg = cfg.replace(horizon=t)
    batch = simulate_stopped(model, box, x, run_cfg, n_paths, integrands=(lphi,))
    ok = _clean_mask(batch)
    if not np.any(ok):
        raise ValueError("all paths exploded")
    phi_end = np.atleast_1d(phi(batch.state[ok]))
    samples = phi_end - float(phi(x)) - batch.integrals[ok, 0]
    note = "t ^ tau_K stopping: horizon paths are valid samples"
    return _mc(samples, 0.0, note=note)


@dataclass(frozen=True)
class PDEResidualReport:
    """Finite-difference residuals (L u + f - beta u at beta=0) of the field.

    tolerance combines 3x the CRN residual stderr with an h^2 discretization
    allowance per point: tol = 3 stderr + c_disc h^2 (c_disc documented in
    pde_residual_grid).
    """

    points: np.ndarray
    h: float
    residuals: np.ndarray
    stderrs: np.ndarray
    tolerances: np.ndarray
    u_values: np.ndarray

    @property
    def within_tolerance(self) -> np.ndarray:
        return np.abs(self.residuals) <= self.tolerances


def _u_samples(model, domain, f, g, x, n_paths, cfg):
    """Per-path u samples, aligned by path index for common random numbers."""
    integrands = (f,) if f is not None else ()
    batch = simulate_stopped(model, domain, x, cfg, n_paths, integrands=integrands)
    if batch.censored_fraction > 0.0:
        raise ValueError(
            f"censored paths at start {np.asarray(x)}: common-random-number "
            "residuals need every path to exit; increase the horizon"
        )
    samples = np.zeros(batch.n_paths)
    if f is not None:
        samples = samples + batch.integrals[:, 0]
    samples = samples + _eval_g(g, batch.state)
    return samples


def pde_residual_grid(
    model: DiffusionModel,
    domain: Domain,
    f: MultiPoly | None,
    g,
    points,
    h: float,
    n_paths: int,
    cfg: SimConfig,
    c_disc: float = 1.0,
) -> PDEResidualReport:
    """Central-difference check that u_hat satisfies L u = -f at grid points.

    The same (seed, path index) streams drive every stencil start, so the
    finite differences hit coupled paths and the per-path residual samples
    carry the full variance reduction.  Stencils use the exact coefficients
    b(x), a(x); mixed second differences appear only where a has off-diagonal
    entries.  Discretization allowance c_disc * h^2 assumes O(1) fourth
    derivatives of u; for polynomial oracles of degree <= 3 it is slack.
    """
    assert h > 0.0
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    m = model.dim_state
    if pts.shape[1] != m:
        raise ValueError("points must have shape (k, dim_state)")
    a = model.diffusion()
    need_mixed = [
        (i, j)
        for i in range(m)
        for j in range(i + 1, m)
        if not (a[i][j].is_zero() and a[j][i].is_zero())
    ]

    def stencil_offsets():
        offs = {(0,) * m}
        for j in range(m):
            for s in (-1, 1):
                e = [0] * m
                e[j] = s
                offs.add(tuple(e))
        for i, j in need_mixed:
            for si in (-1, 1):
                for sj in (-1, 1):
                    e = [0] * m
                    e[i], e[j] = si, sj
                    offs.add(tuple(e))
        return sorted(offs)

    offsets = stencil_offsets()
    # validate stencils before paying for any simulation
    for p in pts:
        for off in offsets:
            q = p + h * np.asarray(off, dtype=np.float64)
            if int(domain.membership(q)) != -1:
                raise ValueError(
                    f"stencil point {q} around {p} is not interior; "
                    "move the grid point away from the boundary or shrink h"
                )

    cache: dict = {}

    def samples_at(q: np.ndarray) -> np.ndarray:
        key = tuple(np.round(q / h * 2.0).astype(np.int64))
        if key not in cache:
            cache[key] = _u_samples(model, domain, f, g, q, n_paths, cfg)
        return cache[key]

    residuals = np.empty(pts.shape[0])
    stderrs = np.empty(pts.shape[0])
    u_values = np.empty(pts.shape[0])
    for idx, p in enumerate(pts):
        center = samples_at(p)
        acc = np.zeros(n_paths)
        for j in range(m):
            ej = np.zeros(m)
            ej[j] = h
            up = samples_at(p + ej)
            dn = samples_at(p - ej)
            bj = float(model.drift.components[j](p))
            ajj = float(a[j][j](p))
            if bj != 0.0:
                acc = acc + bj * (up - dn) / (2.0 * h)
            acc = acc + 0.5 * ajj * (up - 2.0 * center + dn) / (h * h)
        for i, j in need_mixed:
            ei = np.zeros(m)
            ei[i] = h
            ej = np.zeros(m)
            ej[j] = h
            aij = float(a[i][j](p))
            if aij == 0.0:
                continue
            cross = (
                samples_at(p + ei + ej)
                - samples_at(p + ei - ej)
                - samples_at(p - ei + ej)
                + samples_at(p - ei - ej)
            ) / (4.0 * h * h)
            acc = acc + aij * cross
        if f is not None:
            acc = acc + float(f(p))
        est = _mc(acc)
        residuals[idx] = est.mean
        stderrs[idx] = est.stderr
        u_values[idx] = float(np.mean(center))
    tolerances = 3.0 * stderrs + c_disc * h * h
    return PDEResidualReport(pts, float(h), residuals, stderrs, tolerances, u_values)
