"""Diagnostics at a single boundary point of the stopping domain.

Everything here interrogates one boundary point x* of an open set U:

* ``probe_regularity`` estimates P{tau_closure <= h} from x* over a schedule
  of short horizons.  At a regular point that mass is near 1 already for
  small h; at an irregular point it stays near 0.
* ``construct_sphere_witness`` builds the Gaussian barrier
  w(x) = exp(-beta lam^2) - exp(-beta |x - x'|^2) around an exterior sphere
  touching U at x*, and ``certify_nice_point`` grid-checks w > 0 and Lw < 0
  on a punctured neighborhood of x*.
* ``diagnose_uid`` / ``diagnose_uip`` measure empirical tail mass of the
  boundary payoff and of the accumulated running cost over starts near x*.
* ``diagnose_ce`` bounds the chance of reaching a large exhaustion set before
  leaving U, again from starts near x*.

All simulation-backed routines are deterministic given the config seed.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .estimate import MCEstimate
from .model import DiffusionModel, Domain, Exhaustion
from .polyfield import MultiPoly
from .simulate import SimConfig, simulate_stopped

__all__ = [
    "RegularityProbe",
    "probe_regularity",
    "GaussianWitness",
    "construct_sphere_witness",
    "NicenessCertificate",
    "certify_nice_point",
    "TailReport",
    "diagnose_uid",
    "diagnose_uip",
    "EscapeBeforeExitReport",
    "diagnose_ce",
]


# ---------------------------------------------------------------------------
# shared sampling helper


def _interior_points_near(domain: Domain, x_star, delta: float, n_want: int, seed: int):
    """Deterministic sample of interior points of U within distance delta of x*.

    Rejection from the uniform ball B(x*, delta); raises if the ball does not
    meet the interior at all (wrong x*, or delta far too small for the shape).
    """
    assert delta > 0 and n_want >= 1
    x_star = np.asarray(x_star, dtype=np.float64)
    m = x_star.size
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    kept: list[np.ndarray] = []
    for _ in range(64):
        g = rng.standard_normal((8 * n_want, m))
        nrm = np.linalg.norm(g, axis=1, keepdims=True)
        nrm[nrm == 0.0] = 1.0
        u = rng.random((8 * n_want, 1)) ** (1.0 / m)
        pts = x_star + delta * u * g / nrm
        memb = domain.membership(pts)
        for p in pts[memb == -1]:
            kept.append(p)
            if len(kept) == n_want:
                return np.asarray(kept)
    if not kept:
        raise ValueError(
            "no interior points of the domain within %.3g of %s" % (delta, x_star)
        )
    return np.asarray(kept)


# ---------------------------------------------------------------------------
# regularity probe


@dataclass(frozen=True)
class RegularityProbe:
    """Exit-mass curve h -> P{tau_closure <= h} from a boundary start."""

    point: tuple
    h_schedule: tuple
    fractions: tuple
    stderrs: tuple
    n_paths: int
    censored_fraction: float
    verdict: str  # "regular-evidence" | "irregular-evidence" | "inconclusive"

    @property
    def estimates(self) -> tuple:
        """Per-horizon fractions packaged as MCEstimate records."""
        return tuple(
            MCEstimate(p, s, self.n_paths, self.censored_fraction)
            for p, s in zip(self.fractions, self.stderrs)
        )

    def lines(self) -> list:
        out = ["regularity probe at %s: %s" % (list(self.point), self.verdict)]
        for h, p, s in zip(self.h_schedule, self.fractions, self.stderrs):
            out.append("  P(exit closure <= %g) = %.6f +- %.6f" % (h, p, s))
        return out


def probe_regularity(
    model: DiffusionModel,
    domain: Domain,
    x_star,
    h_schedule,
    n_paths: int,
    cfg: SimConfig,
    *,
    upper: float = 0.99,
    lower: float = 0.01,
) -> RegularityProbe:
    """Estimate P{tau_closure <= h} from x* for each h in the schedule.

    One path family serves every horizon, so the reported fractions are
    nondecreasing in h exactly.  Verdicts: "regular-evidence" if the smallest
    horizon already captures >= upper of the mass, "irregular-evidence" if the
    largest captures <= lower, else "inconclusive".
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    if int(domain.membership(x_star)) != 0:
        raise ValueError("x* must lie exactly on the boundary of the domain")
    hs = tuple(sorted(float(h) for h in h_schedule))
    if not hs or hs[0] <= 0.0:
        raise ValueError("h_schedule must be positive")
    if hs[0] < 10.0 * cfg.dt:
        raise ValueError(
            "min(h_schedule) = %g under-resolves dt = %g; need min(h) >= 10 dt"
            % (hs[0], cfg.dt)
        )
    run_cfg = cfg.replace(horizon=hs[-1])
    batch = simulate_stopped(
        model,
        domain,
        x_star,
        run_cfg,
        n_paths,
        stop_mode="closure",
        start_membership=0,
    )
    stopped = (batch.kind == 1) & ~batch.exploded_mask
    fracs, errs = [], []
    for h in hs:
        p = float(np.mean(stopped & (batch.time <= h)))
        fracs.append(p)
        errs.append(math.sqrt(p * (1.0 - p) / n_paths))
    if fracs[0] >= upper:
        verdict = "regular-evidence"
    elif fracs[-1] <= lower:
        verdict = "irregular-evidence"
    else:
        verdict = "inconclusive"
    return RegularityProbe(
        point=tuple(x_star.tolist()),
        h_schedule=hs,
        fractions=tuple(fracs),
        stderrs=tuple(errs),
        n_paths=n_paths,
        censored_fraction=batch.censored_fraction,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# Gaussian sphere barrier


@dataclass(frozen=True)
class GaussianWitness:
    """Barrier w(x) = exp(-beta lam^2) - exp(-beta |x - x'|^2).

    x' = x* + lam nu is the center of an exterior sphere of radius lam
    touching the boundary at x*.  w vanishes at x* (exactly, by construction),
    is positive outside the closed ball B(x', lam), and has Lw < 0 near x*
    whenever the noise has a positive component along nu.
    """

    x_star: tuple
    x_prime: tuple
    lam: float
    beta: float
    normal_form_value: float  # nu . (sigma sigma^T)(x*) nu

    def _offset(self) -> float:
        # exp(-beta |x* - x'|^2) with the realized distance, so w(x*) == 0.0
        d = np.asarray(self.x_star) - np.asarray(self.x_prime)
        return math.exp(-self.beta * float(np.dot(d, d)))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        q = np.sum((x - np.asarray(self.x_prime)) ** 2, axis=-1)
        return self._offset() - np.exp(-self.beta * q)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        d = x - np.asarray(self.x_prime)
        q = float(np.dot(d, d))
        return 2.0 * self.beta * math.exp(-self.beta * q) * d

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        d = x - np.asarray(self.x_prime)
        q = float(np.dot(d, d))
        e = math.exp(-self.beta * q)
        return 2.0 * self.beta * e * np.eye(x.size) - (
            4.0 * self.beta**2 * e
        ) * np.outer(d, d)

    def generator_value(self, model: DiffusionModel, x) -> float:
        """Lw(x) = beta e^{-beta q} [2 b.(x-x') + tr a - 2 beta (x-x')^T a (x-x')]."""
        x = np.asarray(x, dtype=np.float64)
        d = x - np.asarray(self.x_prime)
        q = float(np.dot(d, d))
        b = model.drift_at(x)
        s = model.sigma_at(x)
        a = s @ s.T
        inner = 2.0 * float(b @ d) + float(np.trace(a)) - 2.0 * self.beta * float(d @ a @ d)
        return self.beta * math.exp(-self.beta * q) * inner


def construct_sphere_witness(
    model: DiffusionModel,
    domain: Domain,
    x_star,
    nu,
    lam: float,
    beta: float,
    *,
    tol: float = 1e-12,
) -> GaussianWitness:
    """Build the Gaussian barrier for the exterior sphere at x*.

    Requires a unit outward normal nu with nu . (sigma sigma^T)(x*) nu > tol;
    without noise along the normal the barrier argument collapses and the
    construction refuses.
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    assert lam > 0 and beta > 0
    if abs(float(np.linalg.norm(nu)) - 1.0) > 1e-8:
        raise ValueError("nu must be a unit vector")
    if int(domain.membership(x_star)) != 0:
        raise ValueError("x* must lie exactly on the boundary of the domain")
    s = model.sigma_at(x_star)
    a = s @ s.T
    aval = float(nu @ a @ nu)
    if aval <= tol:
        raise ValueError(
            "no noise along the normal at x*: nu . sigma sigma^T nu = %.3g <= %.3g; "
            "the sphere barrier needs a positive normal diffusion component"
            % (aval, tol)
        )
    x_prime = x_star + lam * nu
    if int(domain.membership(x_prime)) != 1:
        raise ValueError("x* + lam nu must lie outside the closure; shrink lam")
    return GaussianWitness(
        x_star=tuple(x_star.tolist()),
        x_prime=tuple(x_prime.tolist()),
        lam=float(lam),
        beta=float(beta),
        normal_form_value=aval,
    )


# ---------------------------------------------------------------------------
# niceness certificate


@dataclass(frozen=True)
class NicenessCertificate:
    """Grid check of w > 0 and Lw < 0 on B(x*, radius) cap U minus a core."""

    x_star: tuple
    radius: float
    grid_n: int
    witness_kind: str  # "poly" | "gaussian"
    w_at_x_star: float
    min_w: float
    max_generator: float
    n_grid: int
    valid: bool
    note: str = ""
    # exact image Lw when w is polynomial; None for the Gaussian witness
    generator_poly: MultiPoly | None = None

    def lines(self) -> list:
        return [
            "niceness certificate at %s: %s" % (list(self.x_star), "VALID" if self.valid else "invalid"),
            "  w(x*) = %.3g, min w = %.6g, max Lw = %.6g over %d grid points"
            % (self.w_at_x_star, self.min_w, self.max_generator, self.n_grid),
        ] + ([f"  note: {self.note}"] if self.note else [])


def certify_nice_point(
    model: DiffusionModel,
    domain: Domain,
    x_star,
    w,
    radius: float,
    grid_n: int,
) -> NicenessCertificate:
    """Check a barrier w on the punctured neighborhood grid around x*.

    The grid covers the cube of half-width ``radius`` intersected with
    B(x*, radius) cap U, excluding points within radius/grid_n of x* (w must
    vanish there, so the sign condition is only meaningful away from the
    core).  Polynomial barriers get an exact generator image; Gaussian
    barriers use the closed form.
    """
    if grid_n < 4:
        raise ValueError("grid_n must be >= 4 to resolve the neighborhood")
    assert radius > 0
    x_star = np.asarray(x_star, dtype=np.float64)
    m = x_star.size
    axes = [np.linspace(x_star[j] - radius, x_star[j] + radius, grid_n) for j in range(m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    dist = np.linalg.norm(pts - x_star, axis=1)
    keep = (dist <= radius) & (dist > radius / grid_n) & (domain.membership(pts) == -1)
    pts = pts[keep]

    lw_poly = None
    if isinstance(w, MultiPoly):
        kind = "poly"
        w_at = float(w(x_star))
        lw_poly = model.generator(w)
        if pts.size:
            wv = np.asarray(w(pts), dtype=np.float64)
            lv = np.asarray(lw_poly(pts), dtype=np.float64)
    elif isinstance(w, GaussianWitness):
        kind = "gaussian"
        w_at = float(w(x_star))
        if pts.size:
            wv = np.asarray(w(pts), dtype=np.float64)
            lv = np.array([w.generator_value(model, p) for p in pts])
    else:
        raise TypeError("unsupported barrier type; pass a MultiPoly or GaussianWitness")

    if pts.shape[0] == 0:
        return NicenessCertificate(
            x_star=tuple(x_star.tolist()),
            radius=float(radius),
            grid_n=int(grid_n),
            witness_kind=kind,
            w_at_x_star=w_at,
            min_w=math.nan,
            max_generator=math.nan,
            n_grid=0,
            valid=False,
            note="no grid points in B(x*, radius) cap U outside the core",
            generator_poly=lw_poly,
        )
    min_w = float(np.min(wv))
    max_lv = float(np.max(lv))
    valid = (abs(w_at) <= 1e-12) and (min_w > 0.0) and (max_lv < 0.0)
    note = ""
    if abs(w_at) > 1e-12:
        note = "w does not vanish at x*"
    elif min_w <= 0.0:
        note = "w fails positivity on the punctured neighborhood"
    elif max_lv >= 0.0:
        note = "Lw fails negativity on the punctured neighborhood"
    return NicenessCertificate(
        x_star=tuple(x_star.tolist()),
        radius=float(radius),
        grid_n=int(grid_n),
        witness_kind=kind,
        w_at_x_star=w_at,
        min_w=min_w,
        max_generator=max_lv,
        n_grid=int(pts.shape[0]),
        valid=valid,
        note=note,
        generator_poly=lw_poly,
    )


# ---------------------------------------------------------------------------
# uniform-integrability style tail diagnostics


@dataclass(frozen=True)
class TailReport:
    """Empirical tail mass E[|Y| ; |Y| > M], sup over starts near x*.

    A diagnostic, not a certificate: it samples finitely many starts in
    B(delta, x*) cap U and finitely many cutoffs.
    """

    x_star: tuple
    delta: float
    points: tuple
    m_schedule: tuple
    tails: tuple  # sup over starts, nonincreasing in M
    per_point: tuple
    worst_censored_fraction: float
    n_paths: int
    quantity: str  # "boundary-payoff" | "running-cost"


def _tail_diagnostic(
    model: DiffusionModel,
    domain: Domain,
    x_star,
    delta: float,
    m_schedule,
    n_paths: int,
    cfg: SimConfig,
    n_points: int,
    integrands,
    values_of_batch,
    quantity: str,
) -> TailReport:
    ms = tuple(sorted(float(v) for v in m_schedule))
    if not ms or ms[0] < 0.0:
        raise ValueError("m_schedule must be nonnegative")
    pts = _interior_points_near(domain, x_star, delta, n_points, cfg.seed)
    per_point = []
    worst_cens = 0.0
    any_exits = False
    for p in pts:
        batch = simulate_stopped(
            model, domain, p, cfg, n_paths, stop_mode="exit", integrands=integrands
        )
        worst_cens = max(worst_cens, batch.censored_fraction)
        ex = batch.exited_mask & ~batch.exploded_mask
        if not np.any(ex):
            per_point.append(tuple(math.nan for _ in ms))
            continue
        any_exits = True
        vals = np.abs(values_of_batch(batch, ex))
        per_point.append(tuple(float(np.sum(vals[vals > M]) / vals.size) for M in ms))
    if not any_exits:
        raise RuntimeError(
            "no non-censored exits from any sampled start near x*; "
            "lengthen the horizon before reading tail mass"
        )
    mat = np.asarray(per_point, dtype=np.float64)
    sup = tuple(float(np.nanmax(mat[:, k])) for k in range(len(ms)))
    return TailReport(
        x_star=tuple(np.asarray(x_star, dtype=np.float64).tolist()),
        delta=float(delta),
        points=tuple(tuple(p.tolist()) for p in pts),
        m_schedule=ms,
        tails=sup,
        per_point=tuple(per_point),
        worst_censored_fraction=worst_cens,
        n_paths=n_paths,
        quantity=quantity,
    )


def diagnose_uid(
    model: DiffusionModel,
    domain: Domain,
    g,
    x_star,
    delta: float,
    m_schedule,
    n_paths: int,
    cfg: SimConfig,
    *,
    n_points: int = 8,
) -> TailReport:
    """Tail mass of the exit payoff |g(X_tau)| over starts near x*."""

    def values(batch, ex):
        return np.asarray(g(batch.state[ex]), dtype=np.float64)

    return _tail_diagnostic(
        model, domain, x_star, delta, m_schedule, n_paths, cfg, n_points, (),
        values, "boundary-payoff",
    )


def diagnose_uip(
    model: DiffusionModel,
    domain: Domain,
    f,
    x_star,
    delta: float,
    m_schedule,
    n_paths: int,
    cfg: SimConfig,
    *,
    n_points: int = 8,
) -> TailReport:
    """Tail mass of the accumulated running cost |int_0^tau f| near x*."""

    def values(batch, ex):
        return np.asarray(batch.integrals[ex, 0], dtype=np.float64)

    return _tail_diagnostic(
        model, domain, x_star, delta, m_schedule, n_paths, cfg, n_points, (f,),
        values, "running-cost",
    )


# ---------------------------------------------------------------------------
# escape-before-exit diagnostic


def _domain_contains(outer: Domain, inner: Domain) -> bool:
    """True when containment outer >= inner is provable for box/ball pairs."""
    if outer.kind == "full":
        return True
    if outer.kind == "ball":
        c = np.asarray(outer.center)
        if inner.kind == "ball":
            d = float(np.linalg.norm(np.asarray(inner.center) - c))
            return d + inner.radius <= outer.radius
        if inner.kind == "box":
            corners = itertools.product(*zip(inner.lo, inner.hi))
            return all(
                float(np.linalg.norm(np.asarray(q) - c)) <= outer.radius
                for q in corners
            )
        return False
    if outer.kind == "box":
        lo, hi = np.asarray(outer.lo), np.asarray(outer.hi)
        if inner.kind == "box":
            return bool(np.all(lo <= np.asarray(inner.lo)) and np.all(np.asarray(inner.hi) <= hi))
        if inner.kind == "ball":
            c = np.asarray(inner.center)
            return bool(np.all(lo <= c - inner.radius) and np.all(c + inner.radius <= hi))
        return False
    return False


@dataclass(frozen=True)
class EscapeBeforeExitReport:
    """Upper bound on P{exit of X_n happens before exit of U} near x*."""

    x_star: tuple
    exhaustion_index: int
    delta2: float
    delta1: float
    prob_sup: float
    stderr: float
    trivial: bool
    passes: bool
    points: tuple
    per_point: tuple
    note: str = ""


def diagnose_ce(
    model: DiffusionModel,
    domain: Domain,
    x_star,
    exhaustion: Exhaustion,
    delta1: float,
    n_paths: int,
    cfg: SimConfig,
    *,
    n_schedule=(1, 2, 3, 4, 6, 8),
    delta2_schedule=(0.5, 0.25, 0.1),
    n_points: int = 6,
) -> EscapeBeforeExitReport:
    """Search for (n, delta2) with sup_x P{tau_{X_n} < tau_U} < delta1.

    Starts x are sampled in B(x*, delta2) cap U.  When an exhaustion member
    already contains a bounded U the probability is 0 for every start (the
    path leaves U first by definition) and no simulation is run.  Censored
    paths whose X_n exit was not observed count toward the probability, so
    the reported value is an upper bound.
    """
    assert 0.0 < delta1 < 1.0
    deltas = tuple(sorted((float(d) for d in delta2_schedule), reverse=True))
    for n in n_schedule:
        if _domain_contains(exhaustion.domain(int(n)), domain):
            return EscapeBeforeExitReport(
                x_star=tuple(np.asarray(x_star, dtype=np.float64).tolist()),
                exhaustion_index=int(n),
                delta2=deltas[0],
                delta1=float(delta1),
                prob_sup=0.0,
                stderr=0.0,
                trivial=True,
                passes=True,
                points=(),
                per_point=(),
                note="exhaustion member contains the domain; escape before exit is impossible",
            )
    best = None
    for n in n_schedule:
        mon = exhaustion.domain(int(n))
        for d2 in deltas:
            pts = _interior_points_near(domain, x_star, d2, n_points, cfg.seed)
            per = []
            for p in pts:
                batch = simulate_stopped(
                    model, domain, p, cfg, n_paths, stop_mode="exit", monitor=mon
                )
                seen = batch.monitor_time < np.inf
                # censored paths without an observed X_n exit stay ambiguous;
                # counting them keeps the estimate an upper bound
                event = batch.censored_mask | (seen & (batch.monitor_time < batch.time))
                per.append(float(np.mean(event)))
            sup = max(per)
            err = math.sqrt(sup * (1.0 - sup) / n_paths)
            report = EscapeBeforeExitReport(
                x_star=tuple(np.asarray(x_star, dtype=np.float64).tolist()),
                exhaustion_index=int(n),
                delta2=d2,
                delta1=float(delta1),
                prob_sup=sup,
                stderr=err,
                trivial=False,
                passes=sup < delta1,
                points=tuple(tuple(p.tolist()) for p in pts),
                per_point=tuple(per),
            )
            if report.passes:
                return report
            if best is None or report.prob_sup < best.prob_sup:
                best = report
    assert best is not None
    return dataclasses.replace(best, note="no tested (n, delta2) got below delta1")
