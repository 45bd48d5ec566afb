"""Boundary-point diagnostics: regularity probes, barriers, tail checks."""

import math

import numpy as np
import pytest

from sdemc.boundary import (
    certify_nice_point,
    construct_sphere_witness,
    diagnose_ce,
    diagnose_uid,
    diagnose_uip,
    probe_regularity,
)
from sdemc.model import DiffusionModel, Domain, Exhaustion
from sdemc.polyfield import MultiPoly, PolyVectorField
from sdemc.simulate import SimConfig

from conftest import bm1d_model, poly


def _cfg(**kw):
    base = dict(dt=1e-4, horizon=1.0, seed=211)
    base.update(kw)
    return SimConfig(**base)


# regularity probe


def test_probe_regular_point(bm1d):
    # the crossing correction fires instantly from a boundary start with
    # noise along the normal, so the whole mass sits at h = 0
    model, domain = bm1d
    probe = probe_regularity(model, domain, [0.0], (0.01, 0.05), 500, _cfg())
    assert probe.verdict == "regular-evidence"
    assert probe.fractions == (1.0, 1.0)
    assert probe.censored_fraction == 0.0
    ests = probe.estimates
    assert [e.mean for e in ests] == [1.0, 1.0]
    assert all(e.n == 500 for e in ests)


def test_probe_irregular_point(degenerate2d):
    # from (1, 0) the first coordinate can only move left, so the closure
    # exit needs the noisy coordinate to cross a far face first
    model, domain = degenerate2d
    probe = probe_regularity(
        model, domain, [1.0, 0.0], (1e-3, 2e-3, 5e-3), 500, _cfg()
    )
    assert probe.verdict == "irregular-evidence"
    assert probe.fractions == (0.0, 0.0, 0.0)
    assert probe.censored_fraction == 1.0


def test_probe_fractions_monotone_without_bridge(bm1d):
    model, domain = bm1d
    probe = probe_regularity(
        model,
        domain,
        [0.0],
        (0.005, 0.01, 0.05),
        400,
        _cfg(bridge_correction=False),
    )
    assert all(b >= a for a, b in zip(probe.fractions, probe.fractions[1:]))
    assert [e.mean for e in probe.estimates] == list(probe.fractions)
    assert 0.0 < probe.fractions[0] < 1.0


def test_probe_validation(bm1d):
    model, domain = bm1d
    with pytest.raises(ValueError, match="boundary"):
        probe_regularity(model, domain, [0.5], (0.01,), 8, _cfg())
    with pytest.raises(ValueError, match="under-resolves"):
        probe_regularity(model, domain, [0.0], (5e-4,), 8, _cfg())
    with pytest.raises(ValueError, match="positive"):
        probe_regularity(model, domain, [0.0], (), 8, _cfg())


# Gaussian sphere barrier


def test_witness_shape(bm1d):
    model, domain = bm1d
    w = construct_sphere_witness(model, domain, [0.0], [-1.0], 0.1, 200.0)
    assert w([0.0]) == 0.0
    assert w.normal_form_value == 1.0
    assert w.x_prime == (-0.1,)
    # positive away from the touching sphere, negative inside it
    assert w([0.05]) > 0.0
    assert w([-0.05]) < 0.0


def test_witness_gradient_hessian_match_differences(bm1d):
    model, domain = bm1d
    w = construct_sphere_witness(model, domain, [0.0], [-1.0], 0.1, 50.0)
    x = np.array([0.03])
    eps = 1e-6
    fd_grad = (w(x + eps) - w(x - eps)) / (2.0 * eps)
    assert math.isclose(w.gradient(x)[0], float(fd_grad), rel_tol=1e-7)
    fd_hess = (w(x + eps) - 2.0 * w(x) + w(x - eps)) / eps**2
    assert math.isclose(w.hessian(x)[0, 0], float(fd_hess), rel_tol=1e-4)
    # 1-d flat-drift generator is half the second derivative
    lw = w.generator_value(model, x)
    assert math.isclose(lw, 0.5 * w.hessian(x)[0, 0], rel_tol=1e-12)


def test_witness_requires_normal_noise(degenerate2d):
    # at (1, 0) the diffusion has no component along the outward normal
    model, domain = degenerate2d
    with pytest.raises(ValueError, match="no noise along the normal"):
        construct_sphere_witness(model, domain, [1.0, 0.0], [1.0, 0.0], 0.1, 200.0)


def test_witness_validation(bm1d):
    model, domain = bm1d
    with pytest.raises(ValueError, match="unit vector"):
        construct_sphere_witness(model, domain, [0.0], [2.0], 0.1, 200.0)
    with pytest.raises(ValueError, match="boundary"):
        construct_sphere_witness(model, domain, [0.5], [-1.0], 0.1, 200.0)
    with pytest.raises(ValueError, match="shrink lam"):
        construct_sphere_witness(model, domain, [0.0], [1.0], 0.1, 200.0)


def test_certify_gaussian_witness_valid(bm1d):
    model, domain = bm1d
    w = construct_sphere_witness(model, domain, [0.0], [-1.0], 0.1, 200.0)
    cert = certify_nice_point(model, domain, [0.0], w, 0.05, 41)
    assert cert.valid
    assert cert.witness_kind == "gaussian"
    assert cert.w_at_x_star == 0.0
    assert cert.min_w > 0.0
    assert cert.max_generator < 0.0
    assert cert.generator_poly is None
    assert cert.n_grid > 0
    assert any("VALID" in line for line in cert.lines())


def test_certify_poly_witness_valid_exact_image(bm1d):
    # w = x - 2 x^2 is positive on (0, 0.05] and has Lw = -2 identically
    model, domain = bm1d
    w = poly(1, {(1,): 1.0, (2,): -2.0})
    cert = certify_nice_point(model, domain, [0.0], w, 0.05, 12)
    assert cert.valid
    assert cert.witness_kind == "poly"
    assert cert.max_generator == -2.0
    assert cert.generator_poly == poly(1, {(0,): -2.0})


def test_certify_poly_witness_sign_failure(bm1d):
    # w = x^2 vanishes at 0 and is positive, but Lw = +1 kills the barrier
    model, domain = bm1d
    w = poly(1, {(2,): 1.0})
    cert = certify_nice_point(model, domain, [0.0], w, 0.05, 12)
    assert not cert.valid
    assert cert.max_generator == 1.0
    assert cert.generator_poly == poly(1, {(0,): 1.0})
    assert "negativity" in cert.note


def test_certify_zero_witness_fails_positivity(bm1d):
    model, domain = bm1d
    cert = certify_nice_point(model, domain, [0.0], MultiPoly.zero(1), 0.05, 12)
    assert not cert.valid
    assert "positivity" in cert.note


def test_certify_validation(bm1d):
    model, domain = bm1d
    with pytest.raises(ValueError, match="grid_n"):
        certify_nice_point(model, domain, [0.0], MultiPoly.zero(1), 0.05, 3)
    with pytest.raises(TypeError, match="barrier"):
        certify_nice_point(model, domain, [0.0], lambda x: x, 0.05, 12)


# payoff and running-cost tail diagnostics


def test_uid_bounded_payoff_tail_vanishes(bm1d):
    model, domain = bm1d

    def g(states):
        return np.ones(states.shape[0])

    rep = diagnose_uid(
        model, domain, g, [0.0], 0.1, (0.5, 1.5), 300, _cfg(dt=1e-3, horizon=30.0)
    )
    assert rep.quantity == "boundary-payoff"
    assert rep.tails == (1.0, 0.0)
    assert len(rep.points) == 8 and len(rep.per_point) == 8
    for p in rep.points:
        assert 0.0 < p[0] < 0.1
    assert all(b <= a for a, b in zip(rep.tails, rep.tails[1:]))


def test_uid_zero_payoff(bm1d):
    model, domain = bm1d

    def g(states):
        return np.zeros(states.shape[0])

    rep = diagnose_uid(
        model, domain, g, [0.0], 0.1, (0.0, 1.0), 100, _cfg(dt=1e-3, horizon=30.0)
    )
    assert rep.tails == (0.0, 0.0)


def test_uip_running_cost_tail_decays(bm1d):
    model, domain = bm1d
    one = poly(1, {(0,): 1.0})
    rep = diagnose_uip(
        model,
        domain,
        one,
        [0.0],
        0.1,
        (0.0, 0.05, 10.0),
        400,
        _cfg(dt=1e-3, horizon=30.0),
        n_points=4,
    )
    assert rep.quantity == "running-cost"
    assert all(b <= a for a, b in zip(rep.tails, rep.tails[1:]))
    # tail at 0 is the full mean accumulated cost; near x* = 0 it is small
    assert 0.0 < rep.tails[0] < 0.2
    assert rep.tails[-1] == 0.0
    assert rep.worst_censored_fraction == 0.0


def test_tail_diagnostic_requires_exits(bm1d):
    model, domain = bm1d
    one = poly(1, {(0,): 1.0})
    # two steps from the middle of the interval: no path can reach a face
    with pytest.raises(RuntimeError, match="no non-censored exits"):
        diagnose_uip(
            model, domain, one, [0.5], 0.01, (0.0,), 16,
            _cfg(dt=1e-3, horizon=2e-3), n_points=2,
        )


def test_tail_diagnostic_needs_interior_points(bm1d):
    model, domain = bm1d
    one = poly(1, {(0,): 1.0})
    with pytest.raises(ValueError, match="no interior points"):
        diagnose_uip(model, domain, one, [-0.5], 0.1, (0.0,), 8, _cfg())


# escape-before-exit diagnostic


def test_ce_trivial_when_exhaustion_covers_domain(bm1d):
    model, domain = bm1d
    rep = diagnose_ce(
        model, domain, [0.0], Exhaustion(dim=1), 0.25, 100, _cfg()
    )
    assert rep.trivial and rep.passes
    assert rep.prob_sup == 0.0 and rep.stderr == 0.0
    assert rep.exhaustion_index == 1
    assert "contains the domain" in rep.note


def test_ce_halfspace_gamblers_ruin():
    domain = Domain.halfspace([1.0], 0.0)
    rep = diagnose_ce(
        bm1d_model(),
        domain,
        [0.0],
        Exhaustion(dim=1),
        0.2,
        400,
        _cfg(dt=1e-3, horizon=20.0),
        n_schedule=(1, 2),
        delta2_schedule=(0.5, 0.25, 0.1),
        n_points=4,
    )
    assert not rep.trivial
    assert rep.passes
    assert rep.prob_sup < 0.2
    # ruin odds from -d against the sphere |x| = n are d / n
    for p, prob in zip(rep.points, rep.per_point):
        d = abs(p[0]) / rep.exhaustion_index
        assert abs(prob - d) <= 3.0 * math.sqrt(d * (1 - d) / 400) + 0.02


def test_ce_outward_drift_never_passes():
    # pure leftward transport never exits {x < 0} but sweeps every sphere
    zero = MultiPoly.zero(1)
    model = DiffusionModel(
        drift=PolyVectorField((poly(1, {(0,): -1.0}),)),
        sigma=((zero,),),
    )
    domain = Domain.halfspace([1.0], 0.0)
    rep = diagnose_ce(
        model,
        domain,
        [0.0],
        Exhaustion(dim=1),
        0.5,
        50,
        _cfg(dt=1e-2, horizon=30.0),
        n_schedule=(1, 2),
        delta2_schedule=(0.25,),
        n_points=3,
    )
    assert not rep.passes and not rep.trivial
    assert rep.prob_sup == 1.0
    assert "no tested" in rep.note


def test_ce_rejects_bad_threshold(bm1d):
    model, domain = bm1d
    with pytest.raises(AssertionError):
        diagnose_ce(model, domain, [0.0], Exhaustion(dim=1), 1.5, 8, _cfg())
