"""Functional estimators against closed forms for Brownian motion on (0, 1).

Reference values (scripts/closed_form_oracles.py, frozen):
    E_x tau            = x (1 - x)
    E_0.5 tau^2        = 5/48
    E_0.5 e^(-2 tau)   = 1/cosh(1)  = 0.6480542736638855
    E_0.5 e^(+2 tau)   = 1/cos(1)   = 1.8508157176809255
    G_2 1 (0.5)        = (1 - sech(1))/2 = 0.17597286316805724
    P_0.5{tau > t}     : 0.1 -> 0.7723116069, 0.2 -> 0.4744874604,
                         0.4 -> 0.1768671397
    P_x{exit right}    = x
    beta G_beta id, beta=2: 0.3 -> 0.124461514766, 0.6 -> 0.183810462585
"""

import math

import numpy as np
import pytest

from sdemc.estimate import (
    MCEstimate,
    PhiFunctional,
    dynkin_residual,
    estimate_escape_prob,
    estimate_exit_moment,
    estimate_exp_moment,
    estimate_green,
    estimate_phi_functional,
    estimate_survival,
    estimate_u_stoc,
    pde_residual_grid,
    survival_curve,
)
from sdemc.simulate import HistGrid, SimConfig, simulate_stopped

from conftest import bm1d_model, poly

COSH1_INV = 0.6480542736638855
COS1_INV = 1.8508157176809255
GREEN2_HALF = 0.17597286316805724
SURVIVAL = {0.1: 0.7723116069, 0.2: 0.4744874604, 0.4: 0.1768671397}
RESOLVENT2 = {0.3: 0.124461514766, 0.6: 0.183810462585}


def _cfg(**kw):
    base = dict(dt=1e-3, horizon=20.0, seed=101)
    base.update(kw)
    return SimConfig(**base)


def _close(est, target, floor):
    tol = max(3.0 * est.stderr, floor)
    assert abs(est.mean - target) <= tol, (est.mean, target, tol)


def test_mc_estimate_interval():
    e = MCEstimate(1.0, 0.1, 100)
    assert e.interval() == (0.7, 1.3)
    assert e.interval(z=1.0) == (0.9, 1.1)


def test_exit_moment_matches_quadratic(bm1d):
    model, domain = bm1d
    for x, target in ((0.2, 0.16), (0.5, 0.25), (0.8, 0.16)):
        est = estimate_exit_moment(model, domain, [x], 1, 20000, _cfg())
        assert est.bias == "" and est.censored_fraction == 0.0
        _close(est, target, 0.005)


def test_exit_second_moment(bm1d):
    model, domain = bm1d
    est = estimate_exit_moment(model, domain, [0.5], 2, 20000, _cfg(seed=7))
    _close(est, 5.0 / 48.0, 0.004)


def test_exit_moment_censoring_is_flagged(bm1d):
    model, domain = bm1d
    est = estimate_exit_moment(model, domain, [0.5], 1, 4000, _cfg(horizon=0.2))
    assert est.censored_fraction > 0.0
    assert est.bias == "lower-bound"
    assert est.mean < 0.25


def test_exit_moment_rejects_bad_power(bm1d):
    model, domain = bm1d
    with pytest.raises(AssertionError):
        estimate_exit_moment(model, domain, [0.5], 0, 8, _cfg())


def test_exp_moment_delta_zero_is_exact(bm1d):
    model, domain = bm1d
    est = estimate_exp_moment(model, domain, [0.5], 0.0, 123, _cfg())
    assert est == MCEstimate(1.0, 0.0, 123, 0.0, note=est.note)
    assert est.note != ""


def test_exp_moment_laplace_oracle(bm1d):
    model, domain = bm1d
    est = estimate_exp_moment(model, domain, [0.5], -2.0, 20000, _cfg(seed=11))
    assert est.bias == ""
    _close(est, COSH1_INV, 0.004)


def test_exp_moment_growth_oracle(bm1d):
    model, domain = bm1d
    est = estimate_exp_moment(model, domain, [0.5], 2.0, 20000, _cfg(seed=13))
    _close(est, COS1_INV, 0.05)


def test_exp_moment_positive_censoring_lower_bound(bm1d):
    model, domain = bm1d
    est = estimate_exp_moment(model, domain, [0.5], 2.0, 4000, _cfg(horizon=0.3))
    assert est.bias == "lower-bound"
    assert "censored" in est.note


def test_green_oracle_and_laplace_pairing(bm1d):
    # G_2 1 = (1 - E e^(-2 tau)) / 2 path by path, so the pairing is exact
    model, domain = bm1d
    cfg = _cfg(seed=17)
    n = 5000
    one = poly(1, {(0,): 1.0})
    green = estimate_green(model, domain, 2.0, one, [0.5], n, cfg)
    expm = estimate_exp_moment(model, domain, [0.5], -2.0, n, cfg)
    assert math.isclose(
        green.value.mean, (1.0 - expm.mean) / 2.0, rel_tol=1e-12, abs_tol=0.0
    )
    _close(green.value, GREEN2_HALF, 0.004)


def test_green_linearity_on_shared_paths(bm1d):
    model, domain = bm1d
    cfg = _cfg(seed=19)
    n = 2000
    f1 = poly(1, {(0,): 1.0})
    f2 = poly(1, {(2,): 1.0})
    f3 = f1 + f2 + f2
    g1 = estimate_green(model, domain, 1.0, f1, [0.5], n, cfg).value.mean
    g2 = estimate_green(model, domain, 1.0, f2, [0.5], n, cfg).value.mean
    g3 = estimate_green(model, domain, 1.0, f3, [0.5], n, cfg).value.mean
    assert math.isclose(g3, g1 + 2.0 * g2, rel_tol=1e-12)


def test_green_histogram_accounts_for_value(bm1d):
    model, domain = bm1d
    grid = HistGrid(lo=(0.0,), hi=(1.0,), shape=(16,))
    one = poly(1, {(0,): 1.0})
    green = estimate_green(
        model, domain, 2.0, one, [0.5], 2000, _cfg(seed=23), grid=grid
    )
    assert green.hist_mass.shape == (16,)
    assert np.all(green.hist_mass >= 0.0)
    assert math.isclose(green.total_mass, green.value.mean, rel_tol=1e-12)
    bare = estimate_green(model, domain, 2.0, one, [0.5], 100, _cfg(seed=23))
    with pytest.raises(ValueError, match="histogram"):
        bare.total_mass


def test_green_requires_positive_beta(bm1d):
    model, domain = bm1d
    one = poly(1, {(0,): 1.0})
    with pytest.raises(ValueError, match="beta"):
        estimate_green(model, domain, 0.0, one, [0.5], 8, _cfg())


def test_survival_oracle(bm1d):
    model, domain = bm1d
    cfg = _cfg(seed=29, horizon=1.0)
    batch = simulate_stopped(model, domain, [0.5], cfg, 20000)
    ts = sorted(SURVIVAL)
    est, err = survival_curve(batch, ts)
    for p, t in zip(est, ts):
        assert abs(p - SURVIVAL[t]) <= max(3.0 * math.sqrt(p * (1 - p) / 20000), 0.01)
    assert np.all(np.diff(est) <= 0.0)
    single = estimate_survival(model, domain, [0.5], 0.2, 2000, cfg)
    assert abs(single.mean - SURVIVAL[0.2]) <= max(3.0 * single.stderr, 0.04)
    with pytest.raises(ValueError, match="below the horizon"):
        survival_curve(batch, [0.5, 1.0])
    with pytest.raises(ValueError, match="below the censoring horizon"):
        estimate_survival(model, domain, [0.5], 1.0, 8, cfg)


def test_escape_prob_monotone(bm1d):
    model, domain = bm1d
    rep = estimate_escape_prob(
        model, domain, [0.5], (0.2, 0.5, 1.0), 4000, _cfg(seed=31)
    )
    assert rep.horizons == (0.2, 0.5, 1.0)
    assert all(b <= a for a, b in zip(rep.upper, rep.upper[1:]))
    assert rep.bracket == (0.0, rep.upper[-1])
    with pytest.raises(AssertionError, match="increase"):
        estimate_escape_prob(model, domain, [0.5], (0.5, 0.2), 8, _cfg())


def test_phi_functional_square(bm1d):
    model, domain = bm1d
    phi = PhiFunctional(
        phi=lambda t: t**2, dphi=lambda t: 2.0 * t, phi0=0.0, name="square"
    )
    rep = estimate_phi_functional(model, domain, [0.5], phi, 10000, _cfg(seed=37))
    _close(rep.v1, 5.0 / 48.0, 0.006)
    _close(rep.v2, 0.5, 0.01)
    assert rep.agrees
    assert abs(rep.representation - rep.v1.mean) <= 3.0 * rep.v1.stderr + 0.01


def test_dynkin_constant_is_exactly_zero():
    phi = poly(1, {(0,): 3.0})
    est = dynkin_residual(bm1d_model(), phi, [0.0], 0.5, 256, _cfg(seed=41))
    assert est.mean == 0.0 and est.stderr == 0.0
    assert est.censored_fraction == 0.0


def test_dynkin_polynomials_centered():
    model = bm1d_model()
    for phi in (poly(1, {(1,): 1.0}), poly(1, {(2,): 1.0})):
        est = dynkin_residual(model, phi, [0.0], 1.0, 8192, _cfg(seed=43))
        assert abs(est.mean) <= 3.0 * est.stderr
        assert est.censored_fraction == 0.0


def test_dynkin_requires_poly():
    with pytest.raises(TypeError, match="MultiPoly"):
        dynkin_residual(bm1d_model(), lambda x: x, [0.0], 0.5, 8, _cfg())


def test_u_stoc_constant_payoff_exact(bm1d):
    model, domain = bm1d
    g = poly(1, {(0,): 7.0})
    est = estimate_u_stoc(model, domain, None, g, [0.5], 500, _cfg(seed=47))
    assert est.mean == 7.0 and est.stderr == 0.0


def test_u_stoc_harmonic_measure(bm1d):
    model, domain = bm1d

    def right(states):
        return (states[:, 0] > 0.5).astype(np.float64)

    est = estimate_u_stoc(model, domain, None, right, [0.3], 10000, _cfg(seed=53))
    _close(est, 0.3, 0.015)


def test_u_stoc_mean_exit_time(bm1d):
    model, domain = bm1d
    one = poly(1, {(0,): 1.0})
    est = estimate_u_stoc(model, domain, one, None, [0.5], 10000, _cfg(seed=59))
    _close(est, 0.25, 0.006)


def test_u_stoc_all_censored_raises(bm1d):
    model, domain = bm1d
    with pytest.raises(ValueError, match="censored"):
        estimate_u_stoc(
            model, domain, None, None, [0.5], 16, _cfg(dt=1e-3, horizon=2e-3)
        )


def test_u_stoc_rejects_bad_callable(bm1d):
    model, domain = bm1d
    with pytest.raises(ValueError, match="payoff callable"):
        estimate_u_stoc(
            model, domain, None, lambda s: s, [0.5], 16, _cfg()
        )


def test_resolvent_is_dominated_by_identity(bm1d):
    # beta G_beta u <= sup u for bounded nonneg u; here the closed form is known
    model, domain = bm1d
    u = poly(1, {(1,): 1.0})
    for x, target in RESOLVENT2.items():
        green = estimate_green(model, domain, 2.0, u, [x], 20000, _cfg(seed=61))
        value = 2.0 * green.value.mean
        stderr = 2.0 * green.value.stderr
        assert value <= x + 3.0 * stderr
        assert abs(value - target) <= max(3.0 * stderr, 0.005)


def test_pde_residual_grid_flags_interior_solution(bm1d):
    model, domain = bm1d
    one = poly(1, {(0,): 1.0})
    rep = pde_residual_grid(
        model, domain, one, None, [0.4, 0.5], 0.05, 5000, _cfg(seed=67)
    )
    assert rep.within_tolerance.all()
    assert np.allclose(rep.u_values, [0.24, 0.25], atol=0.01)
    assert np.allclose(rep.tolerances, 3.0 * rep.stderrs + 0.05**2)
    assert rep.residuals.shape == (2,)


def test_pde_residual_grid_validates_stencil(bm1d):
    model, domain = bm1d
    one = poly(1, {(0,): 1.0})
    with pytest.raises(ValueError, match="not interior"):
        pde_residual_grid(model, domain, one, None, [0.01], 0.05, 8, _cfg())


def test_pde_residual_grid_rejects_censoring(bm1d):
    model, domain = bm1d
    one = poly(1, {(0,): 1.0})
    with pytest.raises(ValueError, match="common-random-number"):
        pde_residual_grid(
            model, domain, one, None, [0.5], 0.05, 64, _cfg(horizon=0.05)
        )
