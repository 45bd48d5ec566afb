"""Shared fixtures: thread pool sizing, kernel warmup, reference models.

NUMBA_NUM_THREADS must be pinned before numba is first imported so that the
determinism tests can switch the worker count between 1, 4, and 16 inside
one process.
"""

import os

os.environ.setdefault("NUMBA_NUM_THREADS", "16")

import numpy as np
import pytest
from hypothesis import settings

from sdemc import (
    DiffusionModel,
    Domain,
    Exhaustion,
    MultiPoly,
    PolyVectorField,
    SimConfig,
    simulate_stopped,
)
from sdemc.ergodic import CycleConfig, run_cycles

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

SQRT2 = 1.4142135623730951


def poly(dim, terms):
    """MultiPoly from {exponent tuple: coeff}."""
    out = MultiPoly.zero(dim)
    for e, c in terms.items():
        out = out + MultiPoly.monomial(dim, e, c)
    return out


def bm1d_model():
    """dx = dB on R: L = (1/2) d^2/dx^2."""
    return DiffusionModel(
        drift=PolyVectorField((MultiPoly.zero(1),)),
        sigma=((MultiPoly.const(1, 1.0),),),
        name="bm1d",
    )


def ou1d_model():
    """dx = -x dt + dB: stationary law N(0, 1/2)."""
    return DiffusionModel(
        drift=PolyVectorField((-MultiPoly.coordinate(1, 0),)),
        sigma=((MultiPoly.const(1, 1.0),),),
        name="ou1d",
    )


def drifted1d_model():
    """dx = dt + dB: transient to +infinity."""
    return DiffusionModel(
        drift=PolyVectorField((MultiPoly.const(1, 1.0),)),
        sigma=((MultiPoly.const(1, 1.0),),),
        name="drifted1d",
    )


def cubic1d_model():
    """dx = x^3 dt + dB: explodes in finite time from large starts."""
    return DiffusionModel(
        drift=PolyVectorField((poly(1, {(3,): 1.0}),)),
        sigma=((MultiPoly.const(1, 1.0),),),
        name="cubic1d",
    )


def degenerate2d_model():
    """dx1 = -x2^2 dt, dx2 = sqrt(2) dB: noise only in the x2 direction."""
    return DiffusionModel(
        drift=PolyVectorField((poly(2, {(0, 2): -1.0}), MultiPoly.zero(2))),
        sigma=(
            (MultiPoly.zero(2),),
            (MultiPoly.const(2, SQRT2),),
        ),
        name="degenerate2d",
    )


@pytest.fixture(scope="session")
def bm1d():
    return bm1d_model(), Domain.box([0.0], [1.0])


@pytest.fixture(scope="session")
def ou1d():
    return ou1d_model()


@pytest.fixture(scope="session")
def drifted1d():
    return drifted1d_model()


@pytest.fixture(scope="session")
def degenerate2d():
    return degenerate2d_model(), Domain.box([-1.0, -1.0], [1.0, 1.0])


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Trigger both numba kernels once so timed tests measure steady state."""
    model, domain = bm1d_model(), Domain.box([0.0], [1.0])
    cfg = SimConfig(dt=1e-3, horizon=2.0, seed=0, threads=1)
    simulate_stopped(model, domain, [0.5], cfg, 8, integrands=(MultiPoly.const(1, 1.0),))
    simulate_stopped(model, domain, [0.5], cfg, 8, stop_mode="closure")
    run_cycles(
        ou1d_model(),
        CycleConfig(center=(0.0,), rho_in=0.5, rho_out=1.0),
        3,
        SimConfig(dt=1e-3, horizon=50.0, seed=0, threads=1),
        n_chains=2,
    )
    yield
