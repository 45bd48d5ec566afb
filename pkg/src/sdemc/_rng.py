"""Counter-based noise streams for the simulation kernels.

Every path owns an independent stream determined by (seed, path index): the
draws for step k of path i under seed s come from Philox4x64-10 blocks with

    counter = (k, block, 0, STREAM_SALT),   key = (s, i).

Per step the layout is fixed: 2*ceil(r/2) uniforms feed Box-Muller pairs
producing the r gaussian increments, and the next uniform is reserved for the
boundary-crossing test (consumed whether or not the bridge correction is
enabled, so trajectories agree between bridge settings).  Because a draw
depends only on (seed, path, step, block), results are independent of batch
splits, thread count, and simulation horizon.

The Philox implementation is validated bit-for-bit against numpy's in the
test suite.  STREAM_SALT keeps these counters disjoint from the sequential
counters a plain ``numpy.random.Philox(key=...)`` generator would use.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, uint64

__all__ = [
    "philox4x64",
    "step_draws",
    "n_scratch_words",
    "n_gauss_scratch",
    "STREAM_SALT",
]

_M0 = uint64(0xD2E7470EE14C6C93)
_M1 = uint64(0xCA5A826395121157)
_W0 = uint64(0x9E3779B97F4A7C15)
_W1 = uint64(0xBB67AE8584CAA73B)
_MASK32 = uint64(0xFFFFFFFF)

STREAM_SALT = uint64(0x7370617468730a01)

_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * math.pi


@njit(inline="always", cache=True)
def _mulhilo64(a, b):
    alo = a & _MASK32
    ahi = a >> uint64(32)
    blo = b & _MASK32
    bhi = b >> uint64(32)
    ll = alo * blo
    lh = alo * bhi
    hl = ahi * blo
    t = (ll >> uint64(32)) + (lh & _MASK32) + (hl & _MASK32)
    hi = ahi * bhi + (lh >> uint64(32)) + (hl >> uint64(32)) + (t >> uint64(32))
    return hi, a * b


@njit(inline="always", cache=True)
def _philox_block(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        hi0, lo0 = _mulhilo64(_M0, c0)
        hi1, lo1 = _mulhilo64(_M1, c2)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """One raw Philox4x64-10 block (exposed for the numpy cross-check)."""
    return _philox_block(
        uint64(c0), uint64(c1), uint64(c2), uint64(c3), uint64(k0), uint64(k1)
    )


def n_scratch_words(r_noise: int) -> int:
    """uint64 scratch length needed by step_draws for r_noise gaussians."""
    n_uniform = 2 * ((r_noise + 1) // 2) + 1
    return 4 * ((n_uniform + 3) // 4)


def n_gauss_scratch(r_noise: int) -> int:
    """float64 scratch length (gaussians come in Box-Muller pairs)."""
    return 2 * ((r_noise + 1) // 2)


@njit(inline="always", cache=True)
def step_draws(seed, path, step, r_noise, words, gauss):
    """Fill gauss[0:r_noise] with the step's increments; return its uniform.

    words and gauss are caller scratch of sizes n_scratch_words(r) and
    n_gauss_scratch(r).  The uniform lies in [0, 1); the Box-Muller log
    argument is shifted into (0, 1] so it never sees zero.
    """
    n_pairs = (r_noise + 1) // 2
    n_uniform = 2 * n_pairs + 1
    n_blocks = (n_uniform + 3) // 4
    for j in range(n_blocks):
        w0, w1, w2, w3 = _philox_block(
            uint64(step), uint64(j), uint64(0), STREAM_SALT, uint64(seed), uint64(path)
        )
        words[4 * j + 0] = w0
        words[4 * j + 1] = w1
        words[4 * j + 2] = w2
        words[4 * j + 3] = w3
    for p in range(n_pairs):
        u1 = (float(words[2 * p] >> uint64(11)) + 1.0) * _INV53
        u2 = float(words[2 * p + 1] >> uint64(11)) * _INV53
        rad = math.sqrt(-2.0 * math.log(u1))
        ang = _TWO_PI * u2
        gauss[2 * p] = rad * math.cos(ang)
        gauss[2 * p + 1] = rad * math.sin(ang)
    return float(words[2 * n_pairs] >> uint64(11)) * _INV53
