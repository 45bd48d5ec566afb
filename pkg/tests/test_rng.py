"""Counter-based stream: Philox bit-compatibility and draw layout."""

import math

import numpy as np
from numpy.random import Philox

from sdemc._rng import (
    STREAM_SALT,
    n_gauss_scratch,
    n_scratch_words,
    philox4x64,
    step_draws,
)


def test_philox_matches_numpy_bit_for_bit():
    """numpy's Philox increments the counter before its first block, so
    random_raw(4) from counter c equals our block at counter c+1."""
    cases = [
        ((0, 0, 0, 0), (0, 0)),
        ((12345, 678, 0, 42), (9, 77)),
        ((2**63, 5, 7, 2**60), (2**50, 3)),
        ((0xFFFFFFFFFFFFFFFE, 1, 2, 3), (123456789, 987654321)),
    ]
    def u64(v):
        # exact conversion for values >= 2^63 (plain np.uint64 casts via float)
        return np.array([v % 2**64], dtype=np.uint64)[0]

    for c, k in cases:
        # pass arrays so numpy stores the words exactly (scalar ints near
        # 2^64 are floored through float64 by numpy's own input parsing)
        counter = np.array(c, dtype=np.uint64)
        key = np.array(k, dtype=np.uint64)
        ref = Philox(counter=counter, key=key).random_raw(4)
        mine = philox4x64(
            u64(c[0] + 1), u64(c[1]), u64(c[2]), u64(c[3]), u64(k[0]), u64(k[1])
        )
        assert [int(v) for v in mine] == [int(v) for v in ref]


def test_scratch_sizes():
    for r in (1, 2, 3, 5, 8):
        n_pairs = (r + 1) // 2
        assert n_gauss_scratch(r) >= r
        assert n_gauss_scratch(r) == 2 * n_pairs
        assert n_scratch_words(r) >= 2 * n_pairs + 1
        assert n_scratch_words(r) % 4 == 0


def draws(seed, path, step, r):
    words = np.empty(n_scratch_words(r), dtype=np.uint64)
    gauss = np.empty(n_gauss_scratch(r), dtype=np.float64)
    u = step_draws(seed, path, step, r, words, gauss)
    return gauss.copy(), u


def test_step_draws_deterministic_and_distinct():
    g1, u1 = draws(7, 11, 13, 2)
    g2, u2 = draws(7, 11, 13, 2)
    assert np.array_equal(g1, g2) and u1 == u2
    for other in ((8, 11, 13), (7, 12, 13), (7, 11, 14)):
        g3, u3 = draws(*other, 2)
        assert not np.array_equal(g1, g3)
    assert 0.0 <= u1 < 1.0


def test_step_draws_moments_and_finiteness():
    n = 20000
    r = 2
    words = np.empty(n_scratch_words(r), dtype=np.uint64)
    gauss = np.empty(n_gauss_scratch(r), dtype=np.float64)
    acc = np.empty((n, r))
    us = np.empty(n)
    for i in range(n):
        us[i] = step_draws(3, i, 0, r, words, gauss)
        acc[i] = gauss[:r]
    assert np.all(np.isfinite(acc))
    z = acc.ravel()
    assert abs(z.mean()) < 4.0 / math.sqrt(z.size)
    assert abs(z.std() - 1.0) < 4.0 / math.sqrt(z.size)
    assert np.all((us >= 0.0) & (us < 1.0))
    assert abs(us.mean() - 0.5) < 4.0 * math.sqrt(1.0 / 12.0 / n)


def test_stream_salt_separates_from_sequential_counters():
    """Counters used by the kernels never collide with a fresh numpy
    Philox(key=...) stream, whose counter block starts at zero."""
    assert int(STREAM_SALT) > 2**60
    seq = Philox(key=(5, 9)).random_raw(8)
    ours = philox4x64(
        np.uint64(1), np.uint64(0), np.uint64(0), STREAM_SALT, np.uint64(5), np.uint64(9)
    )
    assert not set(int(v) for v in ours) & set(int(v) for v in seq)
