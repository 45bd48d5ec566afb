"""Simulation layer: kernel vs reference identity, determinism, stopping rules."""

import csv
import math

import numpy as np
import pytest

from sdemc.model import Domain
from sdemc.polyfield import MultiPoly
from sdemc.simulate import (
    FLAG_BRIDGE_EXIT,
    FLAG_REENTERED,
    HistGrid,
    SimConfig,
    apply_thread_count,
    dump_exits_csv,
    dump_paths_csv,
    exit_time_triple,
    simulate_stopped,
    simulate_stopped_reference,
    step_em,
)

from conftest import bm1d_model, cubic1d_model, ou1d_model, poly

KIND_CENSORED = 2

_BATCH_ARRAYS = (
    "time",
    "kind",
    "state",
    "tau_pos",
    "monitor_time",
    "steps",
    "flags",
    "integrals",
    "discount",
)


def _assert_batches_equal(a, b, *, arrays=_BATCH_ARRAYS, hist=True):
    for name in arrays:
        va, vb = getattr(a, name), getattr(b, name)
        assert np.array_equal(va, vb, equal_nan=True), name
    if hist:
        if a.hist_raw is None:
            assert b.hist_raw is None
        else:
            assert np.array_equal(a.hist_raw, b.hist_raw)


# kernel vs plain-python reference


def test_kernel_matches_reference_exit_mode(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=2.0, seed=11, threads=1)
    grid = HistGrid(lo=(0.0,), hi=(1.0,), shape=(8,))
    monitor = Domain.halfspace([1.0], 0.75)
    f = poly(1, {(0,): 1.0, (2,): 1.0})
    kw = dict(
        stop_mode="exit",
        integrands=(f,),
        beta=0.7,
        monitor=monitor,
        grid=grid,
        path0=3,
    )
    fast = simulate_stopped(model, domain, [0.5], cfg, 64, **kw)
    slow = simulate_stopped_reference(model, domain, [0.5], cfg, 64, **kw)
    _assert_batches_equal(fast, slow)
    assert fast.path0 == slow.path0 == 3
    assert fast.start_membership == -1


def test_kernel_matches_reference_closure_mode(degenerate2d):
    model, domain = degenerate2d
    cfg = SimConfig(dt=1e-3, horizon=3.0, seed=5, threads=1)
    f = poly(2, {(0, 0): 1.0})
    kw = dict(stop_mode="closure", integrands=(f,), beta=0.0)
    fast = simulate_stopped(model, domain, [0.3, 0.0], cfg, 48, **kw)
    slow = simulate_stopped_reference(model, domain, [0.3, 0.0], cfg, 48, **kw)
    _assert_batches_equal(fast, slow)
    assert fast.exited_mask.any()


def test_kernel_matches_reference_no_bridge(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=5e-3, horizon=2.0, seed=7, bridge_correction=False, threads=1)
    fast = simulate_stopped(model, domain, [0.5], cfg, 64)
    slow = simulate_stopped_reference(model, domain, [0.5], cfg, 64)
    _assert_batches_equal(fast, slow)
    assert not (fast.flags & FLAG_BRIDGE_EXIT).any()


# determinism and stream layout


def test_thread_count_invariance(bm1d):
    model, domain = bm1d
    grid = HistGrid(lo=(0.0,), hi=(1.0,), shape=(16,))
    f = poly(1, {(0,): 1.0})
    batches = []
    for threads in (1, 4, 16):
        cfg = SimConfig(dt=1e-3, horizon=1.0, seed=42, threads=threads)
        batches.append(
            simulate_stopped(
                model, domain, [0.5], cfg, 4096, integrands=(f,), grid=grid
            )
        )
    _assert_batches_equal(batches[0], batches[1])
    _assert_batches_equal(batches[0], batches[2])


def test_block_size_invariance(bm1d):
    # path outputs are blocking-independent bit for bit; the histogram is a
    # sum over per-block partials, so only its total is association-stable
    model, domain = bm1d
    grid = HistGrid(lo=(0.0,), hi=(1.0,), shape=(16,))
    a = simulate_stopped(
        model,
        domain,
        [0.5],
        SimConfig(dt=1e-3, horizon=1.0, seed=9, block_size=7),
        300,
        grid=grid,
    )
    b = simulate_stopped(
        model,
        domain,
        [0.5],
        SimConfig(dt=1e-3, horizon=1.0, seed=9, block_size=1024),
        300,
        grid=grid,
    )
    _assert_batches_equal(a, b, hist=False)
    assert np.allclose(a.hist_raw, b.hist_raw, rtol=1e-12, atol=0.0)


def test_path0_reproduces_subrange(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=1.0, seed=13)
    full = simulate_stopped(model, domain, [0.5], cfg, 64)
    part = simulate_stopped(model, domain, [0.5], cfg, 16, path0=17)
    for name in _BATCH_ARRAYS:
        va = getattr(full, name)[17:33]
        vb = getattr(part, name)
        assert np.array_equal(va, vb, equal_nan=True), name


def test_horizon_extension_preserves_exited_paths(bm1d):
    model, domain = bm1d
    short = simulate_stopped(
        model, domain, [0.5], SimConfig(dt=1e-3, horizon=0.1, seed=3), 256
    )
    long = simulate_stopped(
        model, domain, [0.5], SimConfig(dt=1e-3, horizon=10.0, seed=3), 256
    )
    done = short.exited_mask
    assert done.any() and not done.all()
    for name in _BATCH_ARRAYS:
        va = getattr(short, name)[done]
        vb = getattr(long, name)[done]
        assert np.array_equal(va, vb, equal_nan=True), name
    # every path censored at the short horizon exits by the long one here
    assert long.exited_mask.all()


def test_censoring_monotone_in_horizon(bm1d):
    model, domain = bm1d
    fracs = []
    for horizon in (0.05, 0.2, 1.0):
        cfg = SimConfig(dt=1e-3, horizon=horizon, seed=21)
        batch = simulate_stopped(model, domain, [0.5], cfg, 512)
        fracs.append(batch.censored_fraction)
        censored = batch.censored_mask
        assert np.all(batch.time[censored] == cfg.max_steps * cfg.dt)
        assert np.all(np.isinf(batch.tau_pos[censored]))
    assert fracs[0] >= fracs[1] >= fracs[2]


def test_apply_thread_count_clamps():
    import numba

    assert apply_thread_count(0) == numba.get_num_threads()
    assert apply_thread_count(2) == 2
    assert apply_thread_count(10**6) == int(numba.config.NUMBA_NUM_THREADS)
    apply_thread_count(int(numba.config.NUMBA_NUM_THREADS))


# bridge correction


def test_bridge_stops_no_later_than_plain(bm1d):
    model, domain = bm1d
    base = dict(dt=1e-2, horizon=50.0, seed=17)
    with_b = simulate_stopped(
        model, domain, [0.5], SimConfig(bridge_correction=True, **base), 512
    )
    without = simulate_stopped(
        model, domain, [0.5], SimConfig(bridge_correction=False, **base), 512
    )
    # the bridge only adds stopping opportunities on a shared noise stream
    assert np.all(with_b.exited_mask >= without.exited_mask)
    both = with_b.exited_mask & without.exited_mask
    assert np.all(with_b.time[both] <= without.time[both] + 1e-12)
    hits = (with_b.flags & FLAG_BRIDGE_EXIT) != 0
    assert hits.any()
    # a bridge exit reports the crossing point, which lies on a face
    on_face = np.minimum(
        np.abs(with_b.state[hits, 0]), np.abs(with_b.state[hits, 0] - 1.0)
    )
    assert np.max(on_face) < 1e-12
    assert not ((without.flags & FLAG_BRIDGE_EXIT) != 0).any()


def test_bridge_exit_times_not_grid_aligned(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-2, horizon=50.0, seed=29)
    batch = simulate_stopped(model, domain, [0.5], cfg, 256)
    hits = (batch.flags & FLAG_BRIDGE_EXIT) != 0
    assert hits.any()
    frac = (batch.time[hits] / cfg.dt) % 1.0
    assert np.any((frac > 1e-9) & (frac < 1.0 - 1e-9))


# stopping-time triple


def test_exit_time_triple_interior_ordering(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=20.0, seed=2)
    for pidx in (0, 1, 5):
        tau, tau0, taubar, flags = exit_time_triple(model, domain, [0.5], cfg, pidx)
        assert not flags["censored"]
        assert tau is not None and taubar is not None
        assert tau0 == tau
        assert tau0 <= tau <= taubar + 1e-12
        assert set(flags) == {"censored", "reentered", "bridge_exit", "exploded"}


def test_exit_time_triple_boundary_start(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=5.0, seed=2)
    tau, tau0, taubar, flags = exit_time_triple(model, domain, [0.0], cfg)
    # from a noisy boundary point the crossing fires immediately
    assert tau0 == 0.0
    assert tau == 0.0
    assert taubar == 0.0
    assert flags["bridge_exit"]


def test_exit_time_triple_censored(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=2e-3, seed=0)
    tau, tau0, taubar, flags = exit_time_triple(model, domain, [0.5], cfg)
    assert flags["censored"]
    assert tau is None and taubar is None


# start membership handling


def test_exterior_start_rejected_without_override(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=1.0)
    with pytest.raises(ValueError, match="outside the closure"):
        simulate_stopped(model, domain, [1.5], cfg, 4)
    batch = simulate_stopped(model, domain, [1.5], cfg, 4, start_membership=1)
    assert batch.exited_mask.all()
    assert np.all(batch.integrals == 0.0)


def test_boundary_start_exit_mode_stops_at_zero(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=1.0, seed=31)
    f = poly(1, {(0,): 1.0})
    batch = simulate_stopped(model, domain, [0.0], cfg, 32, integrands=(f,))
    assert batch.start_membership == 0
    assert np.all(batch.time == 0.0)
    assert np.all(batch.state == 0.0)
    assert np.all(batch.steps == 1)
    assert np.all(batch.integrals == 0.0)


def test_reentry_flag_from_boundary_closure(bm1d):
    model, domain = bm1d
    cfg = SimConfig(
        dt=1e-3, horizon=20.0, seed=19, bridge_correction=False
    )
    batch = simulate_stopped(model, domain, [0.0], cfg, 64, stop_mode="closure")
    reentered = (batch.flags & FLAG_REENTERED) != 0
    immediate = batch.time == cfg.dt
    assert reentered.any() and immediate.any()
    assert np.all(reentered ^ immediate)


# quadrature and occupation


def test_unit_integrand_reproduces_exit_time(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=5.0, seed=23)
    f = poly(1, {(0,): 1.0})
    batch = simulate_stopped(model, domain, [0.5], cfg, 512, integrands=(f,), beta=0.0)
    done = batch.exited_mask
    assert done.any()
    # left-endpoint quadrature of 1 accrues exactly the same float additions
    # as the clock, partial bridge steps included
    assert np.array_equal(batch.integrals[done, 0], batch.time[done])
    assert np.all(batch.discount == 1.0)


def test_grid_occupation_matches_unit_integral(bm1d):
    model, domain = bm1d
    f = poly(1, {(0,): 1.0})
    grid = HistGrid(lo=(0.0,), hi=(1.0,), shape=(16,))
    for beta in (0.0, 0.7):
        cfg = SimConfig(dt=1e-3, horizon=5.0, seed=37)
        batch = simulate_stopped(
            model, domain, [0.5], cfg, 256, integrands=(f,), beta=beta, grid=grid
        )
        assert batch.hist_raw.shape == (16,)
        total = float(batch.hist_raw.sum())
        expect = float(batch.integrals[:, 0].sum())
        assert math.isclose(total, expect, rel_tol=1e-12)
    assert batch.grid is grid


def test_discount_matches_exit_time(bm1d):
    # per-step discounting compounds to e^(-beta tau) up to float rounding
    model, domain = bm1d
    beta = 2.0
    cfg = SimConfig(dt=1e-3, horizon=5.0, seed=41)
    batch = simulate_stopped(model, domain, [0.5], cfg, 128, beta=beta)
    done = batch.exited_mask
    assert np.allclose(
        batch.discount[done], np.exp(-beta * batch.time[done]), rtol=1e-9
    )


def test_monitor_first_passage(bm1d):
    model, domain = bm1d
    monitor = Domain.halfspace([1.0], 0.75)
    cfg = SimConfig(dt=1e-3, horizon=5.0, seed=43)
    batch = simulate_stopped(model, domain, [0.5], cfg, 256, monitor=monitor)
    hit = np.isfinite(batch.monitor_time)
    right = batch.exited_mask & (batch.state[:, 0] >= 0.9)
    assert right.any()
    assert np.all(hit[right])
    assert np.all(batch.monitor_time[hit] >= cfg.dt - 1e-15)
    assert np.all(batch.monitor_time[hit] <= batch.time[hit] + 1e-12)


# explosion handling


def test_cubic_drift_explodes():
    cfg = SimConfig(dt=1e-3, horizon=2.0, seed=47)
    batch = simulate_stopped(cubic1d_model(), None, [2.0], cfg, 8)
    assert batch.explosion_fraction == 1.0
    assert batch.exited_mask.all()
    assert np.all(batch.time < 0.5)
    rec = batch.record(0)
    assert rec.exploded
    assert rec.exit_kind == "exited_closure"


def test_no_domain_censors_without_explosion():
    cfg = SimConfig(dt=1e-3, horizon=0.5, seed=53)
    batch = simulate_stopped(bm1d_model(), None, [0.0], cfg, 16)
    assert batch.censored_fraction == 1.0
    assert np.all(batch.steps == cfg.max_steps)


# degenerate example geometry


def test_degenerate_right_edge_untouched(degenerate2d):
    model, domain = degenerate2d
    cfg = SimConfig(dt=1e-4, horizon=2.0, seed=59)
    batch = simulate_stopped(model, domain, [0.9, 0.0], cfg, 200)
    done = batch.exited_mask
    assert np.mean(done) > 0.9
    # the first coordinate only drifts left, so the face x_0 = 1 is unreachable
    assert np.max(batch.state[done, 0]) <= 0.9 + 1e-12
    right_edge = done & (batch.state[:, 0] >= 1.0 - 1e-9) & (
        np.abs(batch.state[:, 1]) < 1.0
    )
    assert not right_edge.any()
    # every observed exit leaves through a noisy horizontal face
    assert np.all(np.abs(batch.state[done, 1]) >= 1.0 - 1e-9)


# serialization


def test_dump_exits_csv_roundtrip(tmp_path, bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=0.2, seed=61)
    f = poly(1, {(0,): 1.0})
    batch = simulate_stopped(model, domain, [0.5], cfg, 64, integrands=(f,))
    out = tmp_path / "exits.csv"
    dump_exits_csv(batch, out)
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 64
    header = list(rows[0])
    assert header == [
        "path_index",
        "exit_time",
        "exit_kind",
        "censored",
        "exit_point_0",
        "tau_pos",
        "steps",
        "flags",
        "discount",
        "integral_0",
    ]
    assert batch.exited_mask.any() and batch.censored_mask.any()
    for i, row in enumerate(rows):
        assert int(row["path_index"]) == i
        if row["censored"] == "1":
            assert row["exit_time"] == "" and row["exit_point_0"] == ""
            assert row["exit_kind"] == "censored"
        else:
            # 17 significant digits round-trip doubles exactly
            assert float(row["exit_time"]) == batch.time[i]
            assert float(row["exit_point_0"]) == batch.state[i, 0]
            assert float(row["integral_0"]) == batch.integrals[i, 0]
        assert int(row["flags"]) == batch.flags[i]


def test_dump_paths_csv(tmp_path, bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=0.5, seed=67, store_path=True, path_stride=5)
    batch = simulate_stopped_reference(model, domain, [0.5], cfg, 4)
    out = tmp_path / "paths.csv"
    dump_paths_csv(batch, out)
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["path_index", "t", "x_0"]
    by_path = {}
    for row in rows:
        by_path.setdefault(int(row["path_index"]), []).append(float(row["t"]))
    assert set(by_path) == {0, 1, 2, 3}
    for i, ts in by_path.items():
        assert ts[0] == 0.0
        assert ts == sorted(ts)
        # the stopping state is always recorded
        assert math.isclose(ts[-1], batch.time[i], rel_tol=0, abs_tol=1e-15)


def test_dump_paths_requires_store_path(bm1d, tmp_path):
    model, domain = bm1d
    batch = simulate_stopped(
        model, domain, [0.5], SimConfig(dt=1e-3, horizon=0.1), 2
    )
    with pytest.raises(ValueError, match="store_path"):
        dump_paths_csv(batch, tmp_path / "paths.csv")


# config and argument validation


def test_simconfig_validation():
    with pytest.raises(AssertionError):
        SimConfig(dt=0.0)
    with pytest.raises(AssertionError):
        SimConfig(dt=2.0, horizon=1.0)
    with pytest.raises(AssertionError):
        SimConfig(seed=-1)
    with pytest.raises(AssertionError):
        SimConfig(block_size=0)
    assert SimConfig(dt=0.25, horizon=1.0).max_steps == 4
    assert SimConfig(dt=0.3, horizon=1.0).max_steps == 4
    cfg = SimConfig(dt=0.1, horizon=1.0)
    assert cfg.replace(seed=5).seed == 5 and cfg.seed == 0


def test_bad_arguments_raise(bm1d):
    model, domain = bm1d
    cfg = SimConfig(dt=1e-3, horizon=1.0)
    with pytest.raises(ValueError, match="stop_mode"):
        simulate_stopped(model, domain, [0.5], cfg, 2, stop_mode="both")
    with pytest.raises(ValueError, match="shape"):
        simulate_stopped(model, domain, [0.5, 0.1], cfg, 2)
    with pytest.raises(TypeError, match="MultiPoly"):
        simulate_stopped(model, domain, [0.5], cfg, 2, integrands=(lambda x: x,))
    with pytest.raises(ValueError, match="grid dimension"):
        simulate_stopped(
            model,
            domain,
            [0.5],
            cfg,
            2,
            grid=HistGrid(lo=(0.0, 0.0), hi=(1.0, 1.0), shape=(4, 4)),
        )
    with pytest.raises(ValueError, match="finite"):
        simulate_stopped(model, domain, [math.nan], cfg, 2)


def test_step_em_exact():
    x = np.array([0.5])
    out = step_em(ou1d_model(), x, 0.01, np.array([1.0]))
    assert out.shape == (1,)
    assert out[0] == 0.5 + (-0.5) * 0.01 + math.sqrt(0.01) * 1.0
