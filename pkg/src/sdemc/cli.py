"""Command line front end.

Subcommands cover the whole pipeline: bracket checks, batch simulation to
CSV, pointwise solves of the stopped-functional representation, survival
curves, discounted occupation, boundary-point probes and certificates, and
the ergodic toolset (Lyapunov certificate, cycles, invariant measure,
recurrence classification).

Exit codes: 0 success / affirmative verdict, 1 negative or inconclusive
verdict, 2 usage error, 3 estimation failure (all paths censored, zero
completed cycles).

Every run writes ``<command>-manifest.json`` into the output directory with
the resolved seed, thread count, model hash and timings.  Data files contain
no timestamps and are byte-stable across thread counts for a fixed seed.

Environment: ``SDEMC_OUT_DIR`` and ``SDEMC_THREADS`` supply defaults for
``--out-dir`` and ``--threads``.  Threading must be pinned before the
simulation backend loads, so this module imports it lazily inside the
command handlers.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time

import numpy as np

from . import __version__
from .model import Domain, load_model, model_file_sha256
from .polyfield import MultiPoly

_TOKEN = re.compile(
    r"\s*(?:(?P<num>[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)|(?P<var>x[0-9]+)"
    r"|(?P<pow>\^)|(?P<mul>\*)|(?P<add>\+)|(?P<sub>-))"
)


def parse_poly(text: str, dim: int) -> MultiPoly:
    """Parse a polynomial literal like ``2*x0^2*x1 - 0.5*x1 + 1``.

    Grammar: sum of terms; a term is a product of numbers and powers of the
    coordinates x0..x{dim-1}.  No parentheses.
    """
    pos = 0
    tokens = []
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None:
            if text[pos:].strip() == "":
                break
            raise ValueError("cannot parse polynomial at %r" % text[pos:])
        pos = mt.end()
        for name in ("num", "var", "pow", "mul", "add", "sub"):
            if mt.group(name) is not None:
                tokens.append((name, mt.group(name)))
                break
    if not tokens:
        raise ValueError("empty polynomial literal")

    poly = MultiPoly.zero(dim)
    i = 0

    def parse_term(i: int, sign: float):
        coeff = sign
        expts = [0] * dim
        expect_factor = True
        while i < len(tokens):
            kind, val = tokens[i]
            if kind == "num":
                coeff *= float(val)
                i += 1
            elif kind == "var":
                j = int(val[1:])
                if j >= dim:
                    raise ValueError("coordinate %s out of range for dim %d" % (val, dim))
                p = 1
                if i + 1 < len(tokens) and tokens[i + 1][0] == "pow":
                    if i + 2 >= len(tokens) or tokens[i + 2][0] != "num":
                        raise ValueError("dangling '^' in polynomial literal")
                    p = int(float(tokens[i + 2][1]))
                    i += 2
                expts[j] += p
                i += 1
            else:
                break
            expect_factor = False
            if i < len(tokens) and tokens[i][0] == "mul":
                i += 1
                expect_factor = True
        if expect_factor:
            raise ValueError("trailing operator in polynomial literal")
        return i, coeff, tuple(expts)

    sign = 1.0
    if tokens[0][0] in ("add", "sub"):
        sign = -1.0 if tokens[0][0] == "sub" else 1.0
        i = 1
    while True:
        i, coeff, expts = parse_term(i, sign)
        poly = poly + MultiPoly(dim, {expts: coeff})
        if i >= len(tokens):
            break
        kind = tokens[i][0]
        if kind not in ("add", "sub"):
            raise ValueError("expected '+' or '-' in polynomial literal")
        sign = -1.0 if kind == "sub" else 1.0
        i += 1
    return poly


def _parse_floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def _resolve_out_dir(args) -> str:
    out = args.out_dir or os.environ.get("SDEMC_OUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return max(0, int(args.threads))
    env = os.environ.get("SDEMC_THREADS")
    return max(0, int(env)) if env else 0


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int.from_bytes(os.urandom(7), "little")


def _pin_threads(threads: int) -> None:
    # the backend reads this at import time; harmless if already imported
    if threads > 0 and "NUMBA_NUM_THREADS" not in os.environ:
        os.environ["NUMBA_NUM_THREADS"] = str(threads)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(args, command: str, seed: int, threads: int, out_dir: str, t0: float,
              outputs: list, extra: dict | None = None) -> None:
    import numba

    payload = {
        "schema": "run-manifest/1",
        "command": command,
        "argv": sys.argv[1:],
        "model": getattr(args, "model", None),
        "model_sha256": model_file_sha256(args.model) if getattr(args, "model", None) else None,
        "seed": seed,
        "threads": threads,
        "tool_version": __version__,
        "numpy_version": np.__version__,
        "numba_version": numba.__version__,
        "wall_seconds": round(time.monotonic() - t0, 3),
        "outputs": outputs,
    }
    if extra:
        payload.update(extra)
    _write_json(os.path.join(out_dir, "%s-manifest.json" % command), payload)


def _load(parser, path: str):
    """load_model with malformed-file errors mapped to usage exit code 2."""
    try:
        return load_model(path)
    except (OSError, ValueError, KeyError, TypeError) as e:
        parser.error("cannot load model file %r: %s" % (path, e))


def _sim_config(parser, args, sim_defaults: dict, seed: int, threads: int):
    from .simulate import SimConfig

    dt = args.dt if args.dt is not None else float(sim_defaults.get("dt", 1e-3))
    horizon = (
        args.horizon if args.horizon is not None else float(sim_defaults.get("horizon", 100.0))
    )
    bridge = not getattr(args, "no_bridge", False)
    try:
        return SimConfig(
            dt=dt, horizon=horizon, seed=seed, bridge_correction=bridge, threads=threads
        )
    except AssertionError as e:
        parser.error("bad simulation settings: %s" % e)


def _require_domain(parser, domain, args):
    if getattr(args, "domain", None):
        kind, rest = args.domain.split(":", 1) if ":" in args.domain else (args.domain, "")
        if kind == "box":
            lo_s, hi_s = rest.split(";")
            return Domain.box(_parse_floats(lo_s), _parse_floats(hi_s))
        if kind == "ball":
            vals = _parse_floats(rest)
            return Domain.ball(vals[:-1], vals[-1])
        if kind == "outside_ball":
            vals = _parse_floats(rest)
            return Domain.outside_ball(vals[:-1], vals[-1])
        parser.error("unknown domain literal %r" % args.domain)
    if domain is None:
        parser.error("model file declares no domain; pass --domain")
    return domain


# ---------------------------------------------------------------------------
# command handlers


def _cmd_check_hormander(parser, args) -> int:
    from .polyfield import check_parabolic_hormander

    t0 = time.monotonic()
    model, _, _, _ = _load(parser, args.model)
    out_dir = _resolve_out_dir(args)
    points = [
        _parse_floats(chunk)
        for chunk in (args.point or [",".join(["0"] * model.dim_state)])
    ]
    report = check_parabolic_hormander(
        model.drift, model.sigma, points, max_depth=args.depth, mode=args.mode
    )
    _write_json(os.path.join(out_dir, "hormander.json"), report.to_jsonable())
    print(report.format_table())
    _manifest(
        args, "check-hormander", 0, 0, out_dir, t0, ["hormander.json"],
        {"spans_everywhere": report.spans_everywhere},
    )
    return 0 if report.spans_everywhere else 1


def _cmd_simulate(parser, args) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    _pin_threads(threads)
    from .simulate import (
        dump_exits_csv,
        dump_paths_csv,
        simulate_stopped,
        simulate_stopped_reference,
    )

    t0 = time.monotonic()
    model, domain, _, sim_defaults = _load(parser, args.model)
    domain = _require_domain(parser, domain, args)
    out_dir = _resolve_out_dir(args)
    cfg = _sim_config(parser, args, sim_defaults, seed, threads)
    x0 = np.asarray(_parse_floats(args.x0))
    if args.store_paths:
        # trajectory storage lives in the reference engine; exit records are
        # bit-identical to the compiled kernel for a fixed seed
        cfg = cfg.replace(store_path=True, path_stride=args.path_stride)
        batch = simulate_stopped_reference(
            model, domain, x0, cfg, args.n_paths, stop_mode=args.stop_mode
        )
    else:
        batch = simulate_stopped(
            model, domain, x0, cfg, args.n_paths, stop_mode=args.stop_mode
        )
    outputs = ["exits.csv"]
    dump_exits_csv(batch, os.path.join(out_dir, "exits.csv"))
    if args.store_paths:
        dump_paths_csv(batch, os.path.join(out_dir, "paths.csv"))
        outputs.append("paths.csv")
    summary = batch.summary()
    print(
        "simulated %d paths: exited %.4f censored %.4f exploded %.4f"
        % (
            args.n_paths,
            1.0 - batch.censored_fraction - batch.explosion_fraction,
            batch.censored_fraction,
            batch.explosion_fraction,
        )
    )
    _manifest(
        args, "simulate", seed, threads, out_dir, t0, outputs,
        {"n_paths": args.n_paths, "dt": cfg.dt, "horizon": cfg.horizon, "summary": summary},
    )
    return 0


def _cmd_solve(parser, args) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    _pin_threads(threads)
    from .estimate import estimate_u_stoc

    t0 = time.monotonic()
    model, domain, _, sim_defaults = _load(parser, args.model)
    domain = _require_domain(parser, domain, args)
    out_dir = _resolve_out_dir(args)
    cfg = _sim_config(parser, args, sim_defaults, seed, threads)
    m = model.dim_state
    f = parse_poly(args.f, m) if args.f and args.f != "none" else None
    g = parse_poly(args.g, m) if args.g and args.g != "none" else None
    points = [np.asarray(_parse_floats(chunk)) for chunk in args.x0]
    if args.points_file:
        try:
            body = np.loadtxt(args.points_file, delimiter=",", ndmin=2, dtype=np.float64)
        except (OSError, ValueError) as e:
            parser.error("cannot read points file %r: %s" % (args.points_file, e))
        points.extend(np.asarray(row) for row in body)
    if not points:
        parser.error("give at least one start point via --x0 or --points-file")
    results = []
    for x0 in points:
        try:
            est = estimate_u_stoc(model, domain, f, g, x0, args.n_paths, cfg)
        except (RuntimeError, ValueError) as e:
            print("estimation failed at %s: %s" % (x0.tolist(), e), file=sys.stderr)
            return 3
        lo, hi = est.interval()
        results.append(
            {
                "point": x0.tolist(),
                "mean": est.mean,
                "stderr": est.stderr,
                "n": est.n,
                "censored_fraction": est.censored_fraction,
                "interval3sigma": [lo, hi],
                "bias": est.bias,
            }
        )
        print(
            "u(%s) = %.8g +- %.3g (n=%d, censored %.4f)"
            % (x0.tolist(), est.mean, est.stderr, est.n, est.censored_fraction)
        )
    csv_path = os.path.join(out_dir, "solution.csv")
    with open(csv_path, "w") as fh:
        cols = ",".join("x_%d" % j for j in range(m))
        fh.write("%s,estimate,stderr,n,censored_fraction\n" % cols)
        for row in results:
            fh.write(
                "%s,%.17g,%.17g,%d,%.17g\n"
                % (
                    ",".join("%.17g" % v for v in row["point"]),
                    row["mean"],
                    row["stderr"],
                    row["n"],
                    row["censored_fraction"],
                )
            )
    _write_json(os.path.join(out_dir, "solution.json"), {"estimates": results})
    _manifest(
        args, "solve", seed, threads, out_dir, t0, ["solution.csv", "solution.json"],
        {"n_paths": args.n_paths, "dt": cfg.dt, "horizon": cfg.horizon},
    )
    return 0


def _cmd_survival(parser, args) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    _pin_threads(threads)
    from .estimate import survival_curve
    from .simulate import simulate_stopped

    t0 = time.monotonic()
    model, domain, _, sim_defaults = _load(parser, args.model)
    domain = _require_domain(parser, domain, args)
    out_dir = _resolve_out_dir(args)
    ts = sorted(_parse_floats(args.times))
    if not ts or ts[0] <= 0:
        parser.error("--times needs positive comma-separated values")
    cfg = _sim_config(parser, args, sim_defaults, seed, threads)
    if cfg.horizon <= ts[-1]:
        cfg = cfg.replace(horizon=ts[-1] * 1.25)
    x0 = np.asarray(_parse_floats(args.x0))
    batch = simulate_stopped(model, domain, x0, cfg, args.n_paths, stop_mode="exit")
    est, err = survival_curve(batch, ts)
    path = os.path.join(out_dir, "survival.csv")
    with open(path, "w") as fh:
        fh.write("t,survival,stderr\n")
        for t, p, s in zip(ts, est, err):
            fh.write("%.17g,%.17g,%.17g\n" % (t, p, s))
    for t, p, s in zip(ts, est, err):
        print("S(%g) = %.6f +- %.6f" % (t, p, s))
    _manifest(
        args, "survival", seed, threads, out_dir, t0, ["survival.csv"],
        {"n_paths": args.n_paths, "dt": cfg.dt, "horizon": cfg.horizon},
    )
    return 0


def _cmd_green(parser, args) -> int:
    if args.beta <= 0.0:
        parser.error("--beta must be positive for the discounted functional")
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    _pin_threads(threads)
    from .estimate import estimate_green
    from .simulate import HistGrid

    t0 = time.monotonic()
    model, domain, _, sim_defaults = _load(parser, args.model)
    domain = _require_domain(parser, domain, args)
    out_dir = _resolve_out_dir(args)
    cfg = _sim_config(parser, args, sim_defaults, seed, threads)
    m = model.dim_state
    f = parse_poly(args.f, m) if args.f and args.f != "none" else None
    grid = None
    if args.grid:
        lo_s, hi_s, n_s = args.grid.split(";")
        grid = HistGrid(
            lo=tuple(_parse_floats(lo_s)),
            hi=tuple(_parse_floats(hi_s)),
            shape=tuple(int(v) for v in _parse_floats(n_s)),
        )
    x0 = np.asarray(_parse_floats(args.x0))
    est = estimate_green(model, domain, args.beta, f, x0, args.n_paths, cfg, grid=grid)
    result = {
        "point": x0.tolist(),
        "beta": args.beta,
        "value": est.value.mean,
        "stderr": est.value.stderr,
        "n": est.value.n,
        "censored_fraction": est.value.censored_fraction,
    }
    outputs = ["green.json"]
    if grid is not None:
        hist_path = os.path.join(out_dir, "green_hist.csv")
        centers = grid.centers()
        with open(hist_path, "w") as fh:
            fh.write(
                "cell," + ",".join("center_%d" % j for j in range(m)) + ",mass\n"
            )
            for idx in range(grid.n_cells):
                fh.write(
                    "%d,%s,%.17g\n"
                    % (
                        idx,
                        ",".join("%.17g" % c for c in centers[idx]),
                        est.hist_mass[idx],
                    )
                )
        outputs.append("green_hist.csv")
        result["hist_total_mass"] = est.total_mass
    _write_json(os.path.join(out_dir, "green.json"), result)
    print(
        "G_%g f at %s = %.8g +- %.3g" % (args.beta, x0.tolist(), est.value.mean, est.value.stderr)
    )
    _manifest(
        args, "green", seed, threads, out_dir, t0, outputs,
        {"n_paths": args.n_paths, "dt": cfg.dt, "horizon": cfg.horizon},
    )
    return 0


def _cmd_probe_boundary(parser, args) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    _pin_threads(threads)
    from .boundary import probe_regularity

    t0 = time.monotonic()
    model, domain, _, sim_defaults = _load(parser, args.model)
    domain = _require_domain(parser, domain, args)
    out_dir = _resolve_out_dir(args)
    cfg = _sim_config(parser, args, sim_defaults, seed, threads)
    point = np.asarray(_parse_floats(args.point))
    hs = _parse_floats(args.h_schedule)
    probe = probe_regularity(model, domain, point, hs, args.n_paths, cfg)
    for line in probe.lines():
        print(line)
    with open(os.path.join(out_dir, "probe.csv"), "w") as fh:
        fh.write("h,estimate,stderr\n")
        for h, p, s in zip(probe.h_schedule, probe.fractions, probe.stderrs):
            fh.write("%.17g,%.17g,%.17g\n" % (h, p, s))
    _write_json(
        os.path.join(out_dir, "probe.json"),
        {
            "point": list(probe.point),
            "h_schedule": list(probe.h_schedule),
            "fractions": list(probe.fractions),
            "stderrs": list(probe.stderrs),
            "censored_fraction": probe.censored_fraction,
            "verdict": probe.verdict,
        },
    )
    _manifest(
        args, "probe-boundary", seed, threads, out_dir, t0, ["probe.csv", "probe.json"],
        {"verdict": probe.verdict, "n_paths": args.n_paths, "dt": cfg.dt},
    )
    return 0 if probe.verdict == "regular-evidence" else 1


def _cmd_certify(parser, args) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    _pin_threads(threads)
    from .boundary import certify_nice_point, construct_sphere_witness

    t0 = time.monotonic()
    model, domain, _, _ = _load(parser, args.model)
    domain = _require_domain(parser, domain, args)
    out_dir = _resolve_out_dir(args)
    point = np.asarray(_parse_floats(args.point))
    nu = np.asarray(_parse_floats(args.nu))
    try:
        witness = construct_sphere_witness(
            model, domain, point, nu, args.lam, args.beta_w
        )
    except ValueError as e:
        print("witness construction refused: %s" % e, file=sys.stderr)
        _write_json(
            os.path.join(out_dir, "certify.json"),
            {"point": point.tolist(), "valid": False, "error": str(e)},
        )
        _manifest(args, "certify", seed, threads, out_dir, t0, ["certify.json"], {"valid": False})
        return 1
    cert = certify_nice_point(model, domain, point, witness, args.radius, args.grid_n)
    for line in cert.lines():
        print(line)
    _write_json(
        os.path.join(out_dir, "certify.json"),
        {
            "point": list(cert.x_star),
            "witness": {
                "x_prime": list(witness.x_prime),
                "lam": witness.lam,
                "beta": witness.beta,
                "normal_form_value": witness.normal_form_value,
            },
            "radius": cert.radius,
            "grid_n": cert.grid_n,
            "w_at_x_star": cert.w_at_x_star,
            "min_w": cert.min_w,
            "max_generator": cert.max_generator,
            "n_grid": cert.n_grid,
            "valid": cert.valid,
            "note": cert.note,
        },
    )
    _manifest(args, "certify", seed, threads, out_dir, t0, ["certify.json"], {"valid": cert.valid})
    return 0 if cert.valid else 1


def _cmd_ergodic_certify(parser, args) -> int:
    t0 = time.monotonic()
    from .ergodic import certify_nonexplosive

    model, _, exhaustion, _ = _load(parser, args.model)
    out_dir = _resolve_out_dir(args)
    w = parse_poly(args.w, model.dim_state)
    cert = certify_nonexplosive(
        model, w, exhaustion, args.C, args.D, args.k_max, args.grid_n
    )
    for line in cert.lines():
        print(line)
    _write_json(
        os.path.join(out_dir, "lyapunov.json"),
        {
            "C": cert.C,
            "D": cert.D,
            "k_max": cert.k_max,
            "grid_n": cert.grid_n,
            "residual_max": list(cert.residual_max),
            "boundary_minima": list(cert.boundary_minima),
            "valid": cert.valid,
            "note": cert.note,
            "witness_point": list(cert.witness_point) if cert.witness_point else None,
        },
    )
    _manifest(args, "ergodic-certify", 0, 0, out_dir, t0, ["lyapunov.json"], {"valid": cert.valid})
    return 0 if cert.valid else 1


def _cmd_ergodic_cycles(parser, args, want_measure: bool = False) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    _pin_threads(threads)
    from .ergodic import CycleConfig, estimate_invariant_measure, run_cycles
    from .simulate import HistGrid, SimConfig

    t0 = time.monotonic()
    model, _, _, sim_defaults = _load(parser, args.model)
    out_dir = _resolve_out_dir(args)
    m = model.dim_state
    center = _parse_floats(args.center) if args.center else [0.0] * m
    cycle = CycleConfig(center=tuple(center), rho_in=args.rho_in, rho_out=args.rho_out)
    grid = None
    if args.grid:
        lo_s, hi_s, n_s = args.grid.split(";")
        grid = HistGrid(
            lo=tuple(_parse_floats(lo_s)),
            hi=tuple(_parse_floats(hi_s)),
            shape=tuple(int(v) for v in _parse_floats(n_s)),
        )
    if want_measure and grid is None:
        parser.error("invariant-measure needs --grid lo;hi;shape")
    cfg = _sim_config(parser, args, sim_defaults, seed, threads)
    try:
        samples = run_cycles(
            model,
            cycle,
            args.n_cycles,
            cfg,
            n_chains=args.n_chains,
            grid=grid,
            max_steps_per_cycle=args.max_steps_per_cycle,
        )
    except RuntimeError as e:
        print("cycle run failed: %s" % e, file=sys.stderr)
        return 3
    path = os.path.join(out_dir, "cycles.csv")
    with open(path, "w") as fh:
        fh.write(
            "chain,cycle,ok,duration," + ",".join("point_%d" % j for j in range(m)) + "\n"
        )
        for c in range(samples.n_chains):
            for k in range(samples.n_cycles):
                okv = int(samples.ok[c, k])
                fh.write(
                    "%d,%d,%d,%.17g,%s\n"
                    % (
                        c,
                        k,
                        okv,
                        samples.durations[c, k],
                        ",".join("%.17g" % v for v in samples.points[c, k]),
                    )
                )
    outputs = ["cycles.csv"]
    print(
        "cycles: %d completed of %d (censored %d)"
        % (samples.completed, samples.ok.size, samples.censored)
    )
    code = 0
    extra = {
        "n_cycles": args.n_cycles,
        "n_chains": args.n_chains,
        "completed": samples.completed,
        "dt": cfg.dt,
    }
    if want_measure:
        try:
            inv = estimate_invariant_measure(
                samples, burn_in=args.burn_in, min_cycles=args.min_cycles
            )
        except ValueError as e:
            print("invariant measure failed: %s" % e, file=sys.stderr)
            return 3
        mpath = os.path.join(out_dir, "invariant.csv")
        centers = grid.centers()
        with open(mpath, "w") as fh:
            fh.write(
                "cell," + ",".join("center_%d" % j for j in range(m))
                + ",mu,mu_tilde,stderr\n"
            )
            for idx in range(grid.n_cells):
                fh.write(
                    "%d,%s,%.17g,%.17g,%.17g\n"
                    % (
                        idx,
                        ",".join("%.17g" % c for c in centers[idx]),
                        inv.mu[idx],
                        inv.mu_tilde[idx],
                        inv.stderr[idx],
                    )
                )
        outputs.append("invariant.csv")
        extra["mean_cycle_duration"] = inv.mean_cycle_duration
        extra["n_cycles_used"] = inv.n_cycles_used
        print(
            "invariant measure over %d cells, mean cycle duration %.4f, %d cycles"
            % (grid.n_cells, inv.mean_cycle_duration, inv.n_cycles_used)
        )
    _manifest(
        args,
        "ergodic-invariant-measure" if want_measure else "ergodic-cycles",
        seed, threads, out_dir, t0, outputs, extra,
    )
    return code


def _cmd_ergodic_classify(parser, args) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    _pin_threads(threads)
    from .ergodic import classify_recurrence

    t0 = time.monotonic()
    model, _, _, sim_defaults = _load(parser, args.model)
    out_dir = _resolve_out_dir(args)
    cfg = _sim_config(parser, args, sim_defaults, seed, threads)
    center = _parse_floats(args.center)
    starts = [_parse_floats(s) for s in args.start]
    horizons = _parse_floats(args.horizons)
    report = classify_recurrence(
        model, center, args.radius, starts, horizons, args.n_paths, cfg
    )
    for line in report.lines():
        print(line)
    _write_json(
        os.path.join(out_dir, "classify.json"),
        {
            "center": list(report.center),
            "radius": report.radius,
            "starts": [list(s) for s in report.starts],
            "horizons": list(report.horizons),
            "hit_probs": report.hit_probs.tolist(),
            "cond_means": np.where(
                np.isfinite(report.cond_means), report.cond_means, -1.0
            ).tolist(),
            "per_start": list(report.per_start),
            "verdict": report.verdict,
        },
    )
    _manifest(
        args, "ergodic-classify", seed, threads, out_dir, t0, ["classify.json"],
        {"verdict": report.verdict, "n_paths": args.n_paths},
    )
    return 0 if report.verdict != "inconclusive" else 1


# ---------------------------------------------------------------------------
# parser assembly


def _add_common(p, sim: bool = True):
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--seed", type=int, default=None, help="RNG seed; generated and recorded if omitted")
    p.add_argument("--threads", type=int, default=None, help="thread count (0 = backend default; env SDEMC_THREADS)")
    p.add_argument("--out-dir", default=None, help="output directory (env SDEMC_OUT_DIR; default .)")
    if sim:
        p.add_argument("--dt", type=float, default=None, help="Euler step")
        p.add_argument("--horizon", type=float, default=None, help="censoring horizon")
        p.add_argument("--domain", default=None, help="override domain: box:lo;hi | ball:c,r | outside_ball:c,r")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sdemc",
        description="Monte Carlo toolkit for stopped and ergodic diffusions",
    )
    ap.add_argument("--version", action="version", version="sdemc %s" % __version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-hormander", help="bracket spanning check at points")
    _add_common(p, sim=False)
    p.add_argument(
        "--point", action="append", default=None,
        help="comma-separated coordinates; repeatable (default origin)",
    )
    p.add_argument("--depth", type=int, default=3)
    p.add_argument(
        "--mode", choices=("parabolic", "full"), default="parabolic",
        help="parabolic keeps the drift out of the spanning set",
    )
    p.set_defaults(func=_cmd_check_hormander)

    p = sub.add_parser("simulate", help="batch of stopped paths to exits.csv")
    _add_common(p)
    p.add_argument("--x0", required=True, help="start point, comma-separated")
    p.add_argument("--n-paths", type=int, required=True)
    p.add_argument("--stop-mode", choices=("exit", "closure"), default="exit")
    p.add_argument("--no-bridge", action="store_true", help="disable the sub-step exit correction")
    p.add_argument("--store-paths", action="store_true")
    p.add_argument("--path-stride", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("solve", help="stopped-functional value at points")
    _add_common(p)
    p.add_argument("--x0", action="append", default=[], help="start point; repeatable")
    p.add_argument(
        "--points-file", default=None, help="CSV of start points, one row per point"
    )
    p.add_argument("--f", default="none", help="running cost polynomial, or 'none'")
    p.add_argument("--g", default="none", help="boundary payoff polynomial, or 'none'")
    p.add_argument("--n-paths", type=int, required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("survival", help="survival curve P(tau > t)")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--times", required=True, help="comma-separated evaluation times")
    p.add_argument("--n-paths", type=int, required=True)
    p.set_defaults(func=_cmd_survival)

    p = sub.add_parser("green", help="discounted running-cost functional")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--beta", type=float, required=True, help="discount rate; must be > 0")
    p.add_argument("--f", default="none")
    p.add_argument("--grid", default=None, help="occupation grid lo;hi;shape (comma-separated per part)")
    p.add_argument("--n-paths", type=int, required=True)
    p.set_defaults(func=_cmd_green)

    p = sub.add_parser("probe-boundary", help="regularity probe at a boundary point")
    _add_common(p)
    p.add_argument("--point", required=True)
    p.add_argument("--h-schedule", required=True, help="comma-separated horizons")
    p.add_argument("--n-paths", type=int, required=True)
    p.set_defaults(func=_cmd_probe_boundary)

    p = sub.add_parser("certify", help="sphere-barrier certificate at a boundary point")
    _add_common(p, sim=False)
    p.add_argument("--domain", default=None, help="override domain (see simulate)")
    p.add_argument("--point", required=True)
    p.add_argument("--nu", required=True, help="unit outward normal, comma-separated")
    p.add_argument("--lam", type=float, default=0.1, help="exterior sphere radius")
    p.add_argument("--beta-w", type=float, default=200.0, help="barrier sharpness")
    p.add_argument("--radius", type=float, default=0.05, help="certificate neighborhood radius")
    p.add_argument("--grid-n", type=int, default=12)
    p.set_defaults(func=_cmd_certify)

    erg = sub.add_parser("ergodic", help="long-run tools")
    esub = erg.add_subparsers(dest="ergodic_command", required=True)

    p = esub.add_parser("certify", help="polynomial Lyapunov certificate")
    _add_common(p, sim=False)
    p.add_argument("--w", required=True, help="Lyapunov polynomial literal")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--D", type=float, default=1.0)
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--grid-n", type=int, default=33)
    p.set_defaults(func=_cmd_ergodic_certify)

    p = esub.add_parser("cycles", help="sphere-to-sphere cycle records")
    _add_common(p)
    p.add_argument("--center", default=None)
    p.add_argument("--rho-in", type=float, required=True)
    p.add_argument("--rho-out", type=float, required=True)
    p.add_argument("--n-cycles", type=int, required=True)
    p.add_argument("--n-chains", type=int, default=4)
    p.add_argument("--grid", default=None, help="occupation grid lo;hi;shape")
    p.add_argument("--max-steps-per-cycle", type=int, default=None)
    p.set_defaults(func=lambda parser, a: _cmd_ergodic_cycles(parser, a, want_measure=False))

    p = esub.add_parser("invariant-measure", help="normalized occupation from cycles")
    _add_common(p)
    p.add_argument("--center", default=None)
    p.add_argument("--rho-in", type=float, required=True)
    p.add_argument("--rho-out", type=float, required=True)
    p.add_argument("--n-cycles", type=int, required=True)
    p.add_argument("--n-chains", type=int, default=4)
    p.add_argument("--grid", required=True, help="occupation grid lo;hi;shape")
    p.add_argument("--max-steps-per-cycle", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--min-cycles", type=int, default=100)
    p.set_defaults(func=lambda parser, a: _cmd_ergodic_cycles(parser, a, want_measure=True))

    p = esub.add_parser("classify", help="recurrence trichotomy probe")
    _add_common(p)
    p.add_argument("--center", required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--start", action="append", required=True, help="start point; repeatable")
    p.add_argument("--horizons", required=True)
    p.add_argument("--n-paths", type=int, required=True)
    p.set_defaults(func=_cmd_ergodic_classify)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    return args.func(ap, args)


if __name__ == "__main__":
    sys.exit(main())
