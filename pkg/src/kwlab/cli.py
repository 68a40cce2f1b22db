"""``kwlab`` command line: simulate, find-orbit, section, check, design, sweep-k.

Exit codes: 0 ok, 2 configuration, 3 integration, 4 Newton, 5 precondition.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from contextlib import contextmanager
from dataclasses import asdict, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import SCHEMA_VERSION, ConfigError, RunConfig, describe, finite_or_none, load_config
from .design import PreconditionError, PrescribedMotion, required_force, verify_design
from .integrate import IntegrationError, integrate
from .model import (State, apriori_bound, check_theorem1, check_theorem2, critical_points,
                    field_for, inverse_state_transform)
from .orbits import (DegenerateJacobianError, NewtonConvergenceError, OrbitResult, ShootingError,
                     averaging_sweep, find_periodic)
from .sections import SectionJob, generate_section

EXIT_OK, EXIT_CONFIG, EXIT_INTEGRATION, EXIT_NEWTON, EXIT_PRECONDITION = 0, 2, 3, 4, 5


class UsageError(ValueError):
    """Bad flag value; reported like a configuration error."""


# ---------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


@contextmanager
def _sink(path: Optional[str]):
    if path is None:
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _header(fh, command: str, cfg: RunConfig, extra: Optional[dict] = None):
    fh.write(f"# kwlab {command}\n# schema_version: {SCHEMA_VERSION}\n")
    fh.write(f"# config: {json.dumps(describe(cfg), sort_keys=True)}\n")
    fh.write(f"# integrator: {json.dumps(_clean(asdict(cfg.integrator)), sort_keys=True)}\n")
    for key, value in (extra or {}).items():
        fh.write(f"# {key}: {value}\n")


def _row(fh, values):
    fh.write(",".join(fmt(v) for v in values) + "\n")


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return finite_or_none(obj)
    return obj


def _write_json(path: Optional[str], command: str, cfg: Optional[RunConfig], payload: dict):
    doc = {"schema_version": SCHEMA_VERSION, "command": command}
    if cfg is not None:
        doc["config"] = describe(cfg)
    doc.update(payload)
    with _sink(path) as fh:
        json.dump(_clean(doc), fh, indent=2, allow_nan=False)
        fh.write("\n")


def _gnuplot(path: Optional[str], script: str):
    if path is not None:
        Path(path + ".gp").write_text(script)


def orbit_record(orbit: OrbitResult) -> dict:
    return {
        "system": orbit.system,
        "fixed_point": list(orbit.fixed_point),
        "residual": orbit.residual,
        "monodromy": orbit.monodromy.ravel().tolist(),
        "multipliers": [{"re": float(z.real), "im": float(z.imag)} for z in orbit.multipliers],
        "stability": orbit.stability,
        "q_range": list(orbit.q_range),
        "no_fall": orbit.no_fall,
        "iterations": orbit.iterations,
        "period": orbit.period,
    }


def theorem_record(cfg: RunConfig) -> dict:
    t1 = check_theorem1(cfg.force, cfg.params)
    t2 = check_theorem2(cfg.force, cfg.params)
    return {"theorem1": {"satisfied": t1.satisfied, "margin": t1.margin},
            "theorem2": {"verdict": t2.verdict, "applicable": t2.applicable,
                         "satisfied": t2.satisfied, "margins": list(t2.margins)}}


# ---------------------------------------------------------------------------
# flag parsing


def _floats(text: str, n: int, flag: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{flag} expects {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{flag} expects {n} finite comma-separated numbers, got {text!r}")
    return tuple(vals)


def _grid(text: str):
    parts = text.lower().split("x")
    try:
        nq, np_ = (int(v) for v in parts)
    except ValueError:
        raise UsageError(f"--grid expects NQxNP, got {text!r}") from None
    return nq, np_


def _ints(text: str, flag: str):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}") from None


def _with_tolerances(cfg: RunConfig, args) -> RunConfig:
    changes = {k: getattr(args, k) for k in ("rtol", "atol") if getattr(args, k) is not None}
    if not changes:
        return cfg
    try:
        return replace(cfg, integrator=replace(cfg.integrator, **changes))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: RunConfig, args) -> int:
    opts = cfg.section("simulate")
    params = cfg.params
    t_end = args.t_end if args.t_end is not None else opts.get("t_end", 10 * params.T)
    dt = args.dt if args.dt is not None else opts.get("dt", 0.01)
    q0, p0 = (_floats(args.initial, 2, "--initial") if args.initial
              else tuple(opts.get("initial", (math.pi, 0.0))))
    if not (t_end > 0 and dt > 0 and math.isfinite(t_end) and math.isfinite(dt)):
        raise UsageError("--t-end and --dt must be positive")
    rhs = field_for(args.system, params, cfg.force)
    n_out = int(math.floor(t_end / dt + 1e-9))
    times = np.append(np.arange(n_out + 1) * dt, t_end) if n_out * dt < t_end else np.arange(n_out + 1) * dt

    def emit(fh, traj, ts):
        if ts.size == 0:
            return
        y = traj(ts)
        x, xdot = inverse_state_transform(State(y[:, 0], y[:, 1], ts), params)
        for row in zip(ts, y[:, 0], y[:, 1], x, xdot):
            _row(fh, row)

    with _sink(args.out) as fh:
        _header(fh, "simulate", cfg, {"system": args.system, "initial": f"{fmt(q0)},{fmt(p0)}"})
        fh.write("t,q,p,x,xdot\n")
        state, seg = State(q0, p0, 0.0), 0
        while state.t < t_end:
            t1 = min((seg + 1) * params.T, t_end)
            lo, hi = np.searchsorted(times, [state.t, t1], side="left")
            if t1 == t_end:
                hi = times.size
            try:
                res = integrate(rhs, state, t1, cfg.integrator)
            except IntegrationError as exc:
                if exc.trajectory is not None:
                    block = times[lo:hi]
                    emit(fh, exc.trajectory, block[block <= exc.trajectory.t1])
                fh.write(f"# integration failed at t={fmt(exc.t if exc.t is not None else state.t)}: {exc}\n")
                fh.flush()
                print(f"kwlab simulate: {exc}", file=sys.stderr)
                return EXIT_INTEGRATION
            emit(fh, res.traj, times[lo:hi])
            y = res.traj.y[-1]
            state, seg = State(float(y[0]), float(y[1]), t1), seg + 1
    _gnuplot(args.out, _GP_SIMULATE.format(path=args.out))
    return EXIT_OK


def _orbit_guess(cfg, args):
    opts = cfg.section("orbit")
    if args.guess:
        return _floats(args.guess, 2, "--guess")
    return tuple(opts.get("guess", (math.pi, 0.0)))


def cmd_find_orbit(cfg: RunConfig, args) -> int:
    opts = cfg.section("orbit")
    system = args.system or opts.get("system", "full")
    seed_avg = args.seed_from_averaged or opts.get("seed_from_averaged", False)
    guess = _orbit_guess(cfg, args)
    kw = dict(newton=cfg.newton, thresholds=cfg.stability)
    payload = {"guess": list(guess)}
    try:
        if seed_avg and system == "full":
            avg = find_periodic(guess, cfg.params.T, "averaged", cfg.params, cfg.force,
                                cfg.integrator, **kw)
            payload["averaged_seed"] = orbit_record(avg)
            guess = avg.fixed_point
        orbit = find_periodic(guess, cfg.params.T, system, cfg.params, cfg.force,
                              cfg.integrator, **kw)
    except NewtonConvergenceError as exc:
        payload["error"] = str(exc)
        payload["best"] = None if exc.best is None else list(exc.best)
        payload["residual"] = exc.residual
        _write_json(args.out, "find-orbit", cfg, payload)
        print(f"kwlab find-orbit: {exc}", file=sys.stderr)
        return EXIT_NEWTON
    except DegenerateJacobianError as exc:
        payload["error"] = str(exc)
        payload["best"] = None if exc.point is None else list(exc.point)
        _write_json(args.out, "find-orbit", cfg, payload)
        print(f"kwlab find-orbit: {exc}", file=sys.stderr)
        return EXIT_NEWTON
    payload.update(orbit_record(orbit))
    payload.update(theorem_record(cfg))
    _write_json(args.out, "find-orbit", cfg, payload)
    return EXIT_OK


def cmd_section(cfg: RunConfig, args) -> int:
    opts = cfg.section("section")
    iters = args.iters if args.iters is not None else opts.get("iterations", 500)
    grid = _grid(args.grid) if args.grid else tuple(opts.get("grid", (101, 101)))
    q_range = (_floats(args.q_range, 2, "--q-range") if args.q_range
               else tuple(opts.get("q_range", (0.5 * math.pi, 1.5 * math.pi))))
    p_range = (_floats(args.p_range, 2, "--p-range") if args.p_range
               else tuple(opts.get("p_range", (-2.0, 2.0))))
    try:
        job = SectionJob(cfg.params, cfg.force, q_range, p_range, grid, iters)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cloud = generate_section(job, cfg.integrator)
    with _sink(args.out) as fh:
        _header(fh, "section", cfg, {
            "grid": f"{grid[0]}x{grid[1]}", "iterations": iters,
            "q_range": ",".join(map(fmt, q_range)), "p_range": ",".join(map(fmt, p_range)),
            "escaped_seeds": int(cloud.escaped.sum())})
        fh.write("seed_id,iter,q,p\n")
        for sid, it, q, p in cloud.points:
            _row(fh, (int(sid), int(it), q, p))
    _gnuplot(args.out, _GP_SECTION.format(path=args.out))
    return EXIT_OK


def cmd_check(cfg: RunConfig, args) -> int:
    Phi = cfg.params.Phi
    payload = {"Phi": Phi}
    if Phi > 0:
        cp = critical_points(Phi)
        payload["critical_points"] = {
            "qmin1": cp.qmin1, "qmax1": cp.qmax1, "qmax2": cp.qmax2, "qmin2": cp.qmin2,
            "lambda1": cp.lambda1, "lambda2": cp.lambda2, "degenerate": cp.degenerate}
    else:
        payload["critical_points"] = None
    payload.update(theorem_record(cfg))
    try:
        payload["apriori_bound"] = apriori_bound(cfg.params, cfg.force)
    except ValueError as exc:
        payload["apriori_bound"] = None
        payload["apriori_bound_note"] = str(exc)
    _write_json(args.out, "check", cfg, payload)
    return EXIT_OK


def cmd_design(cfg: RunConfig, args) -> int:
    opts = cfg.section("design")
    A = args.amplitude if args.amplitude is not None else opts.get("amplitude")
    if A is None:
        raise UsageError("design needs --amplitude (or design.amplitude in the config)")
    n = args.n_samples if args.n_samples is not None else opts.get("n_samples", 1024)
    if n < 3:
        raise UsageError("--n-samples must be at least 3")
    try:
        motion = PrescribedMotion.canonical(A)
        force = required_force(motion, cfg.params, n)
    except PreconditionError as exc:
        print(f"kwlab design: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    family = {"family": motion.family, "offset": math.pi, "amplitude": A}
    with open(args.out, "w", newline="") as fh:
        _header(fh, "design", cfg, {"motion": f"{motion.family} with A={fmt(A)}",
                                    "offset": fmt(math.pi)})
        fh.write("t,h\n")
        for row in zip(force.t, force.h):
            _row(fh, row)
    _gnuplot(args.out, _GP_DESIGN.format(path=args.out))
    verify_path = args.verify_out or str(Path(args.out).with_suffix(".verify.json"))
    try:
        ver = verify_design(motion, force, cfg.params, cfg.integrator)
    except NewtonConvergenceError as exc:
        _write_json(verify_path, "design", cfg, {"motion": family, "error": str(exc),
                                                 "best": None if exc.best is None else list(exc.best)})
        print(f"kwlab design: {exc}", file=sys.stderr)
        return EXIT_NEWTON
    except ShootingError as exc:
        _write_json(verify_path, "design", cfg, {"motion": family, "error": str(exc)})
        print(f"kwlab design: {exc}", file=sys.stderr)
        return EXIT_NEWTON
    _write_json(verify_path, "design", cfg, {"motion": family, "sup_error": ver.sup_error,
                                            "orbit": orbit_record(ver.orbit)})
    return EXIT_OK


def cmd_sweep_k(cfg: RunConfig, args) -> int:
    opts = cfg.section("sweep_k")
    ks = _ints(args.k_values, "--k-values") if args.k_values else opts.get("k_values", [10, 20, 40, 80])
    guess = _orbit_guess(cfg, args)
    try:
        avg, points = averaging_sweep(ks, cfg.params, cfg.force, cfg.integrator, guess)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    except ShootingError as exc:
        print(f"kwlab sweep-k: averaged orbit not found: {exc}", file=sys.stderr)
        return EXIT_NEWTON
    with _sink(args.out) as fh:
        _header(fh, "sweep-k", cfg, {"averaged_fixed_point": ",".join(map(fmt, avg.fixed_point))})
        fh.write("k,distance,residual,max_modulus,no_fall\n")
        for pt in points:
            if pt.orbit is None:
                _row(fh, (pt.k, math.nan, math.nan, math.nan, 0))
                fh.write(f"# k={pt.k} failed: {pt.error}\n")
            else:
                _row(fh, (pt.k, pt.distance, pt.orbit.residual, pt.orbit.max_modulus,
                          int(pt.orbit.no_fall)))
    _gnuplot(args.out, _GP_SWEEP.format(path=args.out))
    return EXIT_OK


_GP_SIMULATE = """set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set xlabel 't'
set ylabel 'q'
plot '{path}' using 1:2 with lines title 'q(t)'
"""
_GP_SECTION = """set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set xlabel 'q'
set ylabel 'p'
plot '{path}' using 3:4 with dots notitle
"""
_GP_DESIGN = """set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set xlabel 't'
set ylabel 'h'
plot '{path}' using 1:2 with lines title 'h(t)'
"""
_GP_SWEEP = """set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set logscale xy
set xlabel 'k'
set ylabel 'sup distance'
plot '{path}' using 1:2 with linespoints title 'full vs averaged'
"""


# ---------------------------------------------------------------------------
# argument parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kwlab", description="Periodic motions of a vibrating-pivot pendulum under a horizontal force.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output path (stdout if omitted)")
        p.add_argument("--rtol", type=float, help="relative tolerance override")
        p.add_argument("--atol", type=float, help="absolute tolerance override")
        return p

    p = add("simulate", "integrate one trajectory and write t,q,p,x,xdot")
    p.add_argument("--system", choices=("full", "averaged"), default="full")
    p.add_argument("--t-end", type=float, help="final time (default 10 T)")
    p.add_argument("--dt", type=float, help="output sampling interval (default 0.01)")
    p.add_argument("--initial", metavar="Q,P", help="initial state (default pi,0); write --initial=Q,P when Q is negative")

    p = add("find-orbit", "locate a periodic orbit and report Floquet data")
    p.add_argument("--system", choices=("full", "averaged"))
    p.add_argument("--guess", metavar="Q,P", help="Newton starting point (default pi,0); write --guess=Q,P when Q is negative")
    p.add_argument("--seed-from-averaged", action="store_true",
                   help="seed the full-system search from the averaged orbit")

    p = add("section", "stroboscopic section over a seed grid")
    p.add_argument("--grid", metavar="NQxNP", help="seed grid (default 101x101)")
    p.add_argument("--iters", type=int, help="iterations per seed (default 500)")
    p.add_argument("--q-range", metavar="LO,HI", help="q interval (default pi/2,3pi/2)")
    p.add_argument("--p-range", metavar="LO,HI", help="p interval (default -2,2); write --p-range=LO,HI when LO is negative")

    add("check", "hypothesis checks, critical points and the a-priori bound")

    p = add("design", "force realising q = pi + A sin t, plus verification")
    p.set_defaults(out_required=True)
    p.add_argument("--amplitude", type=float, metavar="A", help="motion amplitude")
    p.add_argument("--n-samples", type=int, help="force samples per period (default 1024)")
    p.add_argument("--verify-out", help="verification JSON path (default: --out with its suffix replaced by .verify.json)")

    p = add("sweep-k", "distance between full and averaged orbits as k grows")
    p.add_argument("--k-values", metavar="K1,K2,...", help="increasing k values (default 10,20,40,80)")
    p.add_argument("--guess", metavar="Q,P", help="averaged-orbit starting point (default pi,0)")
    return parser


COMMANDS = {"simulate": cmd_simulate, "find-orbit": cmd_find_orbit, "section": cmd_section,
            "check": cmd_check, "design": cmd_design, "sweep-k": cmd_sweep_k}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "out_required", False) and not args.out:
        parser.error(f"{args.command} requires --out")
    try:
        cfg = _with_tolerances(load_config(args.config), args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"kwlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"kwlab {args.command}: integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except PreconditionError as exc:
        print(f"kwlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
