"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import json
import math
import sys
import time

import numpy as np
import pytest

from kwlab.cli import main as cli_main
from kwlab.design import PrescribedMotion, required_force, verify_design
from kwlab.integrate import integrate
from kwlab.model import (Harmonic, Params, State, Zero, critical_points, full_field,
                         newton_form_field, state_transform)
from kwlab.orbits import (ASYMPTOTICALLY_STABLE, ELLIPTIC, HYPERBOLIC, averaging_sweep,
                          basin_probe, find_periodic, linearised_upright_multipliers,
                          seeded_full_orbit)
from kwlab.sections import find_map_fixed_points

STABLE_SETS = [  # (k, omega, A, c, mu)
    (10, 10, 1.0, 10.0, 1.0),
    (10, 10, 1.0, 1.0, 1.0),
    (10, 10, 20.0, 20.0, 1.0),
    (10, 15, 100.0, 0.0, 1.0),
    (10, 2, 1.0, 0.0, 1.0),
    (10, 4, 4.0, 0.0, 1.0),
]
ISLAND_SEEDS = [(3.14, -0.16), (3.15, 1.61)]


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}  {detail}")
        assert ok, f"criterion {number} failed: {detail}"
    return _report


@pytest.fixture(scope="module")
def stable_orbits():
    out = []
    for k, omega, A, c, mu in STABLE_SETS:
        params = Params(mu=mu, k=k, omega=omega, a=1.0)
        t0 = time.perf_counter()
        avg, full = seeded_full_orbit(params, Harmonic(c, A))
        out.append((params, avg, full, time.perf_counter() - t0))
    return out


@pytest.fixture(scope="module")
def island_orbits():
    params = Params(mu=0.0, k=10, omega=4, a=1.0)
    return find_map_fixed_points(ISLAND_SEEDS, params, Harmonic(0.0, 1.0))


def test_criterion_01_stable_forced_orbits(report, stable_orbits):
    bad = []
    for (params, _, full, secs), row in zip(stable_orbits, STABLE_SETS):
        ok = (full.residual < 1e-10 and np.all(np.abs(full.multipliers) < 1) and full.no_fall
              and secs < 30)
        if not ok:
            bad.append((row, full.residual, full.max_modulus, full.no_fall, secs))
    worst = max(f.max_modulus for _, _, f, _ in stable_orbits)
    slowest = max(s for *_, s in stable_orbits)
    report(1, "six forced sets converge, stable, no fall", not bad,
           f"max|lambda|={worst:.3f} slowest={slowest:.1f}s {bad or ''}")


def test_criterion_02_liouville(report, stable_orbits, island_orbits):
    target = math.exp(-2 * math.pi)
    rel = max(abs(np.prod(o.multipliers).real - target) / target
              for _, avg, full, _ in stable_orbits for o in (avg, full))
    det0 = max(abs(np.linalg.det(o.monodromy) - 1) for o in island_orbits.orbits)
    ok = rel < 1e-6 and det0 < 1e-6 and len(island_orbits.orbits) == 2
    report(2, "multiplier product e^{-2 pi} (mu=1), det M = 1 (mu=0)", ok,
           f"rel={rel:.2e} |detM-1|={det0:.2e}")


def test_criterion_03_frictionless_fixed_points(report, island_orbits):
    ok = len(island_orbits.orbits) == 2 and not island_orbits.failures
    details = []
    for seed in ISLAND_SEEDS:
        near = [o for o in island_orbits.orbits
                if math.hypot(o.fixed_point[0] - seed[0], o.fixed_point[1] - seed[1]) < 0.05]
        if len(near) != 1:
            ok = False
            continue
        o = near[0]
        z = o.multipliers
        unit = np.all(np.abs(np.abs(z) - 1) < 1e-4) and abs(z[0] - np.conj(z[1])) < 1e-4
        ok &= o.stability == ELLIPTIC and o.no_fall and bool(unit) and abs(z[0].imag) > 0
        details.append(f"({o.fixed_point[0]:.4f},{o.fixed_point[1]:.4f})")
    report(3, "frictionless elliptic fixed points near the seeds", ok, " ".join(details))


def test_criterion_04_critical_points(report):
    lo, hi, one = critical_points(1e-8), critical_points(1e8), critical_points(1.0)
    checks = [
        abs(lo.qmin1 - math.pi / 2) < 1e-4,
        abs(hi.qmin1 - math.pi / 4) < 1e-4,
        abs(hi.qmax1 - 7 * math.pi / 4) < 1e-4,
        abs(one.qmax2 - math.pi) < 1e-12 and abs(one.qmin2 - math.pi) < 1e-12,
        abs(hi.qmin2 - 5 * math.pi / 4) < 1e-4,
        abs(hi.qmax2 - 3 * math.pi / 4) < 1e-4,
    ]
    report(4, "critical-point limits", all(checks), f"checks={checks}")


def test_criterion_05_formulation_equivalence(report):
    params, force = Params(mu=1.0, k=10, omega=10, a=1.0), Harmonic(10.0, 1.0)
    x0, v0 = math.pi, 0.0
    a = integrate(newton_form_field(params, force), State(x0, v0), params.T)
    b = integrate(full_field(params, force), state_transform(x0, v0, 0.0, params), params.T)
    ts = np.unique(np.concatenate((np.linspace(0, params.T, 10_001), a.traj.t)))
    diff = float(np.max(np.abs(a.traj(ts)[:, 0] - b.traj(ts)[:, 0])))
    report(5, "second-order form vs momentum form", diff < 1e-6, f"sup|dq|={diff:.2e}")


def test_criterion_06_averaging_convergence(report):
    template, force = Params(mu=1.0, k=10, omega=10, a=1.0), Harmonic(10.0, 1.0)
    _, pts = averaging_sweep([10, 20, 40, 80], template, force)
    d = [p.distance for p in pts]
    ok = all(np.isfinite(d)) and all(x > y for x, y in zip(d, d[1:])) and d[-1] < d[0] / 4
    report(6, "full-vs-averaged distance decreases in k", ok,
           "d=" + ",".join(f"{x:.3e}" for x in d))


def test_criterion_07_kapitza(report):
    results = {}
    for omega, Phi in ((2, 2.0), (1, 0.5)):
        params = Params(mu=0.1, k=10, omega=omega, a=1.0)
        assert params.Phi == Phi
        orb = find_periodic((math.pi, 0.0), params.T, "averaged", params, Zero())
        pred = np.sort(np.abs(linearised_upright_multipliers(0.1, Phi)))
        err = float(np.max(np.abs(np.sort(np.abs(orb.multipliers)) - pred)))
        results[Phi] = (orb.stability, err)
    ok = (results[2.0][0] == ASYMPTOTICALLY_STABLE and results[0.5][0] == HYPERBOLIC
          and max(e for _, e in results.values()) < 1e-4)
    report(7, "averaged upright equilibrium: stable iff Phi > 1", ok, str(results))


def test_criterion_08_inverse_design(report):
    rows, ok = [], True
    for k, A in ((10, 1.0), (100, 1.5), (10, 0.5)):
        params = Params(mu=1.0, k=k, omega=3, a=1.0)
        motion = PrescribedMotion.canonical(A)
        v = verify_design(motion, required_force(motion, params), params)
        ok &= v.sup_error < 1e-6 and v.orbit.stability == ASYMPTOTICALLY_STABLE and v.orbit.no_fall
        rows.append(f"k={k},A={A}:err={v.sup_error:.1e}")
    zero = required_force(PrescribedMotion.canonical(0.0), Params(mu=1.0, k=10, omega=3))
    ok &= bool(np.all(zero.h == 0.0))
    report(8, "designed forces realise the prescribed motions", ok, " ".join(rows))


def test_criterion_09_theorem_margins(report, tmp_path, capsys):
    def check(force):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"mu": 1.0, "k": 10, "omega": 10, "force": force}))
        assert cli_main(["check", "--config", str(path)]) == 0
        return json.loads(capsys.readouterr().out)["theorem1"]

    harmonic = [check({"type": "harmonic", "c": c, "A": A})
                for c, A in ((10, 1), (0, 100), (-3.5, 0.25), (20, 20))]
    const = check({"type": "constant", "value": 2.0})
    ok = all(h["satisfied"] and h["margin"] == 1.0 for h in harmonic) and not const["satisfied"]
    report(9, "no-fall margin 1 for harmonic, violated for h = 2", ok,
           f"const margin={const['margin']}")


def test_criterion_10_basin_probe(report, stable_orbits):
    params, _, full, _ = stable_orbits[0]
    probe = basin_probe((math.pi, 0.0), 200, full, params, Harmonic(10.0, 1.0))
    ok = probe.converged and abs(probe.decay_ratio - full.max_modulus) < 0.1
    report(10, "basin probe from (pi, 0) converges geometrically", ok,
           f"periods={probe.distances.size} ratio={probe.decay_ratio:.4f} max|lambda|={full.max_modulus:.4f}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
