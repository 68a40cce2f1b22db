import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kwlab.integrate import IntegratorConfig, flow_map, integrate
from kwlab.model import (Harmonic, Params, State, Zero, field_for, full_field,
                         newton_form_field, state_transform)
from kwlab.orbits import (ASYMPTOTICALLY_STABLE, DEGENERATE, ELLIPTIC, HYPERBOLIC,
                          DegenerateJacobianError, NewtonConvergenceError, NewtonOptions,
                          OrbitResult, StabilityThresholds, averaging_sweep, basin_probe,
                          classify, find_periodic, linearised_upright_multipliers, monodromy,
                          monodromy_fd, no_fall_certificate, seeded_full_orbit)


@pytest.fixture(scope="module")
def damped_orbits(damped):
    params, force = damped
    return seeded_full_orbit(params, force)


def test_equilibrium_of_zero_force():
    params = Params(mu=1.0, k=10, omega=10)
    orb = find_periodic((math.pi, 0.0), params.T, "full", params, Zero())
    assert orb.fixed_point == (math.pi, 0.0)
    assert orb.residual < 1e-12
    assert no_fall_certificate(orb, params, Zero())


def test_averaged_orbit_damped_forced(damped, damped_orbits):
    avg, full = damped_orbits
    assert avg.system == "averaged" and avg.residual < 1e-10 and avg.no_fall
    assert full.stability == ASYMPTOTICALLY_STABLE and full.no_fall
    # the full orbit shadows the averaged one for k = 10
    assert abs(full.fixed_point[0] - avg.fixed_point[0]) < 0.05


def test_orbit_result_invariants(damped, damped_orbits):
    params, force = damped
    for orb in damped_orbits:
        assert np.prod(orb.multipliers).real == pytest.approx(np.linalg.det(orb.monodromy), abs=1e-10)
        lo, hi = orb.q_range
        assert orb.no_fall == (math.pi / 2 < lo and hi < 3 * math.pi / 2)
        # period-map consistency
        s = flow_map(field_for(orb.system, params, force), orb.state, orb.period)
        assert math.hypot(s.q - orb.fixed_point[0], s.p - orb.fixed_point[1]) < max(10 * orb.residual, 1e-12)


@pytest.mark.parametrize("mu", [1.0, 0.0])
def test_abel_liouville(mu):
    params = Params(mu=mu, k=10, omega=10)
    M = monodromy(State(3.0, 0.2), params.T, params, Harmonic(10.0, 1.0))
    assert np.linalg.det(M) == pytest.approx(math.exp(-mu * params.T), rel=1e-6)


def test_monodromy_against_finite_differences(damped):
    params, force = damped
    s = State(3.0, 0.1)
    np.testing.assert_allclose(monodromy(s, params.T, params, force),
                               monodromy_fd(s, params.T, params, force), atol=1e-4)


def test_falling_pseudo_orbit_is_not_certified():
    params = Params(mu=1.0, k=10, omega=10)
    fake = OrbitResult((math.pi / 2 + 0.01, -5.0), 0.0, np.eye(2), np.ones(2), DEGENERATE,
                       (0.0, 0.0), True, "full")
    assert not no_fall_certificate(fake, params, Harmonic(10.0, 1.0))


def test_classification_bands():
    assert classify(np.array([0.5, 0.2]), 1.0) == ASYMPTOTICALLY_STABLE
    z = np.exp(1j * 0.7)
    assert classify(np.array([z, z.conjugate()]), 0.0) == ELLIPTIC
    assert classify(np.array([z, z.conjugate()]), 0.1) == DEGENERATE
    assert classify(np.array([3.0, 1 / 3]), 0.0) == HYPERBOLIC
    assert classify(np.array([1.0 - 1e-9, 0.5]), 1.0) == DEGENERATE
    loose = StabilityThresholds(inner=1e-6)
    assert classify(np.array([1.0 - 1e-7, 0.5]), 1.0, loose) == DEGENERATE


def test_newton_failure_reports_best_iterate(damped):
    params, force = damped
    with pytest.raises(NewtonConvergenceError) as err:
        find_periodic((2.5, 1.0), params.T, "full", params, force, newton=NewtonOptions(max_iter=1))
    assert err.value.best is not None and err.value.iterations == 1
    assert np.isfinite(err.value.residual)


def test_degenerate_jacobian_for_harmonic_oscillation():
    # the unforced pendulum: near-identity period map around the hanging position
    params = Params(mu=0.0, k=1, omega=1, a=0.0)
    with pytest.raises(DegenerateJacobianError):
        find_periodic((0.3, 0.0), params.T, "full", params, Zero())


def test_guess_must_be_finite(damped):
    params, force = damped
    with pytest.raises(ValueError):
        find_periodic((math.nan, 0.0), params.T, "full", params, force)


def test_basin_probe_from_fixed_point(damped, damped_orbits):
    params, force = damped
    full = damped_orbits[1]
    probe = basin_probe(full.fixed_point, 5, full, params, force)
    assert np.all(probe.distances < 1e-9) and probe.converged


def test_basin_probe_reports_escape(damped, damped_orbits):
    params, force = damped
    probe = basin_probe((math.pi / 2 + 0.01, -5.0), 3, damped_orbits[1], params, force)
    assert probe.escaped and not probe.converged


def test_newton_form_equivalence(damped):
    params, force = damped
    x0, v0 = 3.0, 0.3
    s0 = state_transform(x0, v0, 0.0, params)
    a = integrate(full_field(params, force), s0, params.T)
    b = integrate(newton_form_field(params, force), State(x0, v0), params.T)
    ts = np.linspace(0, params.T, 2000)
    assert np.abs(a.traj(ts)[:, 0] - b.traj(ts)[:, 0]).max() < 1e-6


def test_sweep_without_vibration_is_trivial():
    template = Params(mu=1.0, k=10, omega=10, a=0.0)
    _, pts = averaging_sweep([10, 20], template, Harmonic(0.5, 0.2))
    assert all(p.distance < 1e-8 for p in pts)


def test_sweep_rejects_unsorted_k(damped):
    params, force = damped
    with pytest.raises(ValueError):
        averaging_sweep([20, 10], params, force)


@pytest.mark.parametrize("Phi", [2.0, 0.5, 1.5])
def test_linearised_multipliers(Phi):
    lam = linearised_upright_multipliers(0.1, Phi)
    # e'' + 0.1 e' + (Phi - 1) e = 0: product of multipliers is e^{-0.1 T}
    assert np.prod(lam).real == pytest.approx(math.exp(-0.2 * math.pi), rel=1e-12)
    assert (np.abs(lam).max() < 1) == (Phi > 1)


def test_tight_tolerance_improves_residual(damped, damped_orbits):
    params, force = damped
    full = damped_orbits[1]
    tight = find_periodic(full.fixed_point, params.T, "full", params, force,
                          IntegratorConfig(rtol=1e-12, atol=1e-13))
    assert math.hypot(tight.fixed_point[0] - full.fixed_point[0],
                      tight.fixed_point[1] - full.fixed_point[1]) < 1e-8


@settings(max_examples=10)
@given(st.floats(0, 2), st.floats(-0.5, 0.5), st.floats(0, 0.5), st.floats(2.8, 3.5),
       st.floats(-0.5, 0.5))
def test_abel_liouville_property(mu, c, A, q, p):
    params = Params(mu=mu, k=5, omega=3)
    M = monodromy(State(q, p), params.T, params, Harmonic(c, A))
    assert np.linalg.det(M) == pytest.approx(math.exp(-mu * params.T), rel=1e-6)


@settings(max_examples=10)
@given(st.floats(2.8, 3.5), st.floats(-0.5, 0.5))
def test_period_map_commutes_with_full_turns(q, p):
    params = Params(mu=0.5, k=5, omega=3)
    rhs = full_field(params, Harmonic(1.0, 0.5))
    a = flow_map(rhs, State(q, p), params.T)
    b = flow_map(rhs, State(q + 2 * math.pi, p), params.T)
    assert b.q - 2 * math.pi == pytest.approx(a.q, abs=1e-8)
    assert b.p == pytest.approx(a.p, abs=1e-8)
