import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kwlab.model import (EPS, GeneralState, Harmonic, Params, State, Tabulated, Zero,
                         apriori_bound, averaged_jacobian, averaged_rhs, check_theorem1,
                         check_theorem2, constant_force, critical_points, effective_force,
                         full_rhs, inverse_state_transform, make_state, phi_mean_square,
                         phi_mean_square_quadrature, pivot, rhs_jacobian, state_transform)

finite = st.floats(-10, 10, allow_nan=False)
angles = st.floats(0, 2 * math.pi, allow_nan=False)
times = st.floats(0, 2 * math.pi, allow_nan=False)
params_st = st.builds(Params, mu=st.floats(0, 3), k=st.integers(1, 30),
                      omega=st.integers(1, 12), a=st.floats(0, 2))
forces_st = st.one_of(st.just(Zero()),
                      st.builds(Harmonic, st.floats(-20, 20), st.floats(-20, 20)))


# -- parameters ---------------------------------------------------------------

def test_params_validation():
    with pytest.raises(ValueError):
        Params(mu=1, k=2.5, omega=1)
    with pytest.raises(ValueError):
        Params(mu=1, k=10, omega=1.5)
    with pytest.raises(ValueError):
        Params(mu=-1, k=10, omega=1)
    with pytest.raises(ValueError):
        Params(mu=1, k=10, omega=1, T=1.0)
    with pytest.warns(UserWarning):
        Params(mu=1, k=10, omega=1.5, relaxed=True)
    # T = 4 pi is a multiple of every pivot period
    assert Params(mu=1, k=10, omega=3, T=4 * math.pi).T == 4 * math.pi


def test_make_state_rejects_nonfinite():
    with pytest.raises(ValueError):
        make_state(math.nan, 0.0)


@given(params_st)
def test_phi_mean_square_matches_quadrature(params):
    assert phi_mean_square(params) == pytest.approx(phi_mean_square_quadrature(params),
                                                    rel=1e-12, abs=1e-14)


@given(params_st, times)
def test_pivot_derivatives(params, t):
    d = 1e-6
    f_p, fd_p, _ = pivot(t + d, params)
    f_m, fd_m, _ = pivot(t - d, params)
    _, fdot, fddot = pivot(t, params)
    scale = params.a * params.omega ** 2 * params.k + 1
    assert (f_p - f_m) / (2 * d) == pytest.approx(fdot, abs=1e-6 * scale)
    assert (fd_p - fd_m) / (2 * d) == pytest.approx(fddot, abs=1e-5 * scale)


# -- vector fields ------------------------------------------------------------

@given(params_st, forces_st, angles, finite, times)
def test_full_rhs_is_the_newton_equation_in_momentum_form(params, force, x, v, t):
    """Differentiate p = xdot + fdot sin x along the Newton equation."""
    _, fdot, fddot = pivot(t, params)
    p = v + fdot * math.sin(x)
    xddot = -params.mu * v - (1 + fddot) * math.sin(x) + force(x, p, t)
    pdot = xddot + fddot * math.sin(x) + fdot * v * math.cos(x)
    dq, dp = full_rhs(State(x, p, t), params, force)
    assert dq == pytest.approx(v, abs=1e-9 * (1 + abs(v)))
    scale = 1 + abs(pdot) + params.a ** 2 * params.omega ** 2 * (1 + abs(p))
    assert dp == pytest.approx(pdot, abs=1e-11 * scale)


@given(params_st, forces_st, angles, finite, times)
def test_rhs_jacobian_matches_finite_differences(params, force, q, p, t):
    J = rhs_jacobian(State(q, p, t), params, force)
    d = 1e-6
    for j, e in enumerate(np.eye(2) * d):
        plus = np.array(full_rhs(State(q + e[0], p + e[1], t), params, force))
        minus = np.array(full_rhs(State(q - e[0], p - e[1], t), params, force))
        fd = (plus - minus) / (2 * d)
        scale = 1 + params.a ** 2 * params.omega ** 2 + abs(p) * params.a * params.omega + 40
        np.testing.assert_allclose(J[:, j], fd, atol=1e-6 * scale)


@given(params_st, forces_st, angles, finite, times)
def test_trace_of_jacobian_is_minus_mu(params, force, q, p, t):
    J = rhs_jacobian(State(q, p, t), params, force)
    assert np.trace(J) == pytest.approx(-params.mu, abs=1e-10 * (1 + params.a * params.omega))


@given(params_st, angles, finite, st.floats(-5, 5))
def test_averaged_field_is_fast_period_mean(params, q, p, c):
    """Freezing (q, p), the mean of the full field over one fast period."""
    force = constant_force(c)
    n = 64
    tau = np.arange(n) * (2 * math.pi / params.fast_frequency) / n
    dq, dp = full_rhs(State(q, p, tau), params, force)
    aq, ap = averaged_rhs(State(q, p, 0.0), params.Phi, params, force)
    assert np.mean(dq) == pytest.approx(aq, abs=1e-10 * (1 + abs(p) + params.a * params.omega))
    assert np.mean(dp) == pytest.approx(ap, abs=1e-10 * (1 + abs(p) + params.Phi) * 10)


@given(params_st, forces_st, angles, finite, times)
def test_averaged_jacobian_matches_finite_differences(params, force, q, p, t):
    J = averaged_jacobian(State(q, p, t), params.Phi, params, force)
    d = 1e-6
    for j, e in enumerate(np.eye(2) * d):
        plus = np.array(averaged_rhs(State(q + e[0], p + e[1], t), params.Phi, params, force))
        minus = np.array(averaged_rhs(State(q - e[0], p - e[1], t), params.Phi, params, force))
        np.testing.assert_allclose(J[:, j], (plus - minus) / (2 * d), atol=1e-6 * (50 + params.Phi))


@given(params_st, angles, finite, times)
def test_state_transform_round_trip(params, x, v, t):
    s = state_transform(x, v, t, params)
    x2, v2 = inverse_state_transform(s, params)
    assert x2 == x
    assert v2 == pytest.approx(v, abs=1e-12 * (1 + abs(v) + params.a * params.omega))


# -- force models -------------------------------------------------------------

def test_harmonic_profile_and_bound():
    h = Harmonic(10.0, 1.0)
    assert h.sup_abs() == 11.0
    assert h(math.pi, 3.0, 0.5 * math.pi) == pytest.approx(-11.0)


def test_tabulated_interpolates_and_is_periodic():
    t = np.linspace(0, 2 * math.pi, 32, endpoint=False)
    tab = Tabulated(t, np.sin(t) + 0.3)
    np.testing.assert_allclose(tab.profile(t), np.sin(t) + 0.3, atol=1e-14)
    np.testing.assert_allclose(tab.profile(t + 2 * math.pi), tab.profile(t), atol=1e-12)
    s = np.linspace(0, 2 * math.pi, 200)
    np.testing.assert_allclose(tab.profile(s), np.sin(s) + 0.3, atol=1e-4)
    with pytest.raises(ValueError):
        Tabulated([0.0, 1.0, 0.5], [1.0, 2.0, 3.0])


def test_general_state_partials_by_differences():
    g = GeneralState(h=lambda q, p, t: np.sin(q) * p + t)
    dq, dp = g.partials(0.3, 2.0, 1.0)
    assert dq == pytest.approx(math.cos(0.3) * 2.0, rel=1e-8)
    assert dp == pytest.approx(math.sin(0.3), rel=1e-8)
    with pytest.raises(ValueError):
        g.sup_abs()


# -- critical points ----------------------------------------------------------

@given(st.floats(1e-3, 1e3))
def test_critical_points_are_stationary(Phi):
    cp = critical_points(Phi)
    fprime = lambda q: -math.cos(q) - Phi * math.cos(2 * q)  # noqa: E731
    pts = [cp.qmin1, cp.qmax1] + ([cp.qmax2, cp.qmin2] if Phi > 1 else [])
    for q in pts:
        assert abs(fprime(q)) < 1e-9 * (1 + Phi)
    if Phi > 1:
        assert cp.qmax2 < math.pi < cp.qmin2
        # qmax2 and qmin2 are a local max and min of the effective force
        assert effective_force(cp.qmax2, Phi) > effective_force(cp.qmax2 - 1e-3, Phi)
        assert effective_force(cp.qmin2, Phi) < effective_force(cp.qmin2 + 1e-3, Phi)
    else:
        assert cp.qmax2 is None and cp.qmin2 is None


def test_critical_points_degenerate_at_one():
    cp = critical_points(1.0)
    assert cp.degenerate and cp.qmax2 == math.pi == cp.qmin2
    # rounding in a**2 omega**2 / 2 does not split the pair
    near = critical_points(1.0 + 2 * EPS)
    assert near.qmax2 == math.pi == near.qmin2
    with pytest.raises(ValueError):
        critical_points(0.0)


# -- hypothesis checks --------------------------------------------------------

@given(st.floats(-50, 50), st.floats(-50, 50), params_st)
def test_theorem1_margin_one_for_cos_q_forces(c, A, params):
    chk = check_theorem1(Harmonic(c, A), params)
    assert chk.satisfied and chk.margin == 1.0


def test_theorem1_constant_forces():
    p = Params(mu=1, k=10, omega=10)
    chk = check_theorem1(constant_force(2.0), p)
    assert not chk.satisfied and chk.margin == pytest.approx(-1.0)
    chk = check_theorem1(constant_force(0.25), p)
    assert chk.satisfied and chk.margin == pytest.approx(0.75)


def test_theorem1_time_dependent_general_force():
    # min over t of 1 - 0.5 sin t - 0.2 = 0.3 occurs between grid nodes
    g = GeneralState(h=lambda q, p, t: 0.2 + 0.5 * np.sin(t + 0.123), bound=0.7)
    chk = check_theorem1(g, Params(mu=1, k=10, omega=10), grid_n=16)
    assert chk.margin == pytest.approx(0.3, abs=1e-9)


def test_theorem2_margins_against_closed_form(damped):
    params, force = damped
    chk = check_theorem2(force, params)
    assert chk.applicable and chk.satisfied and chk.verdict == "satisfied"
    Phi = params.Phi
    lam2 = (-1 - math.sqrt(1 + 8 * Phi ** 2)) / (4 * Phi)
    s = math.sqrt(1 - lam2 ** 2)
    f_max2 = -s - Phi * s * lam2            # f at qmax2 = acos(lam2)
    f_min2 = s + Phi * s * lam2             # f at qmin2 = 2 pi - qmax2
    # lam2 < 0: (10 + sin t) lam2 ranges over [11 lam2, 9 lam2]
    assert chk.margins[2] == pytest.approx(11 * lam2 + f_max2, rel=1e-9)
    assert chk.margins[3] == pytest.approx(-f_min2 - 9 * lam2, rel=1e-9)


def test_theorem2_not_applicable_below_one():
    chk = check_theorem2(Harmonic(1, 1), Params(mu=1, k=10, omega=1, a=1.0))
    assert not chk.applicable and chk.verdict == "not applicable"


def test_apriori_bound_closed_form(damped):
    params, force = damped
    expected = (10 + 72 / 11) * math.exp(22 * math.pi) - 72 / 11
    assert apriori_bound(params, force) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        apriori_bound(params, GeneralState(h=lambda q, p, t: 0.0))


def test_designed_force_checks_warn():
    g = GeneralState(h=lambda q, p, t: 0.0 * q, bound=0.0, designed=True)
    with pytest.warns(UserWarning):
        check_theorem1(g, Params(mu=1, k=10, omega=3))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_theorem1(Zero(), Params(mu=1, k=10, omega=3))
