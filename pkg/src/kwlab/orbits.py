"""Periodic orbits by Newton shooting on the period map, with Floquet data."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .integrate import (IntegrationError, IntegratorConfig, fall_events, integrate,
                        propagate)
from .model import (HALF_PI, THREE_HALF_PI, TWO_PI, ForceModel, Params, State,
                    field_for, variational_field)

ASYMPTOTICALLY_STABLE = "asymptotically_stable"
ELLIPTIC = "elliptic"
HYPERBOLIC = "hyperbolic"
DEGENERATE = "degenerate"

FALL_SAMPLES = 10_000


class ShootingError(RuntimeError):
    pass


class NewtonConvergenceError(ShootingError):
    """Newton did not reach the tolerance; ``best`` is the best iterate seen."""

    def __init__(self, message, best=None, residual=math.inf, iterations=0):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class DegenerateJacobianError(ShootingError):
    """``M - I`` is singular: a multiplier is close to 1 (likely a bifurcation)."""

    def __init__(self, message, point=None, multipliers=None):
        super().__init__(message)
        self.point = point
        self.multipliers = multipliers


@dataclass(frozen=True)
class StabilityThresholds:
    """Bands around the unit circle used to classify multipliers."""

    inner: float = 1e-8
    outer: float = 1e-8
    unit_circle: float = 1e-6


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 20
    singular_tol: float = 1e-12
    # consecutive line searches with step < damped_threshold before switching to LM
    damped_limit: int = 3
    damped_threshold: float = 0.125


@dataclass(frozen=True, eq=False)
class OrbitResult:
    fixed_point: tuple
    residual: float
    monodromy: np.ndarray
    multipliers: np.ndarray
    stability: str
    q_range: tuple
    no_fall: bool
    system: str
    period: float = TWO_PI
    iterations: int = 0
    t0: float = 0.0

    @property
    def state(self) -> State:
        return State(self.fixed_point[0], self.fixed_point[1], self.t0)

    @property
    def max_modulus(self) -> float:
        return float(np.max(np.abs(self.multipliers)))


def classify(multipliers, mu: float, thresholds: StabilityThresholds = StabilityThresholds()) -> str:
    moduli = np.abs(multipliers)
    if np.all(moduli < 1.0 - thresholds.inner):
        return ASYMPTOTICALLY_STABLE
    if (mu == 0 and np.all(np.abs(moduli - 1.0) < thresholds.unit_circle)
            and np.any(np.abs(np.imag(multipliers)) > 0)):
        return ELLIPTIC
    if np.any(moduli > 1.0 + thresholds.outer):
        return HYPERBOLIC
    return DEGENERATE


def worker_count(n_tasks: int) -> int:
    """Thread count for independent tasks, capped by ``KWLAB_THREADS`` if set."""
    cap = os.cpu_count() or 1
    env = os.environ.get("KWLAB_THREADS")
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValueError(f"KWLAB_THREADS must be a positive integer, got {env!r}") from None
    return max(1, min(cap, n_tasks))


def _period_map(point, t0, T, params, force, cfg, system, Phi):
    rhs = variational_field(params, force, system, Phi)
    y0 = np.array([point[0], point[1], 1.0, 0.0, 0.0, 1.0])
    y, _ = propagate(rhs, y0, t0, t0 + T, cfg)
    return y[:2], y[2:].reshape(2, 2)


def monodromy(s0: State, T: float, params: Params, force: ForceModel,
              cfg: Optional[IntegratorConfig] = None, system: str = "full",
              Phi: Optional[float] = None) -> np.ndarray:
    """Fundamental matrix of the variational equations after one period."""
    return _period_map((s0.q, s0.p), s0.t, T, params, force, cfg, system, Phi)[1]


def monodromy_fd(s0: State, T: float, params: Params, force: ForceModel,
                 cfg: Optional[IntegratorConfig] = None, system: str = "full",
                 eps: float = 1e-6, Phi: Optional[float] = None) -> np.ndarray:
    """Central-difference approximation of :func:`monodromy`."""
    rhs = field_for(system, params, force, Phi)
    M = np.empty((2, 2))
    for j in range(2):
        d = np.zeros(2)
        d[j] = eps
        plus, _ = propagate(rhs, np.array([s0.q, s0.p]) + d, s0.t, s0.t + T, cfg)
        minus, _ = propagate(rhs, np.array([s0.q, s0.p]) - d, s0.t, s0.t + T, cfg)
        M[:, j] = (plus - minus) / (2 * eps)
    return M


def no_fall_certificate(orbit: OrbitResult, params: Params, force: ForceModel,
                        cfg: Optional[IntegratorConfig] = None, Phi: Optional[float] = None) -> bool:
    """True iff one period from the fixed point never reaches q = pi/2 or 3 pi/2."""
    return _sweep(orbit.state, orbit.period, orbit.system, params, force, cfg, Phi)[1]


def _sweep(s: State, T, system, params, force, cfg, Phi):
    """(q_range, no_fall) along one period."""
    try:
        res = integrate(field_for(system, params, force, Phi), s, s.t + T, cfg, fall_events())
    except IntegrationError:
        return (math.nan, math.nan), False
    _, ys = res.traj.sample(FALL_SAMPLES)
    q = np.concatenate((ys[:, 0], res.traj.y[:, 0]))
    q_range = (float(q.min()), float(q.max()))
    inside = HALF_PI < q_range[0] and q_range[1] < THREE_HALF_PI
    return q_range, inside and not res.events_hit


def _line_search(evaluate, x, A, F, r, newton):
    dx = np.linalg.solve(A, -F)
    lam = 1.0
    for _ in range(newton.max_halvings + 1):
        x_try = x + lam * dx
        F_try, M_try, r_try = evaluate(x_try)
        if r_try < r:
            break
        lam *= 0.5
    return x_try, F_try, M_try, r_try, lam


def _lm_step(evaluate, x, A, F, nu, newton):
    g = A.T @ F
    H = A.T @ A
    merit = float(F @ F)
    for _ in range(newton.max_halvings + 1):
        dx = np.linalg.solve(H + nu * np.eye(2), -g)
        x_try = x + dx
        F_try, M_try, r_try = evaluate(x_try)
        if F_try is not None and float(F_try @ F_try) < merit:
            return x_try, F_try, M_try, r_try, nu / 3.0
        nu *= 2.0
    return x_try, F_try, M_try, r_try, nu


def find_periodic(guess, T: float, system: str, params: Params, force: ForceModel,
                  cfg: Optional[IntegratorConfig] = None, *, t0: float = 0.0,
                  newton: NewtonOptions = NewtonOptions(),
                  thresholds: StabilityThresholds = StabilityThresholds(),
                  Phi: Optional[float] = None) -> OrbitResult:
    """Locate a T-periodic orbit by damped Newton on ``P(x) - x``.

    Each iterate integrates the variational system for the Jacobian
    ``M - I``; the residual comes from the plain period map.  Backtracking halves the
    step while the residual does not decrease; after ``newton.damped_limit``
    consecutive heavily damped steps the iteration continues with
    Levenberg-Marquardt steps, which cope with the strong twist near
    elliptic points of the frictionless map.

    Raises
    ------
    NewtonConvergenceError
        After ``newton.max_iter`` iterations; carries the best iterate.
    DegenerateJacobianError
        When ``M - I`` is numerically singular.
    """
    x = np.array(guess, dtype=float)
    if x.shape != (2,) or not np.all(np.isfinite(x)):
        raise ValueError(f"guess must be a finite (q, p) pair, got {guess!r}")

    plain = field_for(system, params, force, Phi)

    def evaluate(point):
        # M from the variational system; F from the plain period map so the
        # reported residual is exactly what flow_map reproduces
        try:
            _, M = _period_map(point, t0, T, params, force, cfg, system, Phi)
            P, _ = propagate(plain, point, t0, t0 + T, cfg)
        except IntegrationError:
            return None, None, math.inf
        F = P - point
        r = float(np.max(np.abs(F)))
        return F, M, r if math.isfinite(r) else math.inf

    F, M, r = evaluate(x)
    if F is None:
        raise NewtonConvergenceError("period map failed at the initial guess", x, r, 0)
    best, best_r = x.copy(), r
    it = 0
    damped = 0
    nu = None
    while r >= newton.tol:
        if it >= newton.max_iter:
            raise NewtonConvergenceError(
                f"no convergence after {it} Newton iterations (residual {best_r:.3e})",
                best, best_r, it)
        it += 1
        A = M - np.eye(2)
        scale = max(1.0, float(np.max(np.abs(A))))
        if abs(np.linalg.det(A)) < newton.singular_tol * scale * scale:
            raise DegenerateJacobianError(
                "M - I is singular: a Floquet multiplier is close to 1 (bifurcation?)",
                x, np.linalg.eigvals(M))
        if damped < newton.damped_limit:
            x_try, F_try, M_try, r_try, lam = _line_search(evaluate, x, A, F, r, newton)
            damped = damped + 1 if lam < newton.damped_threshold else 0
        else:
            # strong twist makes Newton steps overshoot; Levenberg-Marquardt instead
            if nu is None:
                nu = 1e-3 * float(np.max(np.diag(A.T @ A)))
            x_try, F_try, M_try, r_try, nu = _lm_step(evaluate, x, A, F, nu, newton)
        if F_try is None:
            raise NewtonConvergenceError("period map failed along the Newton path", best, best_r, it)
        x, F, M, r = x_try, F_try, M_try, r_try
        if r < best_r:
            best, best_r = x.copy(), r

    q0 = float(np.mod(x[0], TWO_PI))
    point = (q0, float(x[1]))
    if q0 != x[0]:
        # folding by 2 pi leaves the field unchanged; recompute the residual at the folded point
        F, M, r = evaluate(np.array(point))
    mult = np.linalg.eigvals(M)
    start = State(point[0], point[1], t0)
    q_range, no_fall = _sweep(start, T, system, params, force, cfg, Phi)
    return OrbitResult(
        fixed_point=point, residual=r, monodromy=M, multipliers=mult,
        stability=classify(mult, params.mu, thresholds), q_range=q_range,
        no_fall=no_fall, system=system, period=T, iterations=it, t0=t0)


def seeded_full_orbit(params: Params, force: ForceModel, cfg=None, guess=(math.pi, 0.0),
                      **kwargs):
    """Averaged orbit from ``guess``, then the full orbit seeded from it."""
    avg = find_periodic(guess, params.T, "averaged", params, force, cfg, **kwargs)
    full = find_periodic(avg.fixed_point, params.T, "full", params, force, cfg, **kwargs)
    return avg, full


@dataclass(frozen=True)
class BasinProbe:
    distances: np.ndarray
    converged: bool
    escaped: bool
    decay_ratio: float = math.nan


def basin_probe(start, n_periods: int, orbit: OrbitResult, params: Params, force: ForceModel,
                cfg: Optional[IntegratorConfig] = None, tol: float = 1e-6,
                floor: float = 1e-8) -> BasinProbe:
    """Iterate the period map ``n_periods`` times, recording distances to the fixed point.

    The decay ratio is the mean per-period contraction over the last
    iterates that are still above ``floor`` (beneath it integration noise
    dominates).
    """
    rhs = field_for(orbit.system, params, force)
    target = np.asarray(orbit.fixed_point)
    state = State(float(start[0]), float(start[1]), orbit.t0)
    dists = []
    escaped = False
    for _ in range(n_periods):
        try:
            res = integrate(rhs, state, state.t + orbit.period, cfg, fall_events())
        except IntegrationError:
            escaped = True
            break
        if res.events_hit:
            escaped = True
            break
        y = res.traj.y[-1]
        # the period map commutes with q -> q + 2 pi
        dq = (y[0] - target[0] + math.pi) % TWO_PI - math.pi
        dists.append(math.hypot(dq, y[1] - target[1]))
        state = State(float(y[0]), float(y[1]), orbit.t0)
    d = np.asarray(dists)
    converged = (not escaped) and d.size > 0 and d[-1] < tol
    return BasinProbe(d, bool(converged), escaped, _decay_ratio(d, floor))


def _decay_ratio(d, floor, window=4):
    above = np.flatnonzero(d > floor)
    if above.size < 2:
        return math.nan
    last = above[-1]
    first = max(above[0], last - window)
    if last == first:
        return math.nan
    return float((d[last] / d[first]) ** (1.0 / (last - first)))


@dataclass(frozen=True)
class SweepPoint:
    k: int
    distance: float
    orbit: Optional[OrbitResult] = None
    error: Optional[str] = None


def orbit_distance(full: OrbitResult, avg: OrbitResult, params_full: Params, force,
                   cfg=None, n: int = FALL_SAMPLES) -> float:
    """Sup over one period of the phase-plane distance between two orbits."""
    a = integrate(field_for("full", params_full, force), full.state, full.t0 + full.period, cfg)
    b = integrate(field_for("averaged", params_full, force), avg.state, avg.t0 + avg.period, cfg)
    ts = np.linspace(full.t0, full.t0 + full.period, n)
    ya, yb = a.traj(ts), b.traj(ts)
    dq = (ya[:, 0] - yb[:, 0] + math.pi) % TWO_PI - math.pi
    return float(np.max(np.hypot(dq, ya[:, 1] - yb[:, 1])))


def averaging_sweep(k_values: Sequence[int], template: Params, force: ForceModel,
                    cfg: Optional[IntegratorConfig] = None, guess=(math.pi, 0.0)):
    """Distance between full and averaged periodic orbits as k grows.

    The averaged system does not depend on k, so its orbit is computed once.
    Failures for individual k are recorded in the returned points.  The k
    values are processed concurrently; the output keeps their order.
    """
    ks = list(k_values)
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("k_values must be strictly increasing")
    avg = find_periodic(guess, template.T, "averaged", template, force, cfg)

    def one(k):
        params = replace(template, k=k)
        try:
            full = find_periodic(avg.fixed_point, params.T, "full", params, force, cfg)
            return SweepPoint(k, orbit_distance(full, avg, params, force, cfg), full)
        except (ShootingError, IntegrationError) as exc:
            return SweepPoint(k, math.nan, None, str(exc))

    n = worker_count(len(ks))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            return avg, list(pool.map(one, ks))
    return avg, [one(k) for k in ks]


def linearised_upright_multipliers(mu: float, Phi: float, T: float = TWO_PI) -> np.ndarray:
    """Multipliers of ``e'' = -mu e' + (1 - Phi) e`` over one period."""
    lam = np.roots([1.0, mu, Phi - 1.0]).astype(complex)
    return np.exp(lam * T)
