"""Inverse design: the horizontal force that makes a prescribed motion exact.

Given ``q(t)`` with ``cos q`` bounded away from zero, the momentum equation is
solved for ``h`` in ``H = h(t) cos q``.  The canonical family oscillates about
the upright position, ``q(t) = pi + A sin t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .integrate import IntegratorConfig, integrate
from .model import TWO_PI, ForceModel, GeneralState, Params, State, Tabulated, full_field, pivot
from .orbits import OrbitResult, find_periodic

#: Smallest admissible ``|cos q|`` along a prescribed motion.
COS_FLOOR = 0.01
#: Largest admissible canonical amplitude.
MAX_AMPLITUDE = 0.5 * math.pi - 0.05
#: Human-readable record of the canonical family, written to every design output.
CANONICAL_FAMILY = "q(t) = pi + A sin(t)"

_CHECK_POINTS = 8192


class PreconditionError(ValueError):
    """The prescribed motion reaches (or comes too close to) a horizontal rod."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True, eq=False)
class PrescribedMotion:
    """A periodic motion ``q(t)`` with its first two derivatives.

    Use :meth:`canonical` for ``pi + A sin t``; arbitrary motions pass the
    three callables directly (they must accept arrays).
    """

    q: Callable
    qdot: Callable
    qddot: Callable
    period: float = TWO_PI
    amplitude: Optional[float] = None
    sincos: Optional[Callable] = None

    @classmethod
    def canonical(cls, amplitude: float) -> "PrescribedMotion":
        A = float(amplitude)
        if not math.isfinite(A):
            raise PreconditionError(f"amplitude must be finite, got {amplitude!r}")
        return cls(q=lambda t: math.pi + A * np.sin(t),
                   qdot=lambda t: A * np.cos(t),
                   qddot=lambda t: -A * np.sin(t),
                   period=TWO_PI, amplitude=A,
                   # sin(pi + x) = -sin x keeps q = pi exact when A = 0
                   sincos=lambda t: (-np.sin(A * np.sin(t)), -np.cos(A * np.sin(t))))

    @property
    def is_canonical(self) -> bool:
        return self.amplitude is not None

    @property
    def family(self) -> str:
        return CANONICAL_FAMILY if self.is_canonical else "user-supplied"

    def sin_cos(self, t):
        if self.sincos is not None:
            return self.sincos(t)
        q = self.q(t)
        return np.sin(q), np.cos(q)

    def momentum(self, t, params: Params):
        """``p = qdot + fdot sin q`` along the motion."""
        _, fdot, _ = pivot(t, params)
        return self.qdot(t) + fdot * self.sin_cos(t)[0]

    def initial_state(self, params: Params, t0: float = 0.0) -> State:
        return State(float(self.q(t0)), float(self.momentum(t0, params)), t0)


@dataclass(frozen=True, eq=False)
class DesignedForce:
    """Samples of the designed ``h`` on ``[0, T)`` plus an evaluator.

    Attributes
    ----------
    t, h : ndarray
        Uniform grid of ``n`` points and the force values there.
    closed_form : callable or None
        Exact ``h(t)`` for the canonical family.
    motion : PrescribedMotion
    params : Params
    """

    t: np.ndarray
    h: np.ndarray
    closed_form: Optional[Callable]
    motion: PrescribedMotion
    params: Params

    @property
    def n(self) -> int:
        return self.t.size

    def __call__(self, t):
        if self.closed_form is not None:
            return self.closed_form(t)
        return self.force_model().profile(t)

    def force_model(self) -> ForceModel:
        """A :class:`ForceModel` realising ``H = h(t) cos q``.

        Canonical motions get an exact compiled evaluator; other motions fall
        back to a periodic spline through the samples.
        """
        if self.closed_form is None:
            return Tabulated(self.t, self.h, period=self.params.T)
        g = self.closed_form
        p = self.params
        bound = float(np.max(np.abs(g(np.linspace(0.0, p.T, _CHECK_POINTS)))))
        return GeneralState(
            h=lambda q, pp, t: g(t) * np.cos(q),
            jac=lambda q, pp, t: (-g(t) * np.sin(q), 0.0 * np.asarray(q)),
            bound=bound, depends_on_p=False,
            kernel=np.array([K.FORCE_DESIGN, self.motion.amplitude, p.mu, p.k, p.omega, p.a]),
            designed=True, time_profile=g)


def _canonical_profile(A: float, params: Params) -> Callable:
    mu, k, omega, a = params.mu, params.k, params.omega, params.a

    def g(t):
        t = np.asarray(t, dtype=float)
        x = A * np.sin(t)
        fddot = -a * omega * omega * k * np.sin(omega * k * t)
        # q = pi + x, so sin q = -sin x and cos q = -cos x
        out = (-x + mu * A * np.cos(t) - (1.0 + fddot) * np.sin(x)) / -np.cos(x)
        return out + 0.0
    return g


def check_motion(motion: PrescribedMotion, params: Params, n: int = _CHECK_POINTS) -> None:
    """Raise :class:`PreconditionError` unless the motion stays clear of ``cos q = 0``."""
    if motion.is_canonical and abs(motion.amplitude) > MAX_AMPLITUDE:
        raise PreconditionError(
            f"|A| = {abs(motion.amplitude):g} exceeds the admissible {MAX_AMPLITUDE:.6g}",
            t=0.5 * math.pi)
    ratio = params.T / motion.period
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise PreconditionError(f"motion period {motion.period:g} does not divide T={params.T:g}")
    t = np.linspace(0.0, motion.period, n, endpoint=False)
    c = np.abs(np.cos(motion.q(t)))
    bad = np.flatnonzero(~(c >= COS_FLOOR))
    if bad.size:
        t_bad = float(t[bad[0]])
        raise PreconditionError(
            f"|cos q| = {c[bad[0]]:.3g} < {COS_FLOOR} at t = {t_bad:.6g}: the rod is nearly horizontal",
            t=t_bad)


def required_force(motion: PrescribedMotion, params: Params, n: int = 1024) -> DesignedForce:
    """Force profile under which ``motion`` solves the full system exactly.

    Works through the momentum ``p = qdot + fdot sin q`` and its derivative,
    then divides the momentum balance by ``cos q``.  ``h`` carries a term
    proportional to ``k`` through the pivot acceleration.

    Raises
    ------
    PreconditionError
        If ``|cos q| < 0.01`` somewhere (the offending t is attached) or the
        canonical amplitude exceeds ``pi/2 - 0.05``.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    check_motion(motion, params)
    t = np.linspace(0.0, params.T, n, endpoint=False)
    h = _momentum_route(motion, params, t)
    closed = _canonical_profile(motion.amplitude, params) if motion.is_canonical else None
    if not np.all(np.isfinite(h)):
        raise PreconditionError("designed force is not finite on the sample grid")
    return DesignedForce(t, h, closed, motion, params)


def _momentum_route(motion: PrescribedMotion, params: Params, t):
    qd, qdd = motion.qdot(t), motion.qddot(t)
    _, fdot, fddot = pivot(t, params)
    sq, cq = motion.sin_cos(t)
    p = qd + fdot * sq
    pdot = qdd + fddot * sq + fdot * qd * cq
    mu = params.mu
    return (pdot + mu * p - (mu * sq + p * cq) * fdot + sq + fdot ** 2 * sq * cq) / cq + 0.0


@dataclass(frozen=True, eq=False)
class DesignVerification:
    sup_error: float
    orbit: OrbitResult
    family: str


def verify_design(motion: PrescribedMotion, force: DesignedForce, params: Params,
                  cfg: Optional[IntegratorConfig] = None, n_check: int = 10_000) -> DesignVerification:
    """Integrate under the designed force and compare against the prescription.

    ``sup_error`` is the largest ``|q_sim - q_prescribed|`` over one period;
    the periodic orbit is then located from the prescribed initial state.
    """
    model = force.force_model()
    s0 = motion.initial_state(params)
    res = integrate(full_field(params, model), s0, params.T, cfg)
    ts = np.concatenate((np.linspace(0.0, params.T, n_check), res.traj.t))
    err = float(np.max(np.abs(res.traj(ts)[:, 0] - motion.q(ts))))
    orbit = find_periodic((s0.q, s0.p), params.T, "full", params, model, cfg)
    return DesignVerification(err, orbit, motion.family)
