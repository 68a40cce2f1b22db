"""Closed-form physics of the vibrating-pivot pendulum in a horizontal force field.

Coordinates follow the Hamiltonian-like form: ``q`` is the inclination with
``q = pi`` the upright position, ``p = qdot + fdot(t) sin q``.

Sign convention
---------------
The horizontal force enters the momentum equation as ``+H(q, p, t)``; for the
built-in forces ``H = h(t) cos q``.  Written as a Newton equation this is

    xddot + mu xdot + (1 + fddot) sin x - h(t) cos x = 0,

i.e. ``h`` has the opposite sign to the classical second-order form.  All
reference parameter sets (``h = c + A sin t``) use this convention.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from . import _kernels as K
from .integrate import VectorField

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi
THREE_HALF_PI = 1.5 * math.pi
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Params:
    """Physical and forcing constants.

    Parameters
    ----------
    mu : float
        Viscous friction coefficient, ``mu >= 0``.
    k : int
        Fast-frequency multiplier; the pivot oscillates at ``omega * k``.
    omega : int
        Vibration frequency factor.
    a : float
        Vibration amplitude factor; ``a = 1`` gives ``f = sin(omega k t) / k``.
    T : float
        Slow period.
    relaxed : bool
        Accept non-integer ``omega``.  Exact ``T``-periodicity of the pivot
        law is then not guaranteed and a warning is issued.
    """

    mu: float
    k: int
    omega: float
    a: float = 1.0
    T: float = TWO_PI
    relaxed: bool = False

    def __post_init__(self):
        for name in ("mu", "omega", "a", "T"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.a < 0:
            raise ValueError(f"a must be >= 0, got {self.a}")
        if self.T <= 0:
            raise ValueError(f"T must be > 0, got {self.T}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if self.relaxed:
            if self.omega <= 0:
                raise ValueError(f"omega must be > 0, got {self.omega}")
            warnings.warn("non-integer omega: the pivot law may not be T-periodic",
                          stacklevel=3)
        else:
            if int(self.omega) != self.omega or self.omega < 1:
                raise ValueError(f"omega must be a positive integer, got {self.omega}")
            object.__setattr__(self, "omega", int(self.omega))
            cycles = self.omega * self.k * self.T / TWO_PI
            if abs(cycles - round(cycles)) > 1e-9 * max(1.0, cycles):
                raise ValueError("the pivot period 2*pi/(omega*k) must divide T")

    @property
    def Phi(self) -> float:
        return phi_mean_square(self)

    @property
    def fast_frequency(self) -> float:
        return self.omega * self.k


class State(NamedTuple):
    q: float
    p: float
    t: float = 0.0


def make_state(q, p, t=0.0) -> State:
    s = State(float(q), float(p), float(t))
    if not all(math.isfinite(v) for v in s):
        raise ValueError(f"state must be finite, got {s}")
    return s


# ---------------------------------------------------------------------------
# horizontal force models


class ForceModel:
    """Horizontal force contribution ``H(q, p, t)`` to the momentum equation."""

    #: True when H depends on p (the divergence identity then fails)
    depends_on_p = False

    def __call__(self, q, p, t):
        raise NotImplementedError

    def partials(self, q, p, t):
        """Return ``(dH/dq, dH/dp)``."""
        raise NotImplementedError

    def profile(self, t):
        """``g(t)`` when ``H = g(t) cos q``, otherwise ``None``."""
        return None

    def sup_abs(self) -> float:
        """Upper bound on ``|H|`` over the phase space."""
        raise NotImplementedError

    def encode(self) -> Optional[np.ndarray]:
        """Compiled-kernel parameter block ``[kind, ...]`` or None."""
        return None


@dataclass(frozen=True)
class Zero(ForceModel):
    def __call__(self, q, p, t):
        return np.zeros(np.broadcast(q, p, t).shape)[()]

    def partials(self, q, p, t):
        z = self(q, p, t)
        return z, z

    def profile(self, t):
        return np.zeros(np.shape(t))[()]

    def sup_abs(self):
        return 0.0

    def encode(self):
        return np.array([K.FORCE_ZERO], dtype=float)


@dataclass(frozen=True)
class Harmonic(ForceModel):
    """``H = (c + A sin t) cos q``."""

    c: float
    A: float

    def __call__(self, q, p, t):
        return (self.c + self.A * np.sin(t)) * np.cos(q) + 0.0 * np.asarray(p)

    def partials(self, q, p, t):
        return -(self.c + self.A * np.sin(t)) * np.sin(q), 0.0 * np.asarray(q)

    def profile(self, t):
        return self.c + self.A * np.sin(t)

    def sup_abs(self):
        return abs(self.c) + abs(self.A)

    def encode(self):
        return np.array([K.FORCE_HARMONIC, self.c, self.A], dtype=float)


@dataclass(frozen=True, eq=False)
class Tabulated(ForceModel):
    """``H = g(t) cos q`` with ``g`` a periodic cubic spline through samples.

    ``t`` must be strictly increasing and cover ``[t[0], t[0] + period)``;
    the sample at ``t[0] + period`` is implied by periodicity.
    """

    t: np.ndarray
    values: np.ndarray
    period: float = TWO_PI
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 3:
            raise ValueError("need at least 3 matching (t, value) samples")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("samples must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if t[-1] - t[0] >= self.period:
            raise ValueError("samples must lie within one period")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)
        knots = np.append(t, t[0] + self.period)
        spline = CubicSpline(knots, np.append(v, v[0]), bc_type="periodic")
        object.__setattr__(self, "_spline", spline)

    def __call__(self, q, p, t):
        return self.profile(t) * np.cos(q) + 0.0 * np.asarray(p)

    def partials(self, q, p, t):
        return -self.profile(t) * np.sin(q), 0.0 * np.asarray(q)

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        t0 = self.t[0]
        return self._spline(t0 + np.mod(t - t0, self.period))[()]

    def sup_abs(self):
        dense = np.linspace(self.t[0], self.t[0] + self.period, 64 * self.t.size)
        return float(np.max(np.abs(self._spline(dense))))

    def encode(self):
        sp = self._spline
        n = sp.x.size - 1
        return np.concatenate(([K.FORCE_SPLINE, self.period, n], sp.x, sp.c.T.ravel()))


@dataclass(frozen=True, eq=False)
class GeneralState(ForceModel):
    """Arbitrary ``H(q, p, t)`` supplied as a Python callable.

    Parameters
    ----------
    h : callable
        ``h(q, p, t) -> float``.
    jac : callable, optional
        ``jac(q, p, t) -> (dH/dq, dH/dp)``; central differences otherwise.
    bound : float, optional
        Declared ``sup |H|``, required by :func:`apriori_bound`.
    depends_on_p : bool
        Whether ``h`` uses ``p``.
    kernel : array, optional
        Compiled equivalent of ``h`` (internal use by the design module).
    designed : bool
        Marks forces produced by inverse design; hypothesis checks warn.
    """

    h: Callable
    jac: Optional[Callable] = None
    bound: Optional[float] = None
    depends_on_p: bool = True
    kernel: Optional[np.ndarray] = None
    designed: bool = False
    time_profile: Optional[Callable] = None

    def __call__(self, q, p, t):
        return self.h(q, p, t)

    def partials(self, q, p, t):
        if self.jac is not None:
            return self.jac(q, p, t)
        d = 1e-6
        dq = (self.h(q + d, p, t) - self.h(q - d, p, t)) / (2 * d)
        dp = (self.h(q, p + d, t) - self.h(q, p - d, t)) / (2 * d)
        return dq, dp

    def profile(self, t):
        return None if self.time_profile is None else self.time_profile(t)

    def sup_abs(self):
        if self.bound is None:
            raise ValueError("GeneralState force has no declared bound")
        return float(self.bound)

    def encode(self):
        return None if self.kernel is None else np.asarray(self.kernel, dtype=float)


def constant_force(value: float) -> GeneralState:
    """``H(q, p, t) = value`` everywhere."""
    value = float(value)
    return GeneralState(h=lambda q, p, t: value + 0.0 * np.asarray(q),
                        jac=lambda q, p, t: (0.0, 0.0), bound=abs(value),
                        depends_on_p=False)


# ---------------------------------------------------------------------------
# pointwise physics


def pivot(t, params: Params):
    """Vertical pivot position ``f``, velocity and acceleration at time ``t``."""
    w, k, a = params.omega, params.k, params.a
    phase = w * k * np.asarray(t, dtype=float)
    return ((a / k) * np.sin(phase))[()], (a * w * np.cos(phase))[()], \
        (-a * w * w * k * np.sin(phase))[()]


def _phi(t, params):
    return params.a * params.omega * np.cos(params.omega * params.k * t)


def full_rhs(s: State, params: Params, force: ForceModel):
    q, p, t = s
    phi = _phi(t, params)
    mu = params.mu
    dq = p - phi * np.sin(q)
    dp = (-mu * p + (mu * np.sin(q) + p * np.cos(q)) * phi - np.sin(q)
          - 0.5 * phi ** 2 * np.sin(2 * q) + force(q, p, t))
    return dq, dp


def averaged_rhs(s: State, Phi: float, params: Params, force: ForceModel):
    q, p, t = s
    return p, -params.mu * p - np.sin(q) - 0.5 * Phi * np.sin(2 * q) + force(q, p, t)


def phi_mean_square(params: Params) -> float:
    """Mean of ``phi**2`` over a fast period (closed form)."""
    return 0.5 * (params.a * params.omega) ** 2


def phi_mean_square_quadrature(params: Params, nodes: int = 4096) -> float:
    """Same mean by the periodic trapezoid rule over one fast period."""
    tau = np.arange(nodes) * (TWO_PI / params.omega) / nodes
    phi = params.a * params.omega * np.cos(params.omega * tau)
    return float(np.mean(phi ** 2))


def effective_force(q, Phi):
    return -np.sin(q) - 0.5 * Phi * np.sin(2 * np.asarray(q))


@dataclass(frozen=True)
class CriticalPoints:
    Phi: float
    lambda1: float
    lambda2: float
    qmin1: float
    qmax1: float
    qmax2: Optional[float] = None
    qmin2: Optional[float] = None

    @property
    def degenerate(self) -> bool:
        return self.qmax2 is not None and self.qmax2 == self.qmin2


def critical_points(Phi: float) -> CriticalPoints:
    """Critical points of :func:`effective_force` in ``[0, 2 pi]``.

    The inner pair ``qmax2``/``qmin2`` is reported for ``Phi >= 1``; at
    ``Phi = 1`` both equal ``pi``.
    """
    if not Phi > 0:
        raise ValueError(f"critical points need Phi > 0, got {Phi}")
    if abs(Phi - 1.0) <= 4.0 * EPS:
        # acos is ill-conditioned at -1: a rounding error in a**2 omega**2 / 2
        # would otherwise split the degenerate pair by ~1e-8
        Phi = 1.0
    root = math.sqrt(1.0 + 8.0 * Phi * Phi)
    lam1 = (-1.0 + root) / (4.0 * Phi)
    lam2 = (-1.0 - root) / (4.0 * Phi)
    qmin1 = math.acos(lam1)
    qmax2 = qmin2 = None
    if Phi >= 1.0:
        qmax2 = math.acos(max(lam2, -1.0))
        qmin2 = TWO_PI - qmax2
    return CriticalPoints(Phi, lam1, lam2, qmin1, TWO_PI - qmin1, qmax2, qmin2)


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass(frozen=True)
class Theorem1Check:
    satisfied: bool
    margin: float


@dataclass(frozen=True)
class Theorem2Check:
    applicable: bool
    satisfied: bool
    margins: tuple = ()

    @property
    def verdict(self) -> str:
        if not self.applicable:
            return "not applicable"
        return "satisfied" if self.satisfied else "violated"


def _warn_designed(force):
    if getattr(force, "designed", False):
        warnings.warn("the force comes from inverse design and grows with k; "
                      "the averaging hypotheses do not apply", stacklevel=3)


def _extremes(fun: Callable, T: float, grid_n: int):
    """(min, max) of ``fun`` on a grid over [0, T), each refined around its grid optimum."""
    dt = T / grid_n
    ts = np.arange(grid_n) * dt
    vals = np.asarray([fun(t) for t in ts], dtype=float)
    out = []
    for sign, i in ((1.0, int(np.argmin(vals))), (-1.0, int(np.argmax(vals)))):
        best = float(vals[i])
        res = minimize_scalar(lambda t: sign * fun(t), bounds=(ts[i] - dt, ts[i] + dt),
                              method="bounded", options={"xatol": 1e-12})
        if res.success and res.fun < sign * best:
            best = float(sign * res.fun)
        out.append(best)
    return out[0], out[1]


def _h_range(force: ForceModel, q: float, T: float, grid_n: int):
    """(min, max) over t of ``H(q, 0, t)``."""
    if isinstance(force, Zero):
        return 0.0, 0.0
    if force.profile(0.0) is not None:
        # H = g(t) cos q and cos vanishes exactly at the horizontal positions
        cq = 0.0 if q in (HALF_PI, THREE_HALF_PI) else math.cos(q)
        if cq == 0.0:
            return 0.0, 0.0
        if isinstance(force, Harmonic):
            lo, hi = force.c - abs(force.A), force.c + abs(force.A)
        else:
            lo, hi = _extremes(lambda t: float(force.profile(t)), T, grid_n)
        return (cq * lo, cq * hi) if cq > 0 else (cq * hi, cq * lo)
    return _extremes(lambda t: float(force(q, 0.0, t)), T, grid_n)


def _below(force, q, level, T, grid_n):
    """Slack of ``H(q, 0, t) < level`` for all t."""
    return level - _h_range(force, q, T, grid_n)[1]


def _above(force, q, level, T, grid_n):
    """Slack of ``H(q, 0, t) > level`` for all t."""
    return _h_range(force, q, T, grid_n)[0] - level


def check_theorem1(force: ForceModel, params: Params, grid_n: int = 1024) -> Theorem1Check:
    """Check ``H(pi/2, 0, t) < 1`` and ``H(3pi/2, 0, t) > -1`` for all t.

    ``margin`` is the smaller of the two slacks; it is negative when an
    inequality is violated.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    _warn_designed(force)
    s1 = _below(force, HALF_PI, 1.0, params.T, grid_n)
    s2 = _above(force, THREE_HALF_PI, -1.0, params.T, grid_n)
    margin = min(s1, s2)
    return Theorem1Check(margin > 0, margin)


def check_theorem2(force: ForceModel, params: Params, grid_n: int = 1024) -> Theorem2Check:
    """Two-orbit hypotheses; ``applicable`` is False unless ``Phi > 1``."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    Phi = phi_mean_square(params)
    if not Phi > 1.0:
        return Theorem2Check(False, False)
    _warn_designed(force)
    cp = critical_points(Phi)
    s1 = _below(force, HALF_PI, 1.0, params.T, grid_n)
    s2 = _above(force, THREE_HALF_PI, -1.0, params.T, grid_n)
    s3 = _above(force, cp.qmax2, -float(effective_force(cp.qmax2, Phi)), params.T, grid_n)
    s4 = _below(force, cp.qmin2, -float(effective_force(cp.qmin2, Phi)), params.T, grid_n)
    margins = (s1, s2, s3, s4)
    return Theorem2Check(True, all(m > 0 for m in margins), margins)


def apriori_bound(params: Params, force: ForceModel) -> float:
    """Constant ``c`` with ``|p(t)| <= c`` on every T-periodic solution.

    Obtained from Gronwall's inequality with ``c1 = a omega`` (bound on p at a
    turning point of q), ``c2 = mu + a omega`` and
    ``c3 = mu a omega + 1 + (a omega)**2 / 2 + sup|H|``.
    """
    try:
        m_h = force.sup_abs()
    except ValueError as exc:
        raise ValueError("a-priori bound unavailable: " + str(exc)) from None
    aw = params.a * params.omega
    c1 = aw
    c2 = params.mu + aw
    c3 = params.mu * aw + 1.0 + 0.5 * aw * aw + m_h
    if c2 > 0:
        return (c1 + c3 / c2) * math.exp(c2 * params.T) - c3 / c2
    return c1 + c3 * params.T


def state_transform(x, xdot, t, params: Params) -> State:
    """``(x, xdot)`` of the Newton form to ``(q, p)``."""
    _, fdot, _ = pivot(t, params)
    return State(x, xdot + fdot * np.sin(x), t)


def inverse_state_transform(s: State, params: Params):
    """``(q, p, t)`` to ``(x, xdot)``."""
    _, fdot, _ = pivot(s.t, params)
    return s.q, s.p - fdot * np.sin(s.q)


def rhs_jacobian(s: State, params: Params, force: ForceModel) -> np.ndarray:
    q, p, t = s
    phi = _phi(t, params)
    mu = params.mu
    hq, hp = force.partials(q, p, t)
    return np.array([
        [-phi * np.cos(q), 1.0],
        [(mu * np.cos(q) - p * np.sin(q)) * phi - np.cos(q) - phi ** 2 * np.cos(2 * q) + hq,
         -mu + phi * np.cos(q) + hp],
    ], dtype=float)


def averaged_jacobian(s: State, Phi: float, params: Params, force: ForceModel) -> np.ndarray:
    q, p, t = s
    hq, hp = force.partials(q, p, t)
    return np.array([[0.0, 1.0],
                     [-np.cos(q) - Phi * np.cos(2 * q) + hq, -params.mu + hp]], dtype=float)


# ---------------------------------------------------------------------------
# vector-field descriptors for the integrator


def _pack(params: Params, Phi: float, block: np.ndarray) -> np.ndarray:
    head = np.array([params.mu, params.k, params.omega, params.a, Phi], dtype=float)
    return np.concatenate((head, block))


def _descriptor(kind, params, force, Phi, dim, python_fun):
    block = force.encode()
    meta = dict(dim=dim, period=params.T, fast_frequency=params.fast_frequency)
    if block is not None:
        return VectorField(kind=kind, par=_pack(params, Phi, block), **meta)
    return VectorField(fun=python_fun, **meta)


def full_field(params: Params, force: ForceModel) -> VectorField:
    def fun(t, y):
        return full_rhs(State(y[0], y[1], t), params, force)
    return _descriptor(K.FULL, params, force, phi_mean_square(params), 2, fun)


def averaged_field(params: Params, force: ForceModel, Phi: Optional[float] = None) -> VectorField:
    Phi = phi_mean_square(params) if Phi is None else Phi

    def fun(t, y):
        return averaged_rhs(State(y[0], y[1], t), Phi, params, force)
    return _descriptor(K.AVERAGED, params, force, Phi, 2, fun)


def variational_field(params: Params, force: ForceModel, system: str = "full",
                      Phi: Optional[float] = None) -> VectorField:
    """State plus row-major 2x2 fundamental matrix, ``dY/dt = J(t) Y``."""
    Phi = phi_mean_square(params) if Phi is None else Phi
    if system == "full":
        kind = K.FULL_VARIATIONAL

        def fun(t, y):
            s = State(y[0], y[1], t)
            J = rhs_jacobian(s, params, force)
            return np.concatenate((full_rhs(s, params, force), (J @ y[2:].reshape(2, 2)).ravel()))
    elif system == "averaged":
        kind = K.AVERAGED_VARIATIONAL

        def fun(t, y):
            s = State(y[0], y[1], t)
            J = averaged_jacobian(s, Phi, params, force)
            return np.concatenate((averaged_rhs(s, Phi, params, force),
                                   (J @ y[2:].reshape(2, 2)).ravel()))
    else:
        raise ValueError(f"system must be 'full' or 'averaged', got {system!r}")
    return _descriptor(kind, params, force, Phi, 6, fun)


def newton_form_field(params: Params, force: ForceModel) -> VectorField:
    """Second-order form in ``(x, xdot)``: ``xddot = -mu xdot - (1 + fddot) sin x + H``."""
    def fun(t, y):
        x, v = y
        _, fdot, fddot = pivot(t, params)
        return v, (-params.mu * v - (1.0 + fddot) * np.sin(x)
                   + force(x, v + fdot * np.sin(x), t))
    return _descriptor(K.NEWTON_FORM, params, force, phi_mean_square(params), 2, fun)


def field_for(system: str, params: Params, force: ForceModel, Phi: Optional[float] = None):
    if system == "full":
        return full_field(params, force)
    if system == "averaged":
        return averaged_field(params, force, Phi)
    raise ValueError(f"system must be 'full' or 'averaged', got {system!r}")
