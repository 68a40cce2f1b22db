"""Adaptive Runge-Kutta integration with dense output and event location.

The stepping itself happens in :mod:`kwlab._kernels`; this module chains
chunks of accepted steps into a :class:`Trajectory`, locates events on the
continuous extension and translates kernel status codes into exceptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels as K

CHUNK = 4096


class IntegrationError(RuntimeError):
    """Integration stopped early.  ``state`` is the last good point."""

    def __init__(self, message, t=None, y=None, trajectory=None):
        super().__init__(message)
        self.t = t
        self.y = None if y is None else np.array(y)
        self.trajectory = trajectory


class DivergenceError(IntegrationError):
    """The step budget ``max_steps`` was exhausted."""


class BlowUpError(IntegrationError):
    """The vector field or the solution became non-finite."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and step limits.

    ``max_step=None`` resolves per field to ``min(T / (64 k omega), 0.01)``.
    ``method`` is ``"dopri5"`` or ``"rk4"``; the latter uses ``step``
    (defaulting to the resolved ``max_step``) as a fixed step.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: Optional[float] = None
    max_steps: int = 10 ** 8
    method: str = "dopri5"
    step: Optional[float] = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.method not in ("dopri5", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")

    def resolve_max_step(self, rhs: "VectorField") -> float:
        if self.max_step is not None:
            return float(self.max_step)
        return rhs.default_max_step()


@dataclass(frozen=True, eq=False)
class VectorField:
    """What to integrate: a compiled kernel ``(kind, par)`` or a callable ``fun(t, y)``."""

    dim: int
    kind: int = -1
    par: Optional[np.ndarray] = None
    fun: Optional[Callable] = None
    period: float = 2 * math.pi
    fast_frequency: float = 1.0

    def __post_init__(self):
        if (self.par is None) == (self.fun is None):
            raise ValueError("give exactly one of par (compiled) or fun (python)")

    @classmethod
    def from_callable(cls, fun, dim, period=2 * math.pi, fast_frequency=1.0):
        return cls(dim=dim, fun=fun, period=period, fast_frequency=fast_frequency)

    @property
    def compiled(self) -> bool:
        return self.par is not None

    def default_max_step(self) -> float:
        return min(self.period / (64.0 * self.fast_frequency), 0.01)

    def __call__(self, t, y):
        y = np.asarray(y, dtype=float)
        if self.compiled:
            return K.field(self.kind, float(t), y, self.par)
        return np.asarray(self.fun(t, y), dtype=float)


@dataclass(frozen=True, eq=False)
class EventSpec:
    """Zero crossing of ``g(q, p, t)``.

    ``g`` receives arrays of node values and must broadcast.  ``direction``
    is +1 (rising), -1 (falling) or 0 (any).
    """

    g: Callable
    direction: int = 0
    terminal: bool = False
    name: str = ""

    @classmethod
    def level(cls, value, component="q", direction=0, terminal=False, name=""):
        if component == "q":
            g = lambda q, p, t: q - value  # noqa: E731
        elif component == "p":
            g = lambda q, p, t: p - value  # noqa: E731
        else:
            raise ValueError("component must be 'q' or 'p'")
        return cls(g, direction, terminal, name or f"{component}={value:g}")


def fall_events(terminal=True):
    """Events for the rod reaching the horizontal, q = pi/2 or 3 pi/2."""
    return (EventSpec.level(0.5 * math.pi, terminal=terminal, name="fall_low"),
            EventSpec.level(1.5 * math.pi, terminal=terminal, name="fall_high"))


class EventHit(NamedTuple):
    t: float
    y: np.ndarray
    which: int
    name: str


class Trajectory:
    """Accepted steps with their continuous extension.

    Nodes ``t`` are monotone (increasing for forward integration).  Step
    ``i`` covers ``[t[i], t[i+1]]``; ``h[i]`` is the step that was actually
    taken, which exceeds ``t[i+1] - t[i]`` only for a segment truncated at a
    terminal event.
    """

    def __init__(self, t, y, h, coeffs):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.h = np.asarray(h, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    @property
    def n_steps(self) -> int:
        return self.h.size

    @property
    def segments(self):
        return [(self.t[i], self.t[i + 1], self.y[i], self.y[i + 1]) for i in range(self.n_steps)]

    def __call__(self, t):
        """Dense state at time(s) ``t``; shape ``(dim,)`` or ``(len(t), dim)``."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        forward = self.t[-1] >= self.t[0]
        nodes = self.t if forward else -self.t
        key = ts if forward else -ts
        lo, hi = nodes[0], nodes[-1]
        if np.any(key < lo - 1e-12 * max(1.0, abs(lo))) or np.any(key > hi + 1e-12 * max(1.0, abs(hi))):
            raise ValueError("time outside the integrated span")
        if self.n_steps == 0:
            out = np.repeat(self.y[:1], ts.size, axis=0)
        else:
            idx = np.clip(np.searchsorted(nodes, key, side="right") - 1, 0, self.n_steps - 1)
            theta = ((ts - self.t[idx]) / self.h[idx])[:, None]
            r = self.coeffs[idx]
            out = self.y[idx] + theta * (r[:, 0] + (1 - theta) * (r[:, 1] + theta * (
                r[:, 2] + (1 - theta) * r[:, 3])))
            hit = np.searchsorted(nodes, key)
            hit = np.clip(hit, 0, nodes.size - 1)
            exact = nodes[hit] == key
            out[exact] = self.y[hit[exact]]
        return out[0] if np.ndim(t) == 0 else out

    def sample(self, n: int):
        """``n`` uniformly spaced times over the span and the states there."""
        ts = np.linspace(self.t0, self.t1, n)
        return ts, self(ts)

    def truncated(self, index: int, t_stop: float, y_stop):
        """Copy ending at ``t_stop`` inside step ``index``."""
        t = np.append(self.t[:index + 1], t_stop)
        y = np.vstack((self.y[:index + 1], y_stop))
        return Trajectory(t, y, self.h[:index + 1], self.coeffs[:index + 1])

    @staticmethod
    def concatenate(parts):
        parts = list(parts)
        t = np.concatenate([parts[0].t] + [p.t[1:] for p in parts[1:]])
        y = np.concatenate([parts[0].y] + [p.y[1:] for p in parts[1:]])
        h = np.concatenate([p.h for p in parts])
        c = np.concatenate([p.coeffs for p in parts])
        return Trajectory(t, y, h, c)


class Stats(NamedTuple):
    n_accepted: int
    n_rejected: int
    n_eval: int
    error_estimate: float


class IntegrationResult(NamedTuple):
    traj: Trajectory
    events_hit: list
    stats: Stats


def _initial(s0, t0):
    if hasattr(s0, "q") and hasattr(s0, "p"):
        return float(s0.t), np.array([s0.q, s0.p], dtype=float)
    return float(0.0 if t0 is None else t0), np.array(s0, dtype=float)


def _run_chunk(rhs, cfg, max_step, t, y, h, t1, budget, store):
    if rhs.compiled:
        return _advance(rhs, cfg, max_step, t, y, h, t1, budget, store)
    # overflow in a Python field is caught by the stepper's finiteness check
    with np.errstate(over="ignore", invalid="ignore"):
        return _advance(rhs, cfg, max_step, t, y, h, t1, budget, store)


def _advance(rhs, cfg, max_step, t, y, h, t1, budget, store):
    if cfg.method == "rk4":
        step = cfg.step if cfg.step is not None else max_step
        stepper = K.rk4_advance if rhs.compiled else K.rk4_advance_py
        kind, par = (rhs.kind, rhs.par) if rhs.compiled else (0, rhs.fun)
        status, t, y, n_acc, ts, ys, hs, rc = stepper(kind, par, t, y, step, t1, budget, store)
        return status, t, y, h, n_acc, 0, 4 * n_acc, 0.0, ts, ys, hs, rc
    stepper = K.dopri5_advance if rhs.compiled else K.dopri5_advance_py
    kind, par = (rhs.kind, rhs.par) if rhs.compiled else (0, rhs.fun)
    return stepper(kind, par, t, y, h, t1, cfg.rtol, cfg.atol, max_step, budget, store)


def _bisect_newton(fun, ta, tb, ga, gb, tol=1e-12, max_iter=80):
    """Root of ``fun`` in a sign-changing bracket: bisection, then secant-Newton."""
    for i in range(max_iter):
        if abs(tb - ta) <= tol:
            break
        if i < 20:
            tm = 0.5 * (ta + tb)
        else:
            tm = tb - gb * (tb - ta) / (gb - ga) if gb != ga else 0.5 * (ta + tb)
            if not (min(ta, tb) < tm < max(ta, tb)):
                tm = 0.5 * (ta + tb)
        gm = fun(tm)
        if gm == 0.0:
            return tm
        if (gm > 0) == (ga > 0):
            ta, ga = tm, gm
        else:
            tb, gb = tm, gm
    return tb if abs(gb) < abs(ga) else ta


def _scan_events(events, traj, offset, g_prev):
    """Crossings inside ``traj``; returns (hits with step index, last g values)."""
    hits = []
    last = []
    q, p = traj.y[:, 0], traj.y[:, 1]
    for j, ev in enumerate(events):
        g = np.asarray(ev.g(q, p, traj.t), dtype=float) * np.ones(traj.t.size)
        if g_prev is not None:
            g[0] = g_prev[j]
        last.append(g[-1])
        a, b = g[:-1], g[1:]
        rising = (a < 0) & (b >= 0)
        falling = (a > 0) & (b <= 0)
        mask = rising if ev.direction > 0 else falling if ev.direction < 0 else rising | falling
        for i in np.flatnonzero(mask):
            def gfun(tt, i=i):
                yy = traj(tt)
                return float(ev.g(yy[0], yy[1], tt))
            te = _bisect_newton(gfun, traj.t[i], traj.t[i + 1], a[i], b[i])
            hits.append((te, offset + i, j))
    return hits, np.array(last)


def integrate(rhs: VectorField, s0, t1: float, cfg: Optional[IntegratorConfig] = None,
              events: Sequence[EventSpec] = (), *, t0: Optional[float] = None,
              store: bool = True) -> IntegrationResult:
    """Integrate ``rhs`` from ``s0`` to ``t1``.

    ``s0`` is a :class:`~kwlab.model.State` or a plain state vector (with
    ``t0``).  Terminal events truncate the trajectory at the event time.

    Raises
    ------
    DivergenceError
        ``cfg.max_steps`` accepted steps did not reach ``t1``.
    BlowUpError
        A non-finite value appeared; the partial trajectory is attached.
    """
    cfg = cfg or IntegratorConfig()
    t, y = _initial(s0, t0)
    if t1 == t:
        raise ValueError("t1 must differ from the initial time")
    if y.size != rhs.dim:
        raise ValueError(f"state has {y.size} components, field expects {rhs.dim}")
    max_step = cfg.resolve_max_step(rhs)
    events = list(events)
    store = store or bool(events)

    parts = []
    hits = []
    g_prev = None
    h = 0.0
    n_acc = n_rej = n_eval = 0
    err = 0.0
    while True:
        budget = min(CHUNK, cfg.max_steps - n_acc)
        (status, t, y, h, a_, r_, e_, es, ts, ys, hs, rc) = _run_chunk(
            rhs, cfg, max_step, t, y, h, t1, budget, store)
        n_acc += a_
        n_rej += r_
        n_eval += e_
        err += es
        if store:
            part = Trajectory(ts, ys, hs, rc)
            offset = sum(pp.n_steps for pp in parts)
            parts.append(part)
            if events and part.n_steps:
                new, g_prev = _scan_events(events, part, offset, g_prev)
                hits.extend(new)
                terminal = [hh for hh in new if events[hh[2]].terminal]
                if terminal:
                    break
        if status == K.DONE:
            break
        if status == K.NONFINITE:
            traj = Trajectory.concatenate(parts) if store else None
            raise BlowUpError(f"non-finite state or field near t={t:.17g}", t, y, traj)
        if status == K.STEP_UNDERFLOW:
            traj = Trajectory.concatenate(parts) if store else None
            raise IntegrationError(f"step size underflow at t={t:.17g}", t, y, traj)
        if n_acc >= cfg.max_steps:
            traj = Trajectory.concatenate(parts) if store else None
            raise DivergenceError(f"max_steps={cfg.max_steps} exceeded at t={t:.17g}", t, y, traj)

    stats = Stats(n_acc, n_rej, n_eval, err)
    if not store:
        traj = Trajectory([t], [y], np.empty(0), np.empty((0, 4, y.size)))
        return IntegrationResult(traj, [], stats)

    traj = Trajectory.concatenate(parts)
    direction = 1.0 if t1 >= traj.t0 else -1.0
    hits.sort(key=lambda hh: (direction * hh[0], hh[2]))
    out = []
    for te, step, j in hits:
        ye = traj(te)
        out.append(EventHit(float(te), ye, j, events[j].name))
        if events[j].terminal:
            traj = traj.truncated(step, te, ye)
            break
    return IntegrationResult(traj, out, stats)


def propagate(rhs: VectorField, y0, t0: float, t1: float,
              cfg: Optional[IntegratorConfig] = None):
    """Final state vector and error estimate, without storing the path."""
    res = integrate(rhs, y0, t1, cfg, t0=t0, store=False)
    return res.traj.y[-1], res.stats


def flow_map(rhs: VectorField, s0, T: float, cfg: Optional[IntegratorConfig] = None):
    """State at ``s0.t + T``."""
    from .model import State

    t0, y0 = _initial(s0, None)
    y, _ = propagate(rhs, y0, t0, t0 + T, cfg)
    return State(float(y[0]), float(y[1]), t0 + T)
