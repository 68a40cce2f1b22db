"""Compiled vector fields and Runge-Kutta steppers.

Every built-in field is selected by an integer ``kind`` and a flat float64
parameter vector ``par`` so that a single cached numba specialisation covers
all of them.  The layout of ``par`` is::

    par[0] mu      par[1] k      par[2] omega    par[3] a     par[4] Phi
    par[5] force kind            par[6:] force parameters

Force kinds all have the shape ``g(t) * cos(q)``:

    FORCE_ZERO      no parameters
    FORCE_HARMONIC  c, A                          g = c + A sin t
    FORCE_SPLINE    period, n, x[0..n], c[4n]     g = periodic cubic spline
    FORCE_DESIGN    A, mu, k, omega, a            g = h(t) realising q = pi + A sin t

Steppers are written against the module-global ``field_into``; the pure
Python twin used for arbitrary callables is the same code object rebound to
a different ``field_into`` (see :func:`python_stepper`).
"""

import math
import types

import numpy as np
from numba import njit

FULL = 0
AVERAGED = 1
FULL_VARIATIONAL = 2
AVERAGED_VARIATIONAL = 3
NEWTON_FORM = 4

FORCE_ZERO = 0
FORCE_HARMONIC = 1
FORCE_SPLINE = 2
FORCE_DESIGN = 3

PAR_FORCE = 5

# stepper status codes
DONE = 0
CHUNK_FULL = 1
NONFINITE = 2
STEP_UNDERFLOW = 3


@njit(cache=True, nogil=True)
def design_profile(t, amp, mu, k, omega, a):
    """h(t) that makes q = pi + amp*sin(t) an exact motion (force enters as h cos q)."""
    x = amp * math.sin(t)
    qd = amp * math.cos(t)
    fddot = -a * omega * omega * k * math.sin(omega * k * t)
    # q = pi + x: sin q = -sin x, cos q = -cos x (exact zero force when amp = 0)
    return (-x + mu * qd - (1.0 + fddot) * math.sin(x)) / -math.cos(x) + 0.0


@njit(cache=True, nogil=True)
def force_profile(t, par):
    kind = int(par[PAR_FORCE])
    if kind == FORCE_ZERO:
        return 0.0
    if kind == FORCE_HARMONIC:
        return par[6] + par[7] * math.sin(t)
    if kind == FORCE_SPLINE:
        period = par[6]
        n = int(par[7])
        x0 = par[8]
        tau = x0 + (t - x0) % period
        lo = 0
        hi = n
        # breakpoints live in par[8 : 9 + n]
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if par[8 + mid] <= tau:
                lo = mid
            else:
                hi = mid
        dx = tau - par[8 + lo]
        base = 9 + n + 4 * lo
        return ((par[base] * dx + par[base + 1]) * dx + par[base + 2]) * dx + par[base + 3]
    if kind == FORCE_DESIGN:
        return design_profile(t, par[6], par[7], par[8], par[9], par[10])
    return math.nan


@njit(cache=True, nogil=True)
def field_into(kind, t, y, par, out):
    """Evaluate field ``kind`` at ``(t, y)`` into ``out`` and return it."""
    mu = par[0]
    k = par[1]
    omega = par[2]
    a = par[3]
    q = y[0]
    p = y[1]
    s = math.sin(q)
    c = math.cos(q)
    g = force_profile(t, par)

    if kind == FULL or kind == FULL_VARIATIONAL:
        phi = a * omega * math.cos(omega * k * t)
        out[0] = p - phi * s
        out[1] = -mu * p + (mu * s + p * c) * phi - s - phi * phi * s * c + g * c
        if kind == FULL_VARIATIONAL:
            j00 = -phi * c
            j01 = 1.0
            j10 = (mu * c - p * s) * phi - c - phi * phi * (c * c - s * s) - g * s
            j11 = -mu + phi * c
            out[2] = j00 * y[2] + j01 * y[4]
            out[3] = j00 * y[3] + j01 * y[5]
            out[4] = j10 * y[2] + j11 * y[4]
            out[5] = j10 * y[3] + j11 * y[5]
        return out

    if kind == AVERAGED or kind == AVERAGED_VARIATIONAL:
        big_phi = par[4]
        out[0] = p
        out[1] = -mu * p - s - big_phi * s * c + g * c
        if kind == AVERAGED_VARIATIONAL:
            j10 = -c - big_phi * (c * c - s * s) - g * s
            j11 = -mu
            out[2] = y[4]
            out[3] = y[5]
            out[4] = j10 * y[2] + j11 * y[4]
            out[5] = j10 * y[3] + j11 * y[5]
        return out

    if kind == NEWTON_FORM:
        # y = (x, xdot)
        fddot = -a * omega * omega * k * math.sin(omega * k * t)
        out[0] = p
        out[1] = -mu * p - (1.0 + fddot) * s + g * c
        return out

    out[:] = math.nan
    return out


@njit(cache=True, nogil=True)
def field(kind, t, y, par):
    return field_into(kind, t, y, par, np.empty(y.shape[0]))


@njit(cache=True, nogil=True)
def dopri5_advance(kind, par, t, y, h, t_end, rtol, atol, max_step, max_steps, store):
    """Advance with the Dormand-Prince 5(4) pair for at most ``max_steps`` steps.

    Returns ``(status, t, y, h_next, n_accepted, n_rejected, n_eval, err_sum,
    ts, ys, hs, rc)``.  When ``store`` is true, ``rc[i]`` holds the four
    non-trivial continuous-extension vectors of step ``i``.

    Stage vectors live in preallocated buffers; the loop body allocates
    nothing, which roughly halves the cost of a step for two-dimensional
    fields.
    """
    n = y.shape[0]
    cap = max_steps + 1 if store else 1
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    hs = np.empty(cap)
    rc = np.empty((cap, 4, n))
    ts[0] = t
    ys[0, :] = y
    y = y.copy()
    y_new = np.empty(n)
    tmp = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)

    direction = 1.0 if t_end >= t else -1.0
    n_acc = 0
    n_rej = 0
    n_eval = 1
    err_sum = 0.0

    field_into(kind, t, y, par, k1)
    for i in range(n):
        if not math.isfinite(k1[i]):
            return NONFINITE, t, y, h, 0, 0, n_eval, 0.0, ts[:1], ys[:1], hs[:0], rc[:0]

    span = abs(t_end - t)
    if span == 0.0:
        return DONE, t, y, h, 0, 0, n_eval, 0.0, ts[:1], ys[:1], hs[:0], rc[:0]

    if h == 0.0:
        # starting step from the norms of y and f
        d0 = 0.0
        d1 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(y[i])
            d0 += (y[i] / sc) ** 2
            d1 += (k1[i] / sc) ** 2
        d0 = math.sqrt(d0 / n)
        d1 = math.sqrt(d1 / n)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, max_step, span)
        for i in range(n):
            tmp[i] = y[i] + direction * h0 * k1[i]
        field_into(kind, t + direction * h0, tmp, par, k2)
        n_eval += 1
        d2 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(y[i])
            d2 += ((k2[i] - k1[i]) / sc) ** 2
        d2 = math.sqrt(d2 / n) / h0
        dm = max(d1, d2)
        h1 = max(1e-6, h0 * 1e-3) if dm <= 1e-15 else (0.01 / dm) ** 0.2
        h = min(100.0 * h0, h1)
    h = abs(h)

    status = CHUNK_FULL
    rejected = False
    while n_acc < max_steps:
        remaining = direction * (t_end - t)
        if remaining <= 0.0:
            status = DONE
            break
        habs = min(h, max_step)
        last = False
        if habs >= remaining * (1.0 - 1e-13):
            habs = remaining
            last = True
        hh = direction * habs

        for i in range(n):
            tmp[i] = y[i] + hh * (0.2 * k1[i])
        field_into(kind, t + 0.2 * hh, tmp, par, k2)
        for i in range(n):
            tmp[i] = y[i] + hh * (3.0 / 40.0 * k1[i] + 9.0 / 40.0 * k2[i])
        field_into(kind, t + 0.3 * hh, tmp, par, k3)
        for i in range(n):
            tmp[i] = y[i] + hh * (44.0 / 45.0 * k1[i] - 56.0 / 15.0 * k2[i] + 32.0 / 9.0 * k3[i])
        field_into(kind, t + 0.8 * hh, tmp, par, k4)
        for i in range(n):
            tmp[i] = y[i] + hh * (19372.0 / 6561.0 * k1[i] - 25360.0 / 2187.0 * k2[i]
                                  + 64448.0 / 6561.0 * k3[i] - 212.0 / 729.0 * k4[i])
        field_into(kind, t + 8.0 / 9.0 * hh, tmp, par, k5)
        for i in range(n):
            tmp[i] = y[i] + hh * (9017.0 / 3168.0 * k1[i] - 355.0 / 33.0 * k2[i]
                                  + 46732.0 / 5247.0 * k3[i] + 49.0 / 176.0 * k4[i]
                                  - 5103.0 / 18656.0 * k5[i])
        field_into(kind, t + hh, tmp, par, k6)
        for i in range(n):
            y_new[i] = y[i] + hh * (35.0 / 384.0 * k1[i] + 500.0 / 1113.0 * k3[i]
                                    + 125.0 / 192.0 * k4[i] - 2187.0 / 6784.0 * k5[i]
                                    + 11.0 / 84.0 * k6[i])
        t_new = t_end if last else t + hh
        field_into(kind, t_new, y_new, par, k7)
        n_eval += 6

        ok = True
        for i in range(n):
            if not (math.isfinite(y_new[i]) and math.isfinite(k7[i])):
                ok = False
        if not ok:
            status = NONFINITE
            break

        err = 0.0
        emax = 0.0
        for i in range(n):
            e = hh * (71.0 / 57600.0 * k1[i] - 71.0 / 16695.0 * k3[i] + 71.0 / 1920.0 * k4[i]
                      - 17253.0 / 339200.0 * k5[i] + 22.0 / 525.0 * k6[i] - 1.0 / 40.0 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            err += (e / sc) ** 2
            emax = max(emax, abs(e))
        err = math.sqrt(err / n)

        if err <= 1.0:
            if store:
                for i in range(n):
                    r2 = y_new[i] - y[i]
                    r3 = hh * k1[i] - r2
                    rc[n_acc, 0, i] = r2
                    rc[n_acc, 1, i] = r3
                    rc[n_acc, 2, i] = r2 - hh * k7[i] - r3
                    rc[n_acc, 3, i] = hh * (-12715105075.0 / 11282082432.0 * k1[i]
                                            + 87487479700.0 / 32700410799.0 * k3[i]
                                            - 10690763975.0 / 1880347072.0 * k4[i]
                                            + 701980252875.0 / 199316789632.0 * k5[i]
                                            - 1453857185.0 / 822651844.0 * k6[i]
                                            + 69997945.0 / 29380423.0 * k7[i])
                    ys[n_acc + 1, i] = y_new[i]
                hs[n_acc] = hh
                ts[n_acc + 1] = t_new
            n_acc += 1
            err_sum += emax
            t = t_new
            y, y_new = y_new, y
            k1, k7 = k7, k1
            fac = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** -0.2))
            if rejected:
                fac = min(fac, 1.0)
            rejected = False
            if not last:
                h = habs * fac
        else:
            n_rej += 1
            rejected = True
            h = habs * max(0.2, 0.9 * err ** -0.2)
            if h < 1e-14 * max(1.0, abs(t)):
                status = STEP_UNDERFLOW
                break
    if status == CHUNK_FULL and direction * (t_end - t) <= 0.0:
        status = DONE

    m = n_acc if store else 0
    return (status, t, y, h, n_acc, n_rej, n_eval, err_sum,
            ts[:m + 1], ys[:m + 1], hs[:m], rc[:m])


@njit(cache=True, nogil=True)
def rk4_advance(kind, par, t, y, h, t_end, max_steps, store):
    """Classical fixed-step RK4 with a cubic Hermite interpolant.

    The Hermite data is stored in the same four-vector form as DOPRI5 with
    the fifth-order correction set to zero.
    """
    n = y.shape[0]
    cap = max_steps + 1 if store else 1
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    hs = np.empty(cap)
    rc = np.empty((cap, 4, n))
    ts[0] = t
    ys[0, :] = y
    y = y.copy()
    y_new = np.empty(n)
    tmp = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    direction = 1.0 if t_end >= t else -1.0
    h = abs(h)
    n_acc = 0
    status = CHUNK_FULL
    field_into(kind, t, y, par, k1)
    while n_acc < max_steps:
        remaining = direction * (t_end - t)
        if remaining <= 0.0:
            status = DONE
            break
        habs = h
        last = False
        if habs >= remaining * (1.0 - 1e-13):
            habs = remaining
            last = True
        hh = direction * habs
        for i in range(n):
            tmp[i] = y[i] + 0.5 * hh * k1[i]
        field_into(kind, t + 0.5 * hh, tmp, par, k2)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * hh * k2[i]
        field_into(kind, t + 0.5 * hh, tmp, par, k3)
        for i in range(n):
            tmp[i] = y[i] + hh * k3[i]
        field_into(kind, t + hh, tmp, par, k4)
        for i in range(n):
            y_new[i] = y[i] + hh / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        t_new = t_end if last else t + hh
        field_into(kind, t_new, y_new, par, k5)
        ok = True
        for i in range(n):
            if not (math.isfinite(y_new[i]) and math.isfinite(k5[i])):
                ok = False
        if not ok:
            status = NONFINITE
            break
        if store:
            for i in range(n):
                r2 = y_new[i] - y[i]
                r3 = hh * k1[i] - r2
                rc[n_acc, 0, i] = r2
                rc[n_acc, 1, i] = r3
                rc[n_acc, 2, i] = r2 - hh * k5[i] - r3
                rc[n_acc, 3, i] = 0.0
                ys[n_acc + 1, i] = y_new[i]
            hs[n_acc] = hh
            ts[n_acc + 1] = t_new
        n_acc += 1
        t = t_new
        y, y_new = y_new, y
        k1, k5 = k5, k1
    if status == CHUNK_FULL and direction * (t_end - t) <= 0.0:
        status = DONE
    m = n_acc if store else 0
    return status, t, y, n_acc, ts[:m + 1], ys[:m + 1], hs[:m], rc[:m]


def _python_field_into(kind, t, y, par, out):
    # ``par`` is the user callable on this path; ``kind`` is ignored
    out[:] = np.asarray(par(t, y), dtype=float)
    return out


def python_stepper(compiled):
    """Plain-Python twin of a compiled stepper that calls ``par(t, y)`` as its field."""
    src = compiled.py_func
    namespace = dict(src.__globals__)
    namespace["field_into"] = _python_field_into
    return types.FunctionType(src.__code__, namespace, src.__name__, src.__defaults__)


dopri5_advance_py = python_stepper(dopri5_advance)
rk4_advance_py = python_stepper(rk4_advance)
