"""Adaptive Dormand-Prince 8(5,3) integrator with dense output, compiled with numba.

The Butcher tableau is taken from scipy (``dop853_coefficients``); the stepping
loop runs in nopython mode so that trajectories spanning 10^4 to 10^5 carrier
periods stay cheap. The right-hand side must itself be an ``@njit`` function
with signature ``rhs(t, y, p, aux, dy)`` writing the derivative into ``dy``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _coef

_N_STAGES = _coef.N_STAGES
_A = np.ascontiguousarray(_coef.A, dtype=np.float64)
_B = np.ascontiguousarray(_coef.B, dtype=np.float64)
_C = np.ascontiguousarray(_coef.C, dtype=np.float64)
_E3 = np.ascontiguousarray(_coef.E3, dtype=np.float64)
_E5 = np.ascontiguousarray(_coef.E5, dtype=np.float64)
_D = np.ascontiguousarray(_coef.D, dtype=np.float64)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_MAX_STEPS = 2
STATUS_NONFINITE = 3


class IntegrationError(RuntimeError):
    """Raised when the adaptive stepper cannot continue."""

    def __init__(self, message: str, t_fail: float):
        super().__init__(message)
        self.t_fail = t_fail


@dataclass(frozen=True)
class StepStats:
    n_accepted: int
    n_rejected: int
    n_rhs: int


@njit(cache=True)
def _rms(v):
    s = 0.0
    for i in range(v.shape[0]):
        s += v[i] * v[i]
    return np.sqrt(s / v.shape[0])


@njit(cache=True)
def _initial_step(rhs, t0, y0, f0, p, aux, rtol, atol, max_step, t_span):
    n = y0.shape[0]
    scale = np.empty(n)
    for i in range(n):
        scale[i] = atol + abs(y0[i]) * rtol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, t_span, max_step)
    y1 = y0 + h0 * f0
    f1 = np.empty(n)
    rhs(t0 + h0, y1, p, aux, f1)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, t_span, max_step)


@njit(cache=True)
def _dop853(rhs, t0, y0, t_end, t_eval, rtol, atol, max_step, first_step, max_steps,
            p, aux, A, B, C, E3, E5, D, out):
    n = y0.shape[0]
    n_st = B.shape[0]
    K = np.zeros((16, n))
    F = np.zeros((7, n))
    ytmp = np.empty(n)
    err5 = np.empty(n)
    err3 = np.empty(n)

    t = t0
    y = y0.copy()
    f = np.empty(n)
    rhs(t, y, p, aux, f)
    n_rhs = 1
    if first_step > 0.0:
        h_abs = min(first_step, max_step)
    else:
        h_abs = _initial_step(rhs, t0, y0, f, p, aux, rtol, atol, max_step, t_end - t0)
        n_rhs += 1

    n_eval = t_eval.shape[0]
    k_eval = 0
    while k_eval < n_eval and t_eval[k_eval] <= t0:
        for i in range(n):
            out[k_eval, i] = y0[i]
        k_eval += 1

    n_acc = 0
    n_rej = 0
    y_new = np.empty(n)
    f_new = np.empty(n)
    while t < t_end:
        if n_acc + n_rej >= max_steps:
            return STATUS_MAX_STEPS, n_acc, n_rej, n_rhs, t
        min_step = 10.0 * abs(np.nextafter(t, np.inf) - t)
        if h_abs > max_step:
            h_abs = max_step
        rejected = False
        while True:
            if h_abs < min_step:
                return STATUS_STEP_UNDERFLOW, n_acc, n_rej, n_rhs, t
            t_new = t + h_abs
            if t_new > t_end:
                t_new = t_end
            h = t_new - t
            for i in range(n):
                K[0, i] = f[i]
            for s in range(1, n_st):
                for i in range(n):
                    acc = 0.0
                    for j in range(s):
                        acc += A[s, j] * K[j, i]
                    ytmp[i] = y[i] + h * acc
                rhs(t + C[s] * h, ytmp, p, aux, K[s])
            for i in range(n):
                acc = 0.0
                for j in range(n_st):
                    acc += B[j] * K[j, i]
                y_new[i] = y[i] + h * acc
            rhs(t_new, y_new, p, aux, f_new)
            n_rhs += n_st
            for i in range(n):
                K[n_st, i] = f_new[i]
            e5 = 0.0
            e3 = 0.0
            finite = True
            for i in range(n):
                if not np.isfinite(y_new[i]):
                    finite = False
                sc = atol + max(abs(y[i]), abs(y_new[i])) * rtol
                a5 = 0.0
                a3 = 0.0
                for j in range(n_st + 1):
                    a5 += E5[j] * K[j, i]
                    a3 += E3[j] * K[j, i]
                err5[i] = a5 / sc
                err3[i] = a3 / sc
                e5 += err5[i] * err5[i]
                e3 += err3[i] * err3[i]
            if not finite:
                err_norm = np.inf
            elif e5 == 0.0 and e3 == 0.0:
                err_norm = 0.0
            else:
                err_norm = abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * n)
            if err_norm < 1.0:
                if err_norm == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * err_norm ** (-1.0 / 8.0))
                if rejected:
                    factor = min(1.0, factor)
                h_abs *= factor
                break
            if not np.isfinite(err_norm) and h_abs < 4.0 * min_step:
                return STATUS_NONFINITE, n_acc, n_rej, n_rhs, t
            h_abs *= max(MIN_FACTOR, SAFETY * err_norm ** (-1.0 / 8.0)) if np.isfinite(err_norm) else MIN_FACTOR
            rejected = True
            n_rej += 1

        if k_eval < n_eval and t_eval[k_eval] <= t_new:
            # dense output: three extra stages, then the 7-term interpolant
            for s in range(n_st + 1, 16):
                for i in range(n):
                    acc = 0.0
                    for j in range(s):
                        acc += A[s, j] * K[j, i]
                    ytmp[i] = y[i] + h * acc
                rhs(t + C[s] * h, ytmp, p, aux, K[s])
            n_rhs += 16 - n_st - 1
            for i in range(n):
                dy = y_new[i] - y[i]
                F[0, i] = dy
                F[1, i] = h * K[0, i] - dy
                F[2, i] = 2.0 * dy - h * (f_new[i] + K[0, i])
                for r in range(4):
                    acc = 0.0
                    for j in range(16):
                        acc += D[r, j] * K[j, i]
                    F[3 + r, i] = h * acc
            while k_eval < n_eval and t_eval[k_eval] <= t_new:
                x = (t_eval[k_eval] - t) / h
                for i in range(n):
                    v = 0.0
                    for r in range(6, -1, -1):
                        v += F[r, i]
                        if (6 - r) % 2 == 0:
                            v *= x
                        else:
                            v *= 1.0 - x
                    out[k_eval, i] = v + y[i]
                k_eval += 1

        t = t_new
        for i in range(n):
            y[i] = y_new[i]
            f[i] = f_new[i]
        n_acc += 1
    return STATUS_OK, n_acc, n_rej, n_rhs, t


def solve(rhs, y0, t_span, t_eval, p, aux=None, *, rtol=1e-10, atol=1e-12,
          max_step=np.inf, first_step=0.0, max_steps=50_000_000):
    """Integrate ``y' = rhs(t, y)`` over ``t_span`` and sample at ``t_eval``.

    ``t_eval`` must be sorted and lie inside ``t_span``. Returns the sampled
    states with shape ``(len(t_eval), len(y0))`` and a :class:`StepStats`.
    Raises :class:`IntegrationError` on step-size underflow or step budget
    exhaustion, carrying the time at which integration stopped.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    y0 = np.ascontiguousarray(y0, dtype=np.float64)
    t_eval = np.ascontiguousarray(t_eval, dtype=np.float64)
    if t_eval.size and (np.any(np.diff(t_eval) < 0) or t_eval[0] < t0 or t_eval[-1] > t1):
        raise ValueError("t_eval must be sorted and within t_span")
    if aux is None:
        aux = np.zeros((2, 1))
    p = np.ascontiguousarray(p, dtype=np.float64)
    aux = np.ascontiguousarray(aux, dtype=np.float64)
    out = np.full((t_eval.size, y0.size), np.nan)
    status, n_acc, n_rej, n_rhs, t_stop = _dop853(
        rhs, t0, y0, t1, t_eval, float(rtol), float(atol), float(max_step),
        float(first_step), int(max_steps), p, aux, _A, _B, _C, _E3, _E5, _D, out)
    if status == STATUS_STEP_UNDERFLOW:
        raise IntegrationError(f"step size underflow at t = {t_stop:.17g} s", t_stop)
    if status == STATUS_MAX_STEPS:
        raise IntegrationError(f"step budget of {max_steps} exhausted at t = {t_stop:.17g} s", t_stop)
    if status == STATUS_NONFINITE:
        raise IntegrationError(f"non-finite state at t = {t_stop:.17g} s", t_stop)
    return out, StepStats(n_acc, n_rej, n_rhs)
