"""Adaptive Dormand-Prince 5(4) integrator for complex array ODEs.

scipy's solve_ivp works on flat real vectors and offers no hook between
steps; here the state keeps its shape and an optional ``project`` callback
(used to re-symmetrise Hermitian matrices) is applied after every accepted
step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B4


class StepSizeUnderflow(RuntimeError):
    def __init__(self, t):
        super().__init__(f"step size underflow at t = {t:.6e} s")
        self.t = t


@dataclass
class Solution:
    t: np.ndarray
    y: list
    n_steps: int
    n_rejected: int


def solve(rhs, y0, t_eval, rtol=1e-9, atol=1e-12, dt_max=np.inf, dt0=None, project=None, stops=None):
    """Integrate dy/dt = rhs(t, y) and return y at the times in ``t_eval``.

    ``t_eval`` must be increasing and start at the initial time. ``stops`` is
    an optional dict {time: callable(y) -> y} of instantaneous maps applied
    when the integration reaches that time (pulses); the maps act after the
    state at that time has been recorded.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or len(t_eval) == 0:
        raise ValueError("t_eval must be a non-empty 1-d array")
    if np.any(np.diff(t_eval) < 0):
        raise ValueError("t_eval must be non-decreasing")
    stops = dict(stops or {})
    t = float(t_eval[0])
    y = np.array(y0, dtype=complex)
    t_end = float(t_eval[-1])
    out = [y.copy()]
    if t in stops:
        y = stops.pop(t)(y)
    marks = sorted(set(float(x) for x in t_eval[1:]) | set(k for k in stops if t < k <= t_end))
    span = max(t_end - t, 1e-300)
    h = dt0 if dt0 is not None else min(dt_max, span * 1e-3)
    n_steps = n_rej = 0
    k1 = rhs(t, y)
    for mark in marks:
        while t < mark:
            h = min(h, dt_max, mark - t)
            if h <= 1e-14 * max(abs(t), span):
                raise StepSizeUnderflow(t)
            ks = [k1]
            for i in range(1, 7):
                yi = y + h * sum(a * k for a, k in zip(_A[i], ks) if a != 0)
                ks.append(rhs(t + _C[i] * h, yi))
            y_new = y + h * sum(b * k for b, k in zip(_B, ks) if b != 0)
            err = h * sum(e * k for e, k in zip(_E, ks) if e != 0)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = float(np.sqrt(np.mean((np.abs(err) / scale) ** 2)))
            if en <= 1.0:
                t = t + h if mark - t - h > 1e-15 * span else mark
                y = project(y_new) if project is not None else y_new
                k1 = rhs(t, y) if project is not None else ks[6]
                n_steps += 1
                fac = 0.9 * en ** (-0.2) if en > 0 else 5.0
                h *= min(5.0, max(0.2, fac))
            else:
                n_rej += 1
                h *= max(0.1, 0.9 * en ** (-0.2))
        for _ in range(int(np.sum(t_eval[1:] == mark))):
            out.append(y.copy())
        if mark in stops:
            y = stops.pop(mark)(y)
            k1 = rhs(t, y)
    return Solution(t_eval.copy(), out, n_steps, n_rej)
