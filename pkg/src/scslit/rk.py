"""Adaptive embedded Runge-Kutta integration (Dormand-Prince 5(4) pair).

Fifth-order propagation with a fourth-order embedded error estimate, PI step
control, FSAL reuse of the last stage, and hooks that let the caller reject
trial steps (e.g. when a proposed state violates an ordering constraint) or
stop the run early.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import StiffnessError

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# eB = B5 - B4 (embedded 4th-order weights)
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

#: raise from the RHS to signal that a trial stage left the admissible region
class RhsRejection(Exception):
    pass


@dataclass
class IntegrationResult:
    t: float
    y: np.ndarray
    status: str
    n_accepted: int
    n_rejected: int
    n_rhs: int


def integrate_adaptive(
    rhs: Callable,
    t0: float,
    y0,
    t_end: float,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    h0: Optional[float] = None,
    max_step: Optional[Callable[[float], float]] = None,
    guard: Optional[Callable[[float, np.ndarray], bool]] = None,
    on_accept: Optional[Callable] = None,
    stop_condition: Optional[Callable[[float, np.ndarray], Optional[str]]] = None,
    max_steps: int = 500_000,
    max_rejects: int = 80,
) -> IntegrationResult:
    """Integrate y' = rhs(t, y) from t0 to t_end.

    ``max_step`` maps the current time to a step cap. ``guard`` vets every
    accepted-by-error trial state; a False verdict rejects the step and
    halves h. ``stop_condition`` is evaluated on accepted states and ends
    the run early with its returned reason. ``on_accept(t, y, h, err)`` is
    called for every accepted step.
    """
    t = float(t0)
    y = np.array(y0, float)
    if t_end == t:
        return IntegrationResult(t, y, "target", 0, 0, 0)
    if t_end < t:
        raise ValueError("backward integration not supported")

    n_rhs = 0

    def call(tv, yv):
        nonlocal n_rhs
        n_rhs += 1
        return np.asarray(rhs(tv, yv), float)

    k = np.empty((7, len(y)))
    k[0] = call(t, y)
    if h0 is None:
        h0 = 1e-6 * (t_end - t0)
    h = float(h0)

    err_prev = 1.0
    accepted = 0
    rejected = 0
    rejects_in_row = 0
    fsal_valid = True

    for _ in range(max_steps):
        if t >= t_end:
            return IntegrationResult(t, y, "target", accepted, rejected, n_rhs)
        cap = t_end - t
        if max_step is not None:
            cap = min(cap, max_step(t))
        h = min(h, cap)
        if t + h == t:
            raise StiffnessError(
                "step size underflow at t=%r (h=%r)" % (t, h), last_state=(t, y)
            )
        try:
            if not fsal_valid:
                k[0] = call(t, y)
                fsal_valid = True
            for s in range(1, 7):
                ys = y + h * (k[:s].T @ _A[s])
                k[s] = call(t + _C[s] * h, ys)
            y_new = y + h * (k.T @ _B5)
            err_vec = h * (k.T @ _E)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            ok = err <= 1.0 and np.all(np.isfinite(y_new))
        except RhsRejection:
            err = np.inf
            ok = False
            fsal_valid = False
        if ok and guard is not None and not guard(t + h, y_new):
            ok = False
            err = max(err, 2.0)
        if ok:
            t_new = t + h
            # PI controller (propagating order 5)
            if err == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * err ** (-0.7 / 5.0) * err_prev ** (0.4 / 5.0)
                fac = min(5.0, max(0.2, fac))
            if rejects_in_row > 0:
                fac = min(1.0, fac)
            err_prev = max(err, 1e-10)
            t, y = t_new, y_new
            k[0] = k[6]  # FSAL
            h = h * fac
            accepted += 1
            rejects_in_row = 0
            if on_accept is not None:
                on_accept(t, y, h / fac, err)
            if stop_condition is not None:
                reason = stop_condition(t, y)
                if reason:
                    return IntegrationResult(t, y, reason, accepted, rejected, n_rhs)
        else:
            rejected += 1
            rejects_in_row += 1
            if rejects_in_row > max_rejects:
                raise StiffnessError(
                    "step repeatedly rejected at t=%r" % t, last_state=(t, y)
                )
            if np.isfinite(err) and err > 1.0:
                h = h * min(0.9, max(0.2, 0.9 * err ** (-0.2)))
            else:
                h = 0.5 * h
    raise StiffnessError("step budget exhausted at t=%r" % t, last_state=(t, y))
