"""Independent verification: the side-length map, a damped Newton solver on
it, and geometric trace checks.

The side-length map sends (d, a_1, ..., a_{n-3}) — positive scale and
ordered prevertices — to the lengths of the first n-2 polygon sides, side nu
being the integral of d * prod |x - a_k|^sigma_k between consecutive
prevertices. It is smooth and locally invertible on the ordered cone, which
makes Newton refinement on measured side lengths an oracle for the evolved
parameters that never touches the evolution equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import scmap
from .errors import (
    ConditioningError,
    DegeneracyError,
    DomainError,
    IntegrationError,
    StepDampingError,
)
from .geometry import distance_point_ray
from .quadrature import integrate_singular
from .state import AccessoryState, Trace


@dataclass
class SideLengthReport:
    """Finite side lengths, residuals against targets (when given), and a
    Jacobian condition estimate (when a solve produced one)."""

    lengths: np.ndarray
    targets: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None
    condition: Optional[float] = None


def _finite_side(x, e, d, nu, tol) -> float:
    p, q = x[nu], x[nu + 1]
    others = [k for k in range(len(x)) if k != nu and k != nu + 1]

    def f(s):
        val = np.ones_like(s)
        for k in others:
            val = val * np.abs(s - x[k]) ** e[k]
        return val

    try:
        return d * integrate_singular(
            f,
            (p, q),
            left_exp=e[nu],
            right_exp=e[nu + 1],
            tol=tol,
            singularities=[x[k] for k in others if e[k] < 0.0],
        ).real
    except IntegrationError as exc:
        raise IntegrationError(
            "side %d integration failed: %s" % (nu + 1, exc),
            interval=exc.interval,
            achieved=exc.achieved,
        ) from exc


def _unbounded_side(x, e, d, alpha_inf, right: bool, tol) -> float:
    """Length of the boundary piece beyond the last (or before the first)
    finite prevertex, through the prevertex at infinity.

    Substituting x = 1/u (right piece) or x = x_edge + 1 - 1/u (left piece)
    turns it into a finite integral whose u = 0 endpoint carries the Jacobi
    exponent alpha_inf - 1; finite only if alpha_inf > 0.
    """
    if alpha_inf <= 0.0:
        return np.inf
    if right:
        edge = len(x) - 1
        shift = [xk for k, xk in enumerate(x) if k != edge and xk != 0.0]
        exps = [e[k] for k, xk in enumerate(x) if k != edge and xk != 0.0]

        def f(u):
            val = np.ones_like(u)
            for xk, ek in zip(shift, exps):
                val = val * np.abs(1.0 - u * xk) ** ek
            return val

        sing = [1.0 / xk for xk in shift if xk < 0.0]
        return d * integrate_singular(
            f, (0.0, 1.0), left_exp=alpha_inf - 1.0, right_exp=e[edge],
            tol=tol, singularities=sing,
        ).real
    edge = 0
    x0 = x[edge]

    def f(u):
        val = np.ones_like(u)
        for k in range(len(x)):
            if k == edge:
                continue
            val = val * np.abs(1.0 - u * (1.0 + x0 - x[k])) ** e[k]
        return val

    sing = []
    for k in range(len(x)):
        if k == edge:
            continue
        w = 1.0 + x0 - x[k]
        if w != 0.0 and e[k] < 0.0:
            s = 1.0 / w
            if s > 0.0:
                sing.append(s)
    return d * integrate_singular(
        f, (0.0, 1.0), left_exp=alpha_inf - 1.0, right_exp=e[edge],
        tol=tol, singularities=sing,
    ).real


def _side_lengths_raw(
    x: np.ndarray, e: np.ndarray, d: float, tol: float, alpha_inf=None,
    include_unbounded: bool = False,
) -> np.ndarray:
    """Side lengths between consecutive finite prevertices, optionally
    followed by the two boundary pieces adjoining the prevertex at infinity."""
    n_side = len(x) - 1
    out = [
        _finite_side(x, e, d, nu, tol) for nu in range(n_side)
    ]
    if include_unbounded:
        out.append(_unbounded_side(x, e, d, alpha_inf, True, tol))
        out.append(_unbounded_side(x, e, d, alpha_inf, False, tol))
    return np.array(out)


def side_lengths(
    state: AccessoryState,
    d: Optional[float] = None,
    targets=None,
    tol: float = 1e-12,
    include_unbounded: bool = False,
) -> SideLengthReport:
    """Side lengths of the image polygon, one per pair of consecutive finite
    prevertices; ``d`` defaults to |c|.

    With ``include_unbounded`` the two boundary pieces adjoining the
    prevertex at infinity are appended (finite when alpha_inf > 0).
    """
    tab = state.prevertices
    if np.min(np.diff(tab.x)) <= 0.0:
        raise DegeneracyError("state has coincident prevertices")
    dd = abs(state.c) if d is None else float(d)
    lengths = _side_lengths_raw(
        tab.x, tab.e, dd, tol, alpha_inf=state.polygon.alpha_inf,
        include_unbounded=include_unbounded,
    )
    rep = SideLengthReport(lengths=lengths)
    if targets is not None:
        rep.targets = np.asarray(targets, float)
        rep.residuals = lengths - rep.targets
    return rep


def _phi(xvec, e, side_indices, alpha_inf, tol) -> np.ndarray:
    """Side-length map on the packed unknown vector [d, prevertices...]."""
    d = xvec[0]
    x = np.concatenate([xvec[1:], [0.0, 1.0]])
    need_unbounded = any(k >= len(x) - 1 for k in side_indices)
    lengths = _side_lengths_raw(
        x, e, d, tol, alpha_inf=alpha_inf, include_unbounded=need_unbounded
    )
    return lengths[list(side_indices)]


def _in_cone(xvec: np.ndarray) -> bool:
    if xvec[0] <= 0.0:
        return False
    pv = xvec[1:]
    return bool(np.all(np.diff(pv) > 0.0)) and bool(np.all(pv < 0.0))


def solve_prevertices(
    target_lengths,
    guess: AccessoryState,
    side_indices: Optional[Sequence[int]] = None,
    quad_tol: float = 1e-12,
    newton_tol: float = 1e-10,
    max_iter: int = 50,
    fd_step: float = 1e-6,
    history: Optional[list] = None,
) -> AccessoryState:
    """Newton refinement of (d, prevertices) so the selected side lengths
    match ``target_lengths``.

    ``side_indices`` defaults to the first n-2 sides in boundary order
    (those between consecutive finite prevertices). When the polygon has a
    straight vertex at the image of infinity, closure makes those lengths
    dependent; include index n-2 (the piece right of prevertex 1) or n-1
    (left of the first prevertex) to pin the solution.

    The Jacobian is formed by central finite differences; steps are damped
    (halved) until the iterate stays in the ordered cone and the residual
    does not grow. Pass ``history`` to record the residual norm per iterate.
    """
    tab = guess.prevertices
    e = tab.e
    alpha_inf = guess.polygon.alpha_inf
    moving = guess.moving_vector()
    order = np.argsort(np.argsort(moving, kind="stable"), kind="stable")
    # moving_vector is grouped by slit; the prevertex table wants sorted order
    sorted_vals = np.sort(moving)
    targets = np.asarray(target_lengths, float)
    if side_indices is None:
        side_indices = tuple(range(len(tab.x) - 1))
    side_indices = tuple(int(k) for k in side_indices)
    if len(targets) != len(side_indices):
        raise DomainError(
            "need %d target lengths, got %d" % (len(side_indices), len(targets))
        )
    if len(side_indices) != len(moving) + 1:
        raise DomainError(
            "system must be square: %d unknowns vs %d side constraints"
            % (len(moving) + 1, len(side_indices))
        )
    xvec = np.concatenate([[abs(guess.c)], sorted_vals])
    if not _in_cone(xvec):
        raise DomainError("guess is not inside the ordered cone")

    def phi(v):
        return _phi(v, e, side_indices, alpha_inf, quad_tol)

    res = phi(xvec) - targets
    if history is not None:
        history.append(float(np.max(np.abs(res))))
    for _ in range(max_iter):
        if np.max(np.abs(res)) <= newton_tol:
            break
        jac = np.empty((len(side_indices), len(xvec)))
        for j in range(len(xvec)):
            h = fd_step * (1.0 + abs(xvec[j]))
            xp = xvec.copy()
            xm = xvec.copy()
            xp[j] += h
            xm[j] -= h
            jac[:, j] = (phi(xp) - phi(xm)) / (2.0 * h)
        cond = np.linalg.cond(jac)
        if not np.isfinite(cond) or cond > 1e14:
            raise ConditioningError(
                "side-length Jacobian singular to tolerance (cond=%.3g)" % cond
            )
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError("side-length Jacobian solve failed") from exc
        lam = 1.0
        for _damp in range(60):
            trial = xvec + lam * step
            if _in_cone(trial):
                trial_res = phi(trial) - targets
                if np.max(np.abs(trial_res)) <= np.max(np.abs(res)) or lam < 1e-6:
                    break
            lam *= 0.5
        else:
            raise StepDampingError("Newton step could not stay in the ordered cone")
        xvec = xvec + lam * step
        res = phi(xvec) - targets
        if history is not None:
            history.append(float(np.max(np.abs(res))))
    else:
        raise StepDampingError(
            "Newton did not reach tolerance %g in %d iterations (residual %g)"
            % (newton_tol, max_iter, float(np.max(np.abs(res))))
        )
    # unsort back into the guess's packing (fixed..., slit triples...)
    new_moving = xvec[1:][order]
    sign = guess.c / abs(guess.c)
    return guess.with_moving_vector(new_moving, c=xvec[0] * sign)


@dataclass
class TraceVerification:
    """Maximal geometric deviations over (a sample of) a trace."""

    straightness: float
    ratio_deviation: float
    fixed_vertex_drift: float
    unit_point_drift: float
    ordering_violations: int
    length_vs_parameter: float
    samples: int

    def to_dict(self) -> dict:
        return {
            "straightness": self.straightness,
            "ratio_deviation": self.ratio_deviation,
            "fixed_vertex_drift": self.fixed_vertex_drift,
            "unit_point_drift": self.unit_point_drift,
            "ordering_violations": self.ordering_violations,
            "length_vs_parameter": self.length_vs_parameter,
            "samples": self.samples,
        }


def verify_trace(
    trace: Trace,
    ratios: Sequence[float] = None,
    max_samples: int = 40,
    quad_tol: float = 1e-11,
    ratio_window: float = 0.01,
) -> TraceVerification:
    """Geometric checks of an evolution trace against its stated intent:
    rectilinear slits, prescribed length ratios (for t past ratio_window of
    the final t), pinned vertex images, preserved prevertex ordering."""
    if not trace.snapshots:
        raise DomainError("empty trace")
    n = len(trace.snapshots)
    idx = sorted(set(np.linspace(0, n - 1, min(max_samples, n)).astype(int)))
    t_end = trace.final.t
    straight = 0.0
    ratio_dev = 0.0
    vert_drift = 0.0
    unit_drift = 0.0
    len_vs_t = 0.0
    violations = 0
    for k in idx:
        st = trace.snapshots[k]
        if st.min_gap() <= 0.0:
            violations += 1
            continue
        lengths = []
        for i, s in enumerate(st.slits):
            if s.degenerate:
                lengths.append(0.0)
                continue
            tip = scmap.slit_endpoint(st, i, quad_tol)
            straight = max(straight, distance_point_ray(tip, s.base_point, s.direction))
            lengths.append(abs(tip - s.base_point))
        if lengths:
            len_vs_t = max(len_vs_t, abs(lengths[0] - st.t))
        if ratios is not None and lengths and st.t >= ratio_window * t_end and lengths[0] > 0:
            for i in range(1, len(lengths)):
                ratio_dev = max(
                    ratio_dev, abs(lengths[i] / lengths[0] - ratios[i] / ratios[0])
                )
        for a, kvert in zip(st.fixed_prevertices, st.fixed_vertex_map):
            img = scmap.sc_map(st, a, quad_tol)
            vert_drift = max(vert_drift, abs(img - st.polygon.vertices[kvert]))
        unit_drift = max(
            unit_drift, abs(scmap.sc_map(st, 1.0, quad_tol) - st.polygon.unit_vertex)
        )
    return TraceVerification(
        straightness=straight,
        ratio_deviation=ratio_dev,
        fixed_vertex_drift=vert_drift,
        unit_point_drift=unit_drift,
        ordering_violations=violations,
        length_vs_parameter=len_vs_t,
        samples=len(idx),
    )
