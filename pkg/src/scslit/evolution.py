"""Evolution of the accessory parameters while the slits grow.

The independent variable is the length of slit 1: the raw control weights
(which apportion the boundary driving among the slits so prescribed
growth-rate ratios hold) are rescaled so that dL_1/dt = 1 identically. The
run starts from an epsilon-regularized split of each coincident base/tip
triple and stops either at the target length or when prevertices begin to
coalesce (tips reaching the far boundary), after which clusters can be
merged into single prevertices of the limiting map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import scmap
from .errors import ConfigError, DegeneracyError, DomainError, StiffnessError
from .rk import RhsRejection, integrate_adaptive
from .state import AccessoryState, PolygonSpec, SlitGroup, Trace

DEFAULT_ODE_TOL = 1e-10
DEFAULT_EPSILON = 1e-12
DEFAULT_MERGE_TOL = 1e-9
DEFAULT_CLUSTER_TOL = 1e-4


@dataclass(frozen=True)
class SlitPlan:
    """Growth plan: per-slit speed ratios plus run-level knobs.

    ``ratios[i]`` is the growth rate of slit i relative to the others (only
    ratios matter; the conventional normalization sets the last entry to 1).
    ``target_length`` is the final length of slit 1.
    """

    ratios: tuple
    target_length: float
    epsilon: float = DEFAULT_EPSILON
    merge_tol: float = DEFAULT_MERGE_TOL
    cluster_tol: float = DEFAULT_CLUSTER_TOL

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if not self.ratios:
            raise ConfigError("plan needs at least one slit ratio")
        if any(r <= 0.0 for r in self.ratios):
            raise ConfigError("speed ratios must be positive")
        if self.target_length < 0.0:
            raise ConfigError("target length must be nonnegative")
        if self.epsilon <= 0.0:
            raise ConfigError("regularization epsilon must be positive")


@dataclass(frozen=True)
class ControlVector:
    """Normalized control weights (sum 1) and the rescale factor that turns
    the evolution parameter into the length of slit 1."""

    weights: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        w = np.array(self.weights, float)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        if np.any(w < 0.0):
            raise DomainError("control weights must be nonnegative")

    def effective(self) -> np.ndarray:
        return self.scale * self.weights


@dataclass(frozen=True)
class StateDerivative:
    """Time derivative of the moving parameters; d(ln c)/dt is real."""

    fixed: np.ndarray
    slits: np.ndarray  # (m, 3) rows (da1, dlam, da2)
    dlogc: float

    def pack(self) -> np.ndarray:
        return np.concatenate([self.fixed, self.slits.ravel(), [self.dlogc]])


# ---------------------------------------------------------------------------
# array views of a state


def _split_arrays(state: AccessoryState):
    """(afix, sfix, stat_x, stat_s, trips, sigb) raw arrays of a state."""
    poly = state.polygon
    n = poly.n
    afix = np.array(state.fixed_prevertices, float)
    sfix = np.array([poly.sigma(k) for k in state.fixed_vertex_map], float)
    stat_x = np.array([0.0, 1.0])
    stat_s = np.array([poly.sigma(n - 3), poly.sigma(n - 2)], float)
    trips = np.array([[s.a1, s.lam, s.a2] for s in state.slits], float)
    sigb = np.array([[s.sigma1, s.sigma2] for s in state.slits], float)
    return afix, sfix, stat_x, stat_s, trips, sigb


def _speed_factor_arrays(r, lam, trips, sigb, afix, sfix, stat_x, stat_s):
    """Tip speed factor of slit r from raw arrays."""
    lr = lam[r]
    val = abs(lr) * (lr - 1.0) ** 2
    xs = np.concatenate([trips[:, 0], trips[:, 2], afix, stat_x])
    es = np.concatenate([sigb[:, 0], sigb[:, 1], sfix, stat_s])
    d = np.abs(lr - xs)
    if np.any(d[es != 0.0] == 0.0):
        raise DegeneracyError(
            "tip %d coincides with another prevertex" % (r + 1), pair=(lr,)
        )
    val *= float(np.prod(d ** es))
    for l, ll in enumerate(lam):
        if l != r:
            if ll == lr:
                raise DegeneracyError("tips %d and %d coincide" % (r + 1, l + 1))
            val *= abs(lr - ll)
    return float(val)


def speed_factor(state: AccessoryState, r: int) -> float:
    """Growth speed of slit r per unit control weight and unit |c|: the
    tip-local factor A_r with |dL_r/dt| = |c| A_r C_r."""
    if not 0 <= r < state.m:
        raise DomainError("slit index %r out of range" % r)
    afix, sfix, stat_x, stat_s, trips, sigb = _split_arrays(state)
    return _speed_factor_arrays(r, trips[:, 1], trips, sigb, afix, sfix, stat_x, stat_s)


def control_two_slit(a1: float, a2: float, alpha: float):
    """Closed-form two-slit control weights for rate ratio alpha = v1/v2."""
    den = a1 + alpha * a2
    return alpha * a2 / den, a1 / den


def control_coefficients(state: AccessoryState, plan: SlitPlan) -> ControlVector:
    """Normalized control weights enforcing the plan's constant rate ratios."""
    m = state.m
    if len(plan.ratios) != m:
        raise ConfigError("plan has %d ratios for %d slits" % (len(plan.ratios), m))
    A = np.array([speed_factor(state, r) for r in range(m)])
    w = np.asarray(plan.ratios) / A
    return ControlVector(w / np.sum(w), 1.0)


def rescale_for_length_param(C: ControlVector, state: AccessoryState) -> ControlVector:
    """Rescale weights so the independent variable is the length of slit 1."""
    v1 = abs(state.c) * speed_factor(state, 0) * C.weights[0]
    if not v1 > 0.0:
        raise DegeneracyError("slit 1 has zero growth speed; cannot rescale")
    return ControlVector(C.weights, 1.0 / v1)


# ---------------------------------------------------------------------------
# right-hand side of the parameter ODE system


def _rhs_arrays(afix, sfix, stat_x, stat_s, trips, sigb, alpha_inf, Ct):
    lam = trips[:, 1]
    m = len(lam)

    def drift(x):
        d = x - lam
        if np.any(d == 0.0):
            raise DegeneracyError(
                "prevertex %r collided with a tip" % x, pair=(x,)
            )
        return -x * (x - 1.0) * float(np.sum(Ct * (lam - 1.0) / d))

    d_fixed = np.array([drift(x) for x in afix])
    d_slits = np.empty((m, 3))
    for i in range(m):
        d_slits[i, 0] = drift(trips[i, 0])
        d_slits[i, 2] = drift(trips[i, 2])

    # poles felt by a tip: every base and every non-tip prevertex
    pole_x = np.concatenate([trips[:, 0], trips[:, 2], afix, stat_x])
    pole_e = np.concatenate([sigb[:, 0], sigb[:, 1], sfix, stat_s])
    for p in range(m):
        lp = lam[p]
        others = np.delete(lam, p)
        dd = lp - others
        if np.any(dd == 0.0):
            raise DegeneracyError("tips coincide", pair=(lp,))
        t1 = lp * (lp - 1.0) * (
            float(np.sum(np.delete(Ct, p) * (others - 1.0) / dd))
            + Ct[p] * (lp - 1.0) * float(np.sum(1.0 / dd))
        )
        t2 = Ct[p] * (2.0 * lp - 1.0) * (lp - 1.0)
        gaps = lp - pole_x
        if np.any(gaps[pole_e != 0.0] == 0.0):
            raise DegeneracyError("tip %d sits on a prevertex" % (p + 1), pair=(lp,))
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(pole_e != 0.0, pole_e / gaps, 0.0)
        t3 = Ct[p] * lp * (lp - 1.0) ** 2 * float(np.sum(terms))
        d_slits[p, 1] = -(t1 + t2 + t3)
    dlogc = -alpha_inf * float(np.sum(Ct * (lam - 1.0)))
    return d_fixed, d_slits, dlogc


def ode_rhs(state: AccessoryState, control: ControlVector) -> StateDerivative:
    """Parameter velocities under the given (rescaled) control weights."""
    afix, sfix, stat_x, stat_s, trips, sigb = _split_arrays(state)
    Ct = control.effective()
    if len(Ct) != state.m:
        raise DomainError("control vector length mismatch")
    d_fixed, d_slits, dlogc = _rhs_arrays(
        afix, sfix, stat_x, stat_s, trips, sigb, state.polygon.alpha_inf, Ct
    )
    return StateDerivative(d_fixed, d_slits, dlogc)


def evolution_identity_residual(state: AccessoryState, control: ControlVector, z_points) -> float:
    """Consistency residual of the parameter velocities against the driving
    field, evaluated at probe points z.

    The time and space logarithmic derivatives of the map derivative must
    satisfy one rational-function identity; its imbalance is a direct check
    on every term of the right-hand side. Returns the max relative gap.
    """
    der = ode_rhs(state, control)
    afix, sfix, stat_x, stat_s, trips, sigb = _split_arrays(state)
    lam = trips[:, 1]
    Ct = control.effective()
    worst = 0.0
    for z in np.atleast_1d(np.asarray(z_points, complex)):
        lhs = -der.dlogc
        lhs += np.sum(der.slits[:, 1] / (z - lam))
        for i in range(len(lam)):
            lhs += sigb[i, 0] * der.slits[i, 0] / (z - trips[i, 0])
            lhs += sigb[i, 1] * der.slits[i, 2] / (z - trips[i, 2])
        lhs += np.sum(sfix * der.fixed / (z - afix))
        dphi = np.sum(1.0 / (z - lam))
        dphi += np.sum(sigb[:, 0] / (z - trips[:, 0]))
        dphi += np.sum(sigb[:, 1] / (z - trips[:, 2]))
        dphi += np.sum(sfix / (z - afix)) + np.sum(stat_s / (z - stat_x))
        S = np.sum(Ct * (lam - 1.0) / (lam - z))
        rhs = dphi * z * (z - 1.0) * S
        rhs += np.sum(Ct * lam * (lam - 1.0) ** 2 / (lam - z) ** 2)
        rhs -= np.sum(Ct * (lam - 1.0))
        gap = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, float(gap))
    return worst


# ---------------------------------------------------------------------------
# startup


def regularize_initial(state0: AccessoryState, plan: SlitPlan) -> AccessoryState:
    """Split each coincident base/tip triple to (lam - eps, lam, lam + eps)."""
    eps = plan.epsilon
    positions = sorted(
        [a for a in state0.fixed_prevertices]
        + [s.lam for s in state0.slits]
        + [0.0]
    )
    slits = []
    for s in state0.slits:
        if not s.degenerate:
            slits.append(s)
            continue
        others = [p for p in positions if p != s.lam]
        gap = min(abs(p - s.lam) for p in others)
        if eps >= 0.5 * gap:
            raise ConfigError(
                "epsilon %g is not small against the prevertex gap %g" % (eps, gap)
            )
        slits.append(replace(s, a1=s.lam - eps, a2=s.lam + eps))
    return replace(state0, slits=tuple(slits))


@dataclass(frozen=True)
class SeriesCoefficients:
    """First-order startup coefficients in sqrt(t) for constant control
    weights: per-slit tip and base slopes, zero slopes for fixed points."""

    q: np.ndarray
    lam1: np.ndarray
    a11: np.ndarray
    a21: np.ndarray
    fixed1: np.ndarray


def series_first_order(state0: AccessoryState, C0: ControlVector) -> SeriesCoefficients:
    """Leading sqrt(t) coefficients of the solution started from coincident
    triples, for (constant) control weights C0."""
    m = state0.m
    Ct = C0.effective()
    q = np.empty(m)
    lam1 = np.empty(m)
    a11 = np.empty(m)
    a21 = np.empty(m)
    for i, s in enumerate(state0.slits):
        al1 = s.sigma1 + 1.0
        al2 = s.sigma2 + 1.0
        if al1 <= 0.0 or al2 <= 0.0:
            raise DomainError("base angle multipliers must be positive")
        qi = -2.0 * Ct[i] * s.lam * (s.lam - 1.0) ** 2
        if qi <= 0.0:
            raise DomainError("nonpositive startup coefficient q_%d" % (i + 1))
        q[i] = qi
        lam1[i] = (al1 - al2) * math.sqrt(qi / (al1 * al2))
        a11[i] = -math.sqrt(qi * al2 / al1)
        a21[i] = math.sqrt(qi * al1 / al2)
    return SeriesCoefficients(q, lam1, a11, a21, np.zeros(len(state0.fixed_prevertices)))


# ---------------------------------------------------------------------------
# the evolution driver


class _System:
    """Constant structure of one run: exponents, ordering permutation,
    control mode, packing helpers."""

    def __init__(self, state0: AccessoryState, plan: SlitPlan, constant_control):
        self.plan = plan
        self.template = state0
        self.alpha_inf = state0.polygon.alpha_inf
        afix, sfix, stat_x, stat_s, trips, sigb = _split_arrays(state0)
        self.sfix = sfix
        self.stat_x = stat_x
        self.stat_s = stat_s
        self.sigb = sigb
        self.nf = len(afix)
        self.m = len(trips)
        self.arg_c = math.atan2(state0.c.imag, state0.c.real)
        self.ratios = np.asarray(plan.ratios, float)
        self.constant_control = constant_control
        all0 = np.concatenate([afix, trips.ravel(), stat_x])
        self.order = np.argsort(all0, kind="stable")

    def pack(self, state: AccessoryState) -> np.ndarray:
        return np.concatenate([state.moving_vector(), [math.log(abs(state.c))]])

    def unpack(self, y):
        vec = y[:-1]
        afix = vec[: self.nf]
        trips = vec[self.nf :].reshape(self.m, 3)
        return afix, trips, y[-1]

    def state_of(self, t, y) -> AccessoryState:
        c = math.exp(y[-1]) * complex(math.cos(self.arg_c), math.sin(self.arg_c))
        return self.template.with_moving_vector(y[:-1], t=t, c=c)

    def ordered(self, y) -> bool:
        afix, trips, _ = self.unpack(y)
        allx = np.concatenate([afix, trips.ravel(), self.stat_x])[self.order]
        return bool(np.all(np.diff(allx) > 0.0)) and bool(
            np.all(trips.ravel() < 0.0)
        )

    def min_gap(self, y) -> float:
        afix, trips, _ = self.unpack(y)
        allx = np.concatenate([afix, trips.ravel(), self.stat_x])[self.order]
        return float(np.min(np.diff(allx)))

    def control(self, afix, trips, logc):
        lam = trips[:, 1]
        m = self.m
        A = np.array(
            [
                _speed_factor_arrays(
                    r, lam, trips, self.sigb, afix, self.sfix, self.stat_x, self.stat_s
                )
                for r in range(m)
            ]
        )
        w = self.ratios / A
        C = w / np.sum(w)
        v1 = math.exp(logc) * A[0] * C[0]
        return C, 1.0 / v1, A

    def rhs(self, t, y):
        if not self.ordered(y):
            raise RhsRejection()
        afix, trips, logc = self.unpack(y)
        try:
            if self.constant_control is not None:
                Ct = self.constant_control.effective()
            else:
                C, s, _ = self.control(afix, trips, logc)
                Ct = s * C
            d_fixed, d_slits, dlogc = _rhs_arrays(
                afix, self.sfix, self.stat_x, self.stat_s, trips, self.sigb,
                self.alpha_inf, Ct,
            )
        except DegeneracyError as exc:
            raise RhsRejection() from exc
        return np.concatenate([d_fixed, d_slits.ravel(), [dlogc]])


def evolve(
    state0: AccessoryState,
    plan: SlitPlan,
    *,
    ode_tol: float = DEFAULT_ODE_TOL,
    atol: Optional[float] = None,
    record_lengths: bool = True,
    quad_tol: float = 1e-11,
    constant_control: Optional[ControlVector] = None,
) -> Trace:
    """Integrate the parameter system from state0 until slit 1 reaches the
    plan's target length.

    Starts from the epsilon-regularized state when the triples are still
    coincident. Stops early (stop_reason 'degenerate') once any prevertex
    gap drops below plan.merge_tol after having opened up, which signals
    tips reaching the far boundary. ``constant_control`` freezes the control
    weights instead of enforcing the plan's rate ratios (used by startup
    diagnostics); the default mode rescales so t equals the length of slit 1.
    """
    if state0.m != len(plan.ratios):
        raise ConfigError(
            "state has %d slits but plan has %d ratios" % (state0.m, len(plan.ratios))
        )
    trace = Trace()
    t0 = state0.t
    if plan.target_length <= t0:
        trace.append(state0, {"t": t0, "h": 0.0, "err": 0.0})
        trace.stop_reason = "target"
        return trace
    born = any(s.degenerate for s in state0.slits)
    if born:
        state0 = regularize_initial(state0, plan)
    sys = _System(state0, plan, constant_control)
    y0 = sys.pack(state0)
    if not sys.ordered(y0):
        raise DomainError("initial state is not strictly ordered")

    armed = sys.min_gap(y0) >= 10.0 * plan.merge_tol

    def stop_condition(t, y):
        nonlocal armed
        g = sys.min_gap(y)
        if not armed:
            if g >= 10.0 * plan.merge_tol:
                armed = True
            return None
        if g < plan.merge_tol:
            return "degenerate"
        return None

    def on_accept(t, y, h, err):
        st = sys.state_of(t, y)
        afix, trips, logc = sys.unpack(y)
        diag = {"t": t, "h": h, "err": err, "min_gap": sys.min_gap(y)}
        if constant_control is None:
            C, s, _ = sys.control(afix, trips, logc)
            diag["control"] = tuple(C)
            diag["scale"] = s
        if record_lengths:
            diag["lengths"] = tuple(
                scmap.slit_length(st, i, quad_tol) for i in range(st.m)
            )
        trace.append(st, diag)

    span = plan.target_length - t0
    if born:
        # fresh slits: the solution leaves the regularized start linearly in
        # t under ratio control, but as sqrt(t) under frozen control weights
        h0 = 0.25 * plan.epsilon if constant_control is None else 0.01 * plan.epsilon ** 2
        h0 = min(h0, span)
        floor = h0

        def max_step(t):
            return max(0.5 * (t - t0), floor)

    else:
        h0 = 1e-3 * span
        max_step = None

    try:
        result = integrate_adaptive(
            sys.rhs,
            t0,
            y0,
            plan.target_length,
            rtol=ode_tol,
            atol=atol if atol is not None else 0.01 * ode_tol,
            h0=h0,
            max_step=max_step,
            guard=lambda t, y: sys.ordered(y),
            on_accept=on_accept,
            stop_condition=stop_condition,
        )
    except StiffnessError as exc:
        exc.trace = trace
        if trace.snapshots:
            exc.last_state = trace.final
        raise
    if not trace.snapshots:
        trace.append(
            sys.state_of(result.t, result.y), {"t": result.t, "h": 0.0, "err": 0.0}
        )
    trace.stop_reason = result.status
    if result.status == "degenerate":
        final = trace.final
        trace.degeneracy_report = {
            "t": final.t,
            "target": plan.target_length,
            "min_gap": final.min_gap(),
            "merge_tol": plan.merge_tol,
        }
    return trace


# ---------------------------------------------------------------------------
# cluster merging and stage flattening


@dataclass
class MergeResult:
    """Outcome of collapsing prevertex clusters of a near-degenerate state."""

    state: AccessoryState
    clusters: list
    merged: list  # (position, exponent) pairs actually used
    warning: Optional[str] = None
    alternative: Optional[list] = None


def _cluster_indices(x: np.ndarray, tol: float):
    groups = [[0]]
    for j in range(1, len(x)):
        if x[j] - x[j - 1] < tol:
            groups[-1].append(j)
        else:
            groups.append([j])
    return groups


def _collapse(x, e, groups):
    out = []
    for g in groups:
        if len(g) == 1:
            out.append((float(x[g[0]]), float(e[g[0]])))
            continue
        ge = e[g]
        gx = x[g]
        total = float(np.sum(ge))
        if abs(total) < 1e-12:
            out.append((float(np.mean(gx)), 0.0))
        else:
            out.append((float(np.sum(ge * gx) / total), total))
    return out


def merge_degenerate(
    final: AccessoryState, plan: SlitPlan, quad_tol: float = 1e-10
) -> MergeResult:
    """Replace each cluster of nearly coincident prevertices by a single
    prevertex at the exponent-weighted centroid, with summed exponent.

    Returns the input unchanged when no cluster is tighter than
    plan.cluster_tol. Otherwise builds the slit-free state of the limiting
    map: remaining slit prevertices become plain polygon prevertices whose
    vertices are their images.
    """
    tab = final.prevertices
    mov_mask = (tab.kind != "origin") & (tab.kind != "unit")
    x = tab.x[mov_mask]
    e = tab.e[mov_mask]
    tol = plan.cluster_tol
    groups = _cluster_indices(x, tol)
    if all(len(g) == 1 for g in groups):
        return MergeResult(state=final, clusters=[], merged=[(float(a), float(b)) for a, b in zip(x, e)])

    merged = _collapse(x, e, groups)
    clusters = [[(float(x[j]), float(e[j])) for j in g] for g in groups if len(g) > 1]

    warning = None
    alternative = None
    gaps = np.diff(x)
    if np.any((gaps >= tol) & (gaps < 3.0 * tol)):
        warning = (
            "inter-cluster gap within 3x of cluster_tol; clustering is ambiguous"
        )
        alternative = _collapse(x, e, _cluster_indices(x, 3.0 * tol))

    state = _state_from_parameters(final, merged, quad_tol)
    return MergeResult(state, clusters, merged, warning, alternative)


def flatten_to_polygon(state: AccessoryState, quad_tol: float = 1e-10) -> AccessoryState:
    """Reinterpret a state with slits as a slit-free state of the same map:
    tips and base prime ends become ordinary polygon prevertices."""
    if not state.slits:
        return state
    tab = state.prevertices
    mov_mask = (tab.kind != "origin") & (tab.kind != "unit")
    params = [(float(a), float(b)) for a, b in zip(tab.x[mov_mask], tab.e[mov_mask])]
    return _state_from_parameters(state, params, quad_tol)


def _state_from_parameters(ref: AccessoryState, params, quad_tol) -> AccessoryState:
    """Slit-free state with moving prevertices/exponents given by ``params``;
    vertex positions are computed as images under the resulting map."""
    poly = ref.polygon
    n_old = poly.n
    kept = [(xx, ee) for xx, ee in params if ee != 0.0]
    xs = np.array([p[0] for p in kept])
    es = np.array([p[1] for p in kept])
    full_x = np.concatenate([xs, [0.0, 1.0]])
    full_e = np.concatenate([es, [poly.sigma(n_old - 3), poly.sigma(n_old - 2)]])
    base = poly.base_vertex
    verts = [
        scmap.evaluate_map_raw(full_x, full_e, ref.c, base, xx, quad_tol) for xx in xs
    ]
    vertices = tuple(verts) + (base, poly.unit_vertex, poly.vertices[n_old - 1])
    alphas = tuple(es + 1.0) + (
        poly.alphas[n_old - 3],
        poly.alphas[n_old - 2],
        poly.alpha_inf,
    )
    new_poly = PolygonSpec(vertices, alphas)
    return AccessoryState(
        t=0.0,
        c=ref.c,
        fixed_prevertices=tuple(float(v) for v in xs),
        slits=(),
        polygon=new_poly,
    )
