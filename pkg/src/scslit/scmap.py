"""Evaluation of the half-plane-to-polygon map: derivative product, path
integrals, boundary location, slit endpoints and grid images.

Branch bookkeeping: every factor (z - p)^sigma uses the branch of log(z - p)
cut along the ray going straight down from p into the lower half-plane. The
product is then single-valued on the closed upper half-plane and positive
real (up to the multiplier c) for large positive real z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, IntegrationError, RootNotFoundError
from .quadrature import MAX_DEPTH, gauss_jacobi
from .state import AccessoryState, GridImage

DEFAULT_QUAD_TOL = 1e-11
#: default |f(1) - A_{n-1}| style tolerance for boundary location
DEFAULT_MAP_TOL = 1e-9
_NODES = 24


def _branch_log(w):
    """log with the cut running downward from the origin."""
    ang = np.angle(w)
    ang = np.where(ang < -0.5 * np.pi, ang + 2.0 * np.pi, ang)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(w)) + 1j * ang


def _branch_pow(w, e: float):
    if e == 0.0:
        return 1.0 + 0.0j
    return np.exp(e * _branch_log(np.asarray(w, complex)))


class _Factors:
    """Nonzero-exponent factors of the derivative product of a state."""

    __slots__ = ("x", "e", "singular")

    def __init__(self, state: AccessoryState):
        tab = state.prevertices
        self._init_arrays(tab.x, tab.e)

    def _init_arrays(self, x, e):
        x = np.asarray(x, float)
        e = np.asarray(e, float)
        mask = e != 0.0
        self.x = x[mask]
        self.e = e[mask]
        self.singular = self.x[self.e < 0.0]

    @classmethod
    def from_arrays(cls, x, e) -> "_Factors":
        obj = cls.__new__(cls)
        obj._init_arrays(x, e)
        return obj

    def product(self, z, skip=()):
        """Product of (z - x_j)^{e_j} over all factors except indices in
        ``skip``; z may be scalar or array, real or complex."""
        z = np.asarray(z)
        w = z[..., None] - self.x
        logs = _branch_log(w)
        if skip:
            keep = np.ones(len(self.x), bool)
            keep[list(skip)] = False
            with np.errstate(invalid="ignore"):
                s = np.sum(self.e[keep] * logs[..., keep], axis=-1)
        else:
            s = np.sum(self.e * logs, axis=-1)
        return np.exp(s)

    def index_at(self, p: float):
        """Index of the factor exactly at position p, or None."""
        hits = np.nonzero(self.x == p)[0]
        return int(hits[0]) if len(hits) else None


def sc_derivative(state: AccessoryState, z) -> complex:
    """Derivative of the map at z: c times the prevertex-factor product."""
    zc = complex(z)
    tab = state.prevertices
    if np.any(tab.x == zc):
        raise DomainError("derivative evaluated at a prevertex: %r" % z)
    fac = _Factors(state)
    return state.c * complex(fac.product(zc))


# ---------------------------------------------------------------------------
# path integration of the derivative product


def _seg_distance(u: complex, v: complex, p: complex) -> float:
    ab = v - u
    denom = abs(ab) ** 2
    if denom == 0.0:
        return abs(p - u)
    s = ((p - u) * np.conj(ab)).real / denom
    s = min(1.0, max(0.0, s))
    return abs(p - (u + s * ab))


def _leg(fac: _Factors, u, v, iu, iv, tol, depth=0):
    """Integral of the factor product along the segment [u, v].

    iu/iv are factor indices absorbed at the endpoints (None if the endpoint
    is not a prevertex). Endpoint factors are pulled into the Gauss-Jacobi
    weight so their singular/vanishing behaviour is integrated exactly.
    """
    if iu is not None and iv is not None:
        mid = 0.5 * (u + v)
        return _leg(fac, u, mid, iu, None, 0.5 * tol, depth + 1) + _leg(
            fac, mid, v, None, iv, 0.5 * tol, depth + 1
        )
    length = abs(v - u)
    # one-half rule against singular factors not absorbed at an endpoint;
    # alongside, bound the cancellation noise of evaluating (z - x_j) for
    # factors that stand close to the panel: order doubling cannot resolve
    # below that, so it enters the acceptance floor
    dmin = math.inf
    noise = 1e-14
    for j, p in enumerate(fac.x):
        if j == iu or j == iv:
            continue
        d = _seg_distance(u, v, p)
        if fac.e[j] < 0.0:
            dmin = min(dmin, d)
        d = max(d, 0.25 * length, 1e-300)
        noise += 4.0 * abs(fac.e[j]) * 2.3e-16 * (abs(p) + abs(u)) / d
    if length <= dmin:
        i1 = _leg_panel(fac, u, v, iu, iv, _NODES)
        i2 = _leg_panel(fac, u, v, iu, iv, 2 * _NODES)
        est = abs(i2 - i1)
        if est <= tol + noise * abs(i2):
            return i2
    if depth >= MAX_DEPTH:
        raise IntegrationError(
            "path quadrature failed to converge", interval=(u, v)
        )
    mid = 0.5 * (u + v)
    return _leg(fac, u, mid, iu, None, 0.5 * tol, depth + 1) + _leg(
        fac, mid, v, None, iv, 0.5 * tol, depth + 1
    )


def _leg_panel(fac: _Factors, u, v, iu, iv, n):
    half = 0.5 * (v - u)
    mid = 0.5 * (v + u)
    b_exp = float(fac.e[iu]) if iu is not None else 0.0
    a_exp = float(fac.e[iv]) if iv is not None else 0.0
    rule = gauss_jacobi(n, a_exp, b_exp)
    z = mid + half * rule.nodes
    if not np.iscomplexobj(z):
        z = z + 0.0j  # keep +0 imaginary part: boundary limit from above
    skip = tuple(j for j in (iu, iv) if j is not None)
    g = fac.product(z, skip=skip)
    pref = half * _branch_pow(half, b_exp) * _branch_pow(-half, a_exp)
    return complex(pref * np.sum(rule.weights * g))


def _real_axis_integral(fac: _Factors, x: float, tol: float):
    """Integral of the factor product from 0 to real x along the boundary."""
    if x == 0.0:
        return 0.0 + 0.0j
    lo, hi = (x, 0.0) if x < 0.0 else (0.0, x)
    breaks = [lo] + [float(p) for p in fac.x if lo < p < hi] + [hi]
    total = 0.0 + 0.0j
    seg_tol = tol / max(1, len(breaks) - 1)
    for u, v in zip(breaks, breaks[1:]):
        total += _leg(fac, u, v, fac.index_at(u), fac.index_at(v), seg_tol)
    return total if x > 0.0 else -total


def _path_integral(fac: _Factors, z: complex, tol: float):
    if z.imag == 0.0:
        return _real_axis_integral(fac, z.real, tol)
    i0 = fac.index_at(0.0)
    dist_z = min(abs(z - p) for p in fac.x) if len(fac.x) else np.inf
    delta = 0.5 * dist_z
    direct_ok = all(
        _seg_distance(0.0, z, p) >= delta
        for j, p in enumerate(fac.x)
        if p != 0.0 and fac.e[j] < 0.0
    )
    if direct_ok:
        return _leg(fac, 0.0, z, i0, None, tol)
    h = max(z.imag, delta)
    mid = 1j * h
    return _leg(fac, 0.0, mid, i0, None, 0.5 * tol) + _leg(
        fac, mid, z, None, None, 0.5 * tol
    )


def evaluate_map_raw(
    x, e, c: complex, base_value: complex, z, quad_tol: float = DEFAULT_QUAD_TOL
) -> complex:
    """Map evaluation from bare prevertex/exponent arrays.

    Same path rules as :func:`sc_map`; used where no state object exists yet
    (e.g. computing the vertices of a freshly merged parameter list).
    """
    zc = complex(z)
    if zc.imag < 0.0:
        raise DomainError("point %r lies outside the closed upper half-plane" % z)
    fac = _Factors.from_arrays(x, e)
    return complex(base_value) + complex(c) * _path_integral(fac, zc, quad_tol)


def sc_map(state: AccessoryState, z, quad_tol: float = DEFAULT_QUAD_TOL) -> complex:
    """Image of z (closed upper half-plane) under the map.

    The integration path is the straight segment from 0 when it keeps clear
    of all singular prevertices, otherwise a two-leg detour through i*h.
    Real z is integrated along the boundary, splitting at every prevertex so
    endpoint singularities are absorbed by Jacobi weights.
    """
    zc = complex(z)
    if zc.imag < 0.0:
        raise DomainError("point %r lies outside the closed upper half-plane" % z)
    fac = _Factors(state)
    val = _path_integral(fac, zc, quad_tol)
    return state.polygon.base_vertex + state.c * val


def locate_prevertex(
    state: AccessoryState,
    boundary_point,
    bracket,
    map_tol: float = DEFAULT_MAP_TOL,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> float:
    """Real preimage of a boundary point, searched inside ``bracket``.

    The boundary restriction of the map must be monotone on the bracket
    (true between consecutive prevertices); the search runs on the signed
    position of the image along the side through the target point.
    """
    target = complex(boundary_point)
    x0, x1 = float(bracket[0]), float(bracket[1])
    if not x0 < x1:
        raise DomainError("bracket must be an increasing interval")
    f0 = sc_map(state, x0, quad_tol)
    f1 = sc_map(state, x1, quad_tol)
    chord = f1 - f0
    if chord == 0:
        raise RootNotFoundError("bracket endpoints map to the same point")
    direction = chord / abs(chord)

    def coord(x: float) -> float:
        return ((sc_map(state, x, quad_tol) - f0) * np.conj(direction)).real

    u_target = ((target - f0) * np.conj(direction)).real
    g0 = -u_target
    g1 = coord(x1) - u_target
    if g0 * g1 > 0.0:
        raise RootNotFoundError(
            "bracket (%g, %g) does not enclose the preimage of %s"
            % (x0, x1, target)
        )
    root = brentq(lambda x: coord(x) - u_target, x0, x1, xtol=1e-13, rtol=8.9e-16)
    if abs(sc_map(state, root, quad_tol) - target) > map_tol:
        raise RootNotFoundError(
            "bisection converged to x=%r but the image misses the target" % root
        )
    return float(root)


def bracket_for_boundary_point(
    state: AccessoryState, point, quad_tol: float = DEFAULT_QUAD_TOL, geom_tol: float = 1e-9
):
    """Bracket on the real axis whose image side contains ``point``.

    Scans the sides between consecutive finite prevertices, then the two
    unbounded parameter rays through infinity (their image sides are finite
    when the angle multiplier at infinity is positive). Raises if the point
    is not found on the boundary.
    """
    from .geometry import distance_point_segment

    target = complex(point)
    tab = state.prevertices
    xs = list(tab.x)
    imgs = [sc_map(state, x, quad_tol) for x in xs]
    scale = 1.0 + abs(target)
    for k in range(len(xs) - 1):
        if distance_point_segment(target, imgs[k], imgs[k + 1]) <= geom_tol * scale:
            return (xs[k], xs[k + 1])
    # ray right of the last prevertex (toward the image of infinity)
    hi = max(2.0 * abs(xs[0]), xs[-1] + 2.0)
    for _ in range(60):
        img = sc_map(state, hi, quad_tol)
        if distance_point_segment(target, imgs[-1], img) <= geom_tol * scale:
            return (xs[-1], hi)
        hi *= 2.0
        if hi > 1e12:
            break
    # ray left of the first prevertex
    lo = -max(2.0 * abs(xs[0]), 2.0)
    for _ in range(60):
        img = sc_map(state, lo, quad_tol)
        if distance_point_segment(target, img, imgs[0]) <= geom_tol * scale:
            return (lo, xs[0])
        lo *= 2.0
        if lo < -1e12:
            break
    raise RootNotFoundError(
        "boundary point %s not found on any polygon side" % target
    )


def slit_endpoint(state: AccessoryState, i: int, quad_tol: float = DEFAULT_QUAD_TOL) -> complex:
    """Image of the tip prevertex of slit i."""
    if not 0 <= i < state.m:
        raise DomainError("slit index %r out of range" % i)
    return sc_map(state, state.slits[i].lam, quad_tol)


def slit_length(state: AccessoryState, i: int, quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    """Length of slit i, realized as |tip image - base point|."""
    return abs(slit_endpoint(state, i, quad_tol) - state.slits[i].base_point)


# ---------------------------------------------------------------------------
# grid images


@dataclass(frozen=True)
class GridSpec:
    """Cartesian sampling grid in the open upper half-plane."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    spacing: float = 0.5
    samples_per_line: int = 120
    exclusion_radius: float = None

    def __post_init__(self):
        if self.y_min <= 0.0:
            raise DomainError("grid must lie in the open upper half-plane")
        if self.spacing <= 0.0 or self.samples_per_line < 2:
            raise DomainError("invalid grid spacing or sample count")


def _grid_levels(lo: float, hi: float, spacing: float):
    k0 = math.ceil(lo / spacing - 1e-12)
    k1 = math.floor(hi / spacing + 1e-12)
    return [k * spacing for k in range(k0, k1 + 1)]


def grid_image(state: AccessoryState, grid: GridSpec, quad_tol: float = 1e-9) -> GridImage:
    """Images of the grid lines; samples closer than the exclusion radius to
    a prevertex are skipped and recorded."""
    tab = state.prevertices
    spread = float(tab.x.max() - tab.x.min()) if len(tab.x) > 1 else 1.0
    r_excl = grid.exclusion_radius
    if r_excl is None:
        r_excl = 1e-6 * spread
    polylines = []
    skipped = []

    def image_of(points):
        line = []
        for z in points:
            if np.min(np.abs(z - tab.x)) <= r_excl:
                skipped.append(z)
                continue
            line.append(sc_map(state, z, quad_tol))
        return line

    ys = np.linspace(grid.y_min, grid.y_max, grid.samples_per_line)
    for xl in _grid_levels(grid.x_min, grid.x_max, grid.spacing):
        line = image_of([complex(xl, y) for y in ys])
        if len(line) >= 2:
            polylines.append(("vertical", line))
    xs = np.linspace(grid.x_min, grid.x_max, grid.samples_per_line)
    for yl in _grid_levels(max(grid.y_min, grid.spacing), grid.y_max, grid.spacing):
        line = image_of([complex(x, yl) for x in xs])
        if len(line) >= 2:
            polylines.append(("horizontal", line))
    return GridImage(polylines=polylines, skipped=skipped)
