"""Domain types: target polygons, slit groups, the evolving accessory-parameter
state, traces, and grid images.

Conventions. The map sends the upper half-plane onto the polygon; three
prevertices are pinned at 0, 1 and infinity. The vertex list of a polygon is
in boundary order ``A_1 .. A_n`` where ``A_{n-2}`` is the image of prevertex 0,
``A_{n-1}`` the image of 1, and ``A_n`` the image of infinity. All moving
prevertices (the images' preimages that are solved for) lie left of 0 on the
real axis. Each growing slit contributes a triple of prevertices
``a1 < lam < a2``: the two prime ends at the base point and the tip.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError

#: sum over k of (alpha_k - 1) must equal -2 for a closed boundary
CLOSURE_TOL = 1e-9
#: tip prevertices carry this exponent in the derivative product
TIP_EXPONENT = 1.0


def _as_complex(v):
    return None if v is None else complex(v)


@dataclass(frozen=True)
class PolygonSpec:
    """A polygon with fixed interior angles pi*alpha_k at vertices A_k.

    ``vertices`` entries may be ``None`` for vertices at infinity (their alpha
    is then <= 0). The last three vertices are the images of prevertices
    0, 1 and infinity; the first two of those must be finite points.
    """

    vertices: tuple
    alphas: tuple
    base_vertex_index: int = -1

    def __post_init__(self):
        verts = tuple(_as_complex(v) for v in self.vertices)
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "alphas", alphas)
        n = len(verts)
        if n < 3:
            raise DomainError("polygon needs at least 3 vertices, got %d" % n)
        if len(alphas) != n:
            raise DomainError("got %d alphas for %d vertices" % (len(alphas), n))
        if self.base_vertex_index == -1:
            object.__setattr__(self, "base_vertex_index", n - 3)
        if self.base_vertex_index != n - 3:
            raise DomainError(
                "base vertex (image of prevertex 0) must sit at position n-3"
            )
        for k, (v, a) in enumerate(zip(verts, alphas)):
            if abs(a) > 2.0 + 1e-12:
                raise DomainError("|alpha_%d| = %g exceeds 2" % (k, abs(a)))
            if v is None and a > 0.0:
                raise DomainError("vertex %d at infinity must have alpha <= 0" % k)
        closure = sum(a - 1.0 for a in alphas)
        if abs(closure + 2.0) > CLOSURE_TOL:
            raise DomainError(
                "angle closure sum(alpha_k - 1) = %.3e, expected -2" % closure
            )
        if verts[n - 3] is None or verts[n - 2] is None:
            raise DomainError("images of prevertices 0 and 1 must be finite")

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def base_vertex(self) -> complex:
        """Image of prevertex 0 (the additive normalization point)."""
        return self.vertices[self.n - 3]

    @property
    def unit_vertex(self) -> complex:
        """Image of prevertex 1."""
        return self.vertices[self.n - 2]

    @property
    def alpha_inf(self) -> float:
        """Angle multiplier at the image of infinity."""
        return self.alphas[self.n - 1]

    def sigma(self, k: int) -> float:
        return self.alphas[k] - 1.0

    def to_dict(self) -> dict:
        return {
            "vertices": [None if v is None else [v.real, v.imag] for v in self.vertices],
            "alphas": list(self.alphas),
            "base_vertex_index": self.base_vertex_index,
        }

    @staticmethod
    def from_dict(d: dict) -> "PolygonSpec":
        verts = tuple(
            None if v is None else complex(v[0], v[1]) for v in d["vertices"]
        )
        return PolygonSpec(verts, tuple(d["alphas"]), d.get("base_vertex_index", -1))


@dataclass(frozen=True)
class SlitGroup:
    """Prevertex triple of one slit: base prime ends a1 < lam < a2, the tip at
    lam, base-point exponents (sigma1, sigma2), geometry of the slit ray.

    ``vertex_index`` is set when the slit grows out of a polygon vertex; that
    vertex's own factor is then absent from the derivative product and the
    base exponents sum to alpha_k - 2 instead of -1.
    """

    a1: float
    lam: float
    a2: float
    sigma1: float
    sigma2: float
    base_point: complex
    direction: complex
    vertex_index: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "base_point", complex(self.base_point))
        d = complex(self.direction)
        if d == 0:
            raise DomainError("slit direction must be nonzero")
        object.__setattr__(self, "direction", d / abs(d))
        if not (self.a1 <= self.lam <= self.a2):
            raise DomainError(
                "slit triple must satisfy a1 <= lam <= a2, got (%r, %r, %r)"
                % (self.a1, self.lam, self.a2)
            )
        for s in (self.sigma1, self.sigma2):
            if s <= -1.0:
                raise DomainError("base exponents must exceed -1, got %r" % s)

    @property
    def degenerate(self) -> bool:
        return self.a1 == self.lam == self.a2

    def exponent_sum(self) -> float:
        """sigma1 + sigma2 + tip exponent."""
        return self.sigma1 + self.sigma2 + TIP_EXPONENT

    def to_dict(self) -> dict:
        return {
            "a1": self.a1,
            "lam": self.lam,
            "a2": self.a2,
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "base_point": [self.base_point.real, self.base_point.imag],
            "direction": [self.direction.real, self.direction.imag],
            "vertex_index": self.vertex_index,
        }

    @staticmethod
    def from_dict(d: dict) -> "SlitGroup":
        return SlitGroup(
            d["a1"],
            d["lam"],
            d["a2"],
            d["sigma1"],
            d["sigma2"],
            complex(*d["base_point"]),
            complex(*d["direction"]),
            d.get("vertex_index"),
        )


class PrevertexTable:
    """Flat view of all finite prevertices of a state, in increasing order.

    Arrays: ``x`` positions, ``e`` exponents, ``kind`` tags ('fixed',
    'origin', 'unit', 'base', 'tip'), ``owner`` slit index (-1 for non-slit
    entries, fixed-prevertex index for 'fixed').
    """

    __slots__ = ("x", "e", "kind", "owner")

    def __init__(self, x, e, kind, owner):
        self.x = np.asarray(x, float)
        self.e = np.asarray(e, float)
        self.kind = np.asarray(kind, object)
        self.owner = np.asarray(owner, int)

    def __len__(self):
        return len(self.x)

    @property
    def singular_x(self) -> np.ndarray:
        """Positions where the derivative product is unbounded (negative
        non-integer exponents)."""
        mask = self.e < 0.0
        return self.x[mask]


@dataclass(frozen=True)
class AccessoryState:
    """Full accessory-parameter state at one value of the evolution parameter.

    ``t`` equals the current length of slit 1 under the length
    parametrization used by the solver. ``c`` is the complex multiplier of
    the derivative product. Immutable; all operations on it are pure.
    """

    t: float
    c: complex
    fixed_prevertices: tuple
    slits: tuple
    polygon: PolygonSpec
    fixed_vertex_map: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "c", complex(self.c))
        object.__setattr__(
            self, "fixed_prevertices", tuple(float(a) for a in self.fixed_prevertices)
        )
        object.__setattr__(self, "slits", tuple(self.slits))
        if self.fixed_vertex_map is None:
            object.__setattr__(
                self, "fixed_vertex_map", tuple(range(len(self.fixed_prevertices)))
            )
        else:
            object.__setattr__(
                self, "fixed_vertex_map", tuple(int(i) for i in self.fixed_vertex_map)
            )
        if len(self.fixed_vertex_map) != len(self.fixed_prevertices):
            raise DomainError("fixed_vertex_map length mismatch")
        if self.c == 0:
            raise DomainError("multiplier c must be nonzero")
        self._validate()

    # -- validation -----------------------------------------------------

    def _validate(self):
        n = self.polygon.n
        covered = set(self.fixed_vertex_map)
        for s in self.slits:
            if s.vertex_index is not None:
                if s.vertex_index in covered:
                    raise DomainError("vertex %d hosts a slit and a fixed prevertex" % s.vertex_index)
                covered.add(s.vertex_index)
                alpha_k = self.polygon.alphas[s.vertex_index]
                if abs(s.sigma1 + s.sigma2 - (alpha_k - 2.0)) > 1e-9:
                    raise DomainError(
                        "vertex-based slit exponents must sum to alpha_k - 2"
                    )
            else:
                if abs(s.sigma1 + s.sigma2 + 1.0) > 1e-9:
                    raise DomainError("side-based slit exponents must sum to -1")
        expected = set(range(n - 3))
        if covered != expected:
            raise DomainError(
                "polygon vertices %s are not accounted for by prevertices or slits"
                % sorted(expected - covered)
            )
        for a in self.fixed_prevertices:
            if not a < 0.0:
                raise DomainError("moving prevertices must be < 0, got %r" % a)
        for s in self.slits:
            if not s.a2 < 0.0:
                raise DomainError("slit prevertices must be < 0, got %r" % s.a2)
        # fixed prevertices keep their stated (increasing) order
        for a, b in zip(self.fixed_prevertices, self.fixed_prevertices[1:]):
            if not a < b:
                raise DomainError("fixed prevertices must increase, got %r !< %r" % (a, b))
        # slit triples are pairwise disjoint intervals (degenerate ones
        # collapse to a point at t = 0) and contain no foreign prevertex
        intervals = [(s.a1, s.a2, i) for i, s in enumerate(self.slits)]
        for (u1, v1, i), (u2, v2, j) in zip(intervals, intervals[1:]):
            if not v1 < u2:
                raise DomainError(
                    "slit triples %d and %d overlap or are out of order" % (i + 1, j + 1)
                )
        singles = list(self.fixed_prevertices) + [0.0, 1.0]
        for u, v, i in intervals:
            for a in singles:
                if u <= a <= v:
                    raise DomainError(
                        "prevertex %r falls inside the triple of slit %d" % (a, i + 1)
                    )
        # no coincidences among non-degenerate positions
        xs = sorted(
            singles
            + [p for s in self.slits for p in ((s.lam,) if s.degenerate else (s.a1, s.lam, s.a2))]
        )
        for a, b in zip(xs, xs[1:]):
            if not a < b:
                raise DomainError("coincident prevertices at %r" % a)

    # -- views ------------------------------------------------------------

    @property
    def m(self) -> int:
        return len(self.slits)

    @cached_property
    def prevertices(self) -> PrevertexTable:
        """All finite prevertices in increasing order with exponents."""
        poly = self.polygon
        n = poly.n
        rows = []
        for j, (a, k) in enumerate(zip(self.fixed_prevertices, self.fixed_vertex_map)):
            rows.append((a, poly.sigma(k), "fixed", j))
        rows.append((0.0, poly.sigma(n - 3), "origin", -1))
        rows.append((1.0, poly.sigma(n - 2), "unit", -1))
        for i, s in enumerate(self.slits):
            rows.append((s.a1, s.sigma1, "base", i))
            rows.append((s.lam, TIP_EXPONENT, "tip", i))
            rows.append((s.a2, s.sigma2, "base", i))
        rows.sort(key=lambda r: r[0])
        x, e, kind, owner = zip(*rows)
        return PrevertexTable(x, e, kind, owner)

    def exponent_sum_residual(self) -> float:
        """Deviation of sum(finite exponents) from -1 - alpha_inf."""
        total = float(np.sum(self.prevertices.e))
        return total - (-1.0 - self.polygon.alpha_inf)

    def min_gap(self) -> float:
        """Smallest gap between consecutive finite prevertices."""
        x = self.prevertices.x
        return float(np.min(np.diff(x))) if len(x) > 1 else np.inf

    # -- packing for the ODE integrator and the Newton oracle -------------

    def moving_vector(self) -> np.ndarray:
        """Moving prevertices packed as [fixed..., (a1, lam, a2) per slit]."""
        out = list(self.fixed_prevertices)
        for s in self.slits:
            out.extend((s.a1, s.lam, s.a2))
        return np.array(out, float)

    def with_moving_vector(self, vec, t=None, c=None) -> "AccessoryState":
        vec = np.asarray(vec, float)
        nf = len(self.fixed_prevertices)
        if len(vec) != nf + 3 * self.m:
            raise DomainError("moving vector has wrong length")
        slits = []
        for i, s in enumerate(self.slits):
            a1, lam, a2 = vec[nf + 3 * i : nf + 3 * i + 3]
            slits.append(replace(s, a1=float(a1), lam=float(lam), a2=float(a2)))
        return AccessoryState(
            t=self.t if t is None else float(t),
            c=self.c if c is None else complex(c),
            fixed_prevertices=tuple(vec[:nf]),
            slits=tuple(slits),
            polygon=self.polygon,
            fixed_vertex_map=self.fixed_vertex_map,
        )

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "c": [self.c.real, self.c.imag],
            "fixed_prevertices": list(self.fixed_prevertices),
            "fixed_vertex_map": list(self.fixed_vertex_map),
            "slits": [s.to_dict() for s in self.slits],
            "polygon": self.polygon.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "AccessoryState":
        return AccessoryState(
            t=float(d["t"]),
            c=complex(*d["c"]),
            fixed_prevertices=tuple(d["fixed_prevertices"]),
            slits=tuple(SlitGroup.from_dict(s) for s in d["slits"]),
            polygon=PolygonSpec.from_dict(d["polygon"]),
            fixed_vertex_map=tuple(d["fixed_vertex_map"]),
        )


@dataclass
class Trace:
    """Time-ordered accepted states of one evolution run plus per-step
    diagnostics (step size, error estimate, control coefficients, slit
    lengths)."""

    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    stop_reason: str = "target"
    degeneracy_report: Optional[dict] = None

    def append(self, state: AccessoryState, diag: dict):
        self.snapshots.append(state)
        self.diagnostics.append(diag)

    @property
    def final(self) -> AccessoryState:
        return self.snapshots[-1]

    def __len__(self):
        return len(self.snapshots)


@dataclass
class GridImage:
    """Images of Cartesian grid lines under the map; ``polylines`` holds
    (tag, points) pairs with tag 'horizontal' or 'vertical'."""

    polylines: list
    skipped: list = field(default_factory=list)
