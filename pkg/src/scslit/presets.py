"""Built-in scenarios and closed-form initial states.

The rectangle state is constructed from the elliptic modulus k solving
K(k)/K(k') = width/(2*height): the prevertices are then the Mobius images
-(1+k)/(1-k) and -2k/(1-k), and the multiplier is width/(2*K(k)*(1-k)),
negative to match the orientation of the vertex ordering. The half-plane
identity state covers scenarios that grow slits into an empty half-plane.
"""

from __future__ import annotations

import math

from scipy.optimize import brentq

from .errors import ConfigError
from .quadrature import elliptic_K
from .state import AccessoryState, PolygonSpec


def half_plane_polygon() -> PolygonSpec:
    """The upper half-plane as a degenerate 3-gon: straight points at 0 and
    1 and a vertex at infinity with angle multiplier -1."""
    return PolygonSpec(vertices=(0.0, 1.0, None), alphas=(1.0, 1.0, -1.0))


def half_plane_state() -> AccessoryState:
    """Identity map of the upper half-plane (no slits, c = 1)."""
    return AccessoryState(
        t=0.0, c=1.0, fixed_prevertices=(), slits=(), polygon=half_plane_polygon()
    )


def rectangle_modulus(width: float, height: float) -> float:
    """Elliptic modulus k with K(k)/K(k') = width / (2*height)."""
    if width <= 0.0 or height <= 0.0:
        raise ConfigError("rectangle dimensions must be positive")
    ratio = width / (2.0 * height)

    def g(k):
        return elliptic_K(k) / elliptic_K(math.sqrt(1.0 - k * k)) - ratio

    return brentq(g, 1e-12, 1.0 - 1e-12, xtol=1e-15, rtol=8.9e-16)


def rectangle_state(width: float = 2.0, height: float = 1.0) -> AccessoryState:
    """Map onto the rectangle [-width/2, width/2] x [0, height].

    Vertex order: top-left, bottom-left, bottom-right (image of prevertex 0),
    top-right (image of 1), top-middle (image of infinity, a straight point).
    """
    k = rectangle_modulus(width, height)
    a1 = -(1.0 + k) / (1.0 - k)
    a2 = -2.0 * k / (1.0 - k)
    c = -width / (2.0 * elliptic_K(k) * (1.0 - k))
    w2 = 0.5 * width
    poly = PolygonSpec(
        vertices=(
            complex(-w2, height),
            complex(-w2, 0.0),
            complex(w2, 0.0),
            complex(w2, height),
            complex(0.0, height),
        ),
        alphas=(0.5, 0.5, 0.5, 0.5, 1.0),
    )
    return AccessoryState(
        t=0.0, c=c, fixed_prevertices=(a1, a2), slits=(), polygon=poly
    )


#: two vertical slits growing from the real axis at -3 and -1 with rate
#: ratio 1:2, run until the slower slit has length 1 (so the other has 2)
EXAMPLE1 = {
    "initial": {"kind": "half_plane"},
    "stages": [
        {
            "slits": [
                {"base_point": [-3.0, 0.0], "direction": [0.0, 1.0], "ratio": 0.5},
                {"base_point": [-1.0, 0.0], "direction": [0.0, 1.0], "ratio": 1.0},
            ],
            "target_length": 1.0,
            "epsilon": 1e-12,
        }
    ],
    "grid": {
        "x_min": -5.0,
        "x_max": 1.5,
        "y_min": 0.05,
        "y_max": 3.0,
        "spacing": 0.5,
        "samples_per_line": 160,
    },
}

#: rectangle [-1,1]x[0,1] with equal-rate slits from -0.5+i (down) and
#: -1+0.5i (right); they meet at -0.5+0.5i, cutting out the corner
EXAMPLE2 = {
    "initial": {"kind": "rectangle", "width": 2.0, "height": 1.0},
    "stages": [
        {
            "slits": [
                {"base_point": [-0.5, 1.0], "direction": [0.0, -1.0], "ratio": 1.0},
                {"base_point": [-1.0, 0.5], "direction": [1.0, 0.0], "ratio": 1.0},
            ],
            "target_length": 0.5,
            "epsilon": 1e-12,
            "merge_tol": 1e-12,
            "cluster_tol": 5e-3,
        }
    ],
    "grid": {
        "x_min": -12.0,
        "x_max": 2.0,
        "y_min": 0.05,
        "y_max": 4.0,
        "spacing": 0.5,
        "samples_per_line": 160,
    },
}

PRESETS = {"example1": EXAMPLE1, "example2": EXAMPLE2}
