"""Accessory parameters of half-plane-to-polygon maps with growing slits.

The package integrates the parameter evolution that drives several
rectilinear slits into a polygon at prescribed length ratios, evaluates the
resulting map, and verifies the answer against independent geometric
oracles (side-length Newton refinement, trace geometry checks).
"""

from .errors import (
    ConfigError,
    ConditioningError,
    DegeneracyError,
    DomainError,
    IntegrationError,
    OrderingError,
    RootNotFoundError,
    ScslitError,
    StepDampingError,
    StiffnessError,
)
from .evolution import (
    ControlVector,
    MergeResult,
    SlitPlan,
    control_coefficients,
    evolve,
    flatten_to_polygon,
    merge_degenerate,
    ode_rhs,
    regularize_initial,
    rescale_for_length_param,
    series_first_order,
    speed_factor,
)
from .oracle import (
    SideLengthReport,
    TraceVerification,
    side_lengths,
    solve_prevertices,
    verify_trace,
)
from .presets import half_plane_state, rectangle_state
from .quadrature import QuadratureRule, elliptic_K, gauss_jacobi, integrate_singular
from .scmap import (
    GridSpec,
    bracket_for_boundary_point,
    grid_image,
    locate_prevertex,
    sc_derivative,
    sc_map,
    slit_endpoint,
    slit_length,
)
from .state import AccessoryState, GridImage, PolygonSpec, SlitGroup, Trace

__version__ = "0.1.0"

__all__ = [
    "AccessoryState",
    "ConfigError",
    "ConditioningError",
    "ControlVector",
    "DegeneracyError",
    "DomainError",
    "GridImage",
    "GridSpec",
    "IntegrationError",
    "MergeResult",
    "OrderingError",
    "PolygonSpec",
    "QuadratureRule",
    "RootNotFoundError",
    "ScslitError",
    "SlitGroup",
    "SlitPlan",
    "StepDampingError",
    "StiffnessError",
    "Trace",
    "control_coefficients",
    "elliptic_K",
    "evolve",
    "flatten_to_polygon",
    "gauss_jacobi",
    "grid_image",
    "integrate_singular",
    "locate_prevertex",
    "merge_degenerate",
    "ode_rhs",
    "regularize_initial",
    "rescale_for_length_param",
    "sc_derivative",
    "sc_map",
    "series_first_order",
    "slit_endpoint",
    "slit_length",
    "speed_factor",
]
