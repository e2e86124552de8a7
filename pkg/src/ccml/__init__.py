"""Sub-Finsler metrics, monotone Finsler approximation, and numerical
Carnot-Caratheodory distances on polynomial chart structures."""

from .distance import (
    ControlOptParams,
    HorizontalPath,
    PathError,
    cc_distance_upper,
    cc_length,
    distance_convergence,
    finsler_distance_grid,
    horizontal_differential,
    integrate,
    lip_bound_check,
    metric_speed_check,
    parallelogram_check,
    stencil_anisotropy,
)
from .distribution import (
    gn_membership,
    orthonormal_frame,
    rank_radius,
    sphere_hausdorff,
)
from .finsler import (
    AssemblyError,
    CoverParams,
    FinslerMetricField,
    assemble_F,
    build_cover,
    build_sequence,
    convergence_probe,
    riemannian_variant,
    validate_sequence,
)
from .norms import (
    NormConstructionError,
    SmoothNorm,
    build_anchor_norm,
    extend_norm,
    smooth_norm_approx,
    verify_anchor,
)
from .polyfield import ChartDomain, PolyField, lie_bracket, lie_hull
from .structure import (
    FiberNorm,
    GenMetricValue,
    SubFinslerStructure,
    check_hormander,
    horizontal_norm,
    is_horizontal,
    lsc_probe,
    rank,
)

__all__ = [
    "AssemblyError",
    "ControlOptParams",
    "CoverParams",
    "HorizontalPath",
    "PathError",
    "cc_distance_upper",
    "cc_length",
    "distance_convergence",
    "finsler_distance_grid",
    "horizontal_differential",
    "integrate",
    "lip_bound_check",
    "metric_speed_check",
    "parallelogram_check",
    "stencil_anisotropy",
    "FinslerMetricField",
    "NormConstructionError",
    "SmoothNorm",
    "assemble_F",
    "build_anchor_norm",
    "build_cover",
    "build_sequence",
    "convergence_probe",
    "extend_norm",
    "gn_membership",
    "orthonormal_frame",
    "rank_radius",
    "riemannian_variant",
    "smooth_norm_approx",
    "sphere_hausdorff",
    "validate_sequence",
    "verify_anchor",
    "ChartDomain",
    "PolyField",
    "lie_bracket",
    "lie_hull",
    "FiberNorm",
    "GenMetricValue",
    "SubFinslerStructure",
    "check_hormander",
    "horizontal_norm",
    "is_horizontal",
    "lsc_probe",
    "rank",
]

__version__ = "0.1.0"
