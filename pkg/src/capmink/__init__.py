"""Capacitary curvature measures of convex polygons and the inverse problem."""

from .bem import BemSolution, solve_harmonic_bem
from .capacitary import (
    BackendUnavailable,
    CapacityReport,
    InactiveNormal,
    capacity_report,
    check_star2,
    check_star3,
    curvature_measure,
    hadamard_gradient,
    p_to_one_trend,
    pcap,
)
from .config import ConfigError, SolverConfig
from .diagnostics import VerificationReport, monge_ampere_residual, verify_all
from .geometry import (
    ConvexPolygon,
    GeometryError,
    body_metrics,
    centered,
    hausdorff_distance,
    polygon_from_dict,
    polygon_from_support,
    polygon_to_dict,
    rectangle,
    regular_polygon,
    support_function,
    transform,
)
from .measures import (
    SurfaceMeasure,
    discretize_density,
    project_to_centroid_zero,
    validate_measure,
    weak_distance,
)
from .minkowski import (
    DegenerateIterate,
    Inadmissible,
    MinkowskiProblem,
    MinkowskiSolution,
    OptimizerConfig,
    Stalled,
    classical_polygon,
    solve_density,
    solve_discrete,
    uniqueness_check,
)
from .potential import PotentialSolution, analytic_disk, solve_potential

__all__ = [
    "BackendUnavailable",
    "BemSolution",
    "CapacityReport",
    "ConfigError",
    "ConvexPolygon",
    "DegenerateIterate",
    "GeometryError",
    "InactiveNormal",
    "Inadmissible",
    "MinkowskiProblem",
    "MinkowskiSolution",
    "OptimizerConfig",
    "PotentialSolution",
    "SolverConfig",
    "Stalled",
    "SurfaceMeasure",
    "VerificationReport",
    "analytic_disk",
    "body_metrics",
    "capacity_report",
    "centered",
    "check_star2",
    "check_star3",
    "classical_polygon",
    "curvature_measure",
    "discretize_density",
    "hadamard_gradient",
    "hausdorff_distance",
    "monge_ampere_residual",
    "p_to_one_trend",
    "pcap",
    "polygon_from_dict",
    "polygon_from_support",
    "polygon_to_dict",
    "project_to_centroid_zero",
    "rectangle",
    "regular_polygon",
    "solve_density",
    "solve_discrete",
    "solve_harmonic_bem",
    "solve_potential",
    "support_function",
    "transform",
    "uniqueness_check",
    "validate_measure",
    "verify_all",
    "weak_distance",
]
