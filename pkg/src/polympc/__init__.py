"""Trajectory optimization and closed-loop simulation for tight-space parking.

The package splits into five layers. ``geometry`` holds convex-polygon
primitives and the exact intersection oracle. ``constraints`` turns those
into differentiable collision residuals, one formulation based on a
separating line with labeled vertex sets and one on the minimum signed
distance to obstacle edges. ``vehicle`` is the kinematic bicycle model.
``nlp`` assembles the finite-horizon optimal control problem over either
formulation and ``ipm`` solves it with a primal-dual interior-point
method. ``sim`` closes the loop: receding-horizon episodes, batch grids,
and the completion-time-weighted success score.
"""

from . import ipm
from .constraints import (
    LabeledVertices,
    SeparatingLineVars,
    circle_residuals,
    msde_residuals,
    svm_residuals,
)
from .geometry import (
    CircleObstacle,
    ConvexPolygon,
    InvalidGeometryError,
    min_signed_distance,
    offset_region,
    point_in_polygon,
    polygon_circle_intersect,
    polygons_intersect,
)
from .ipm import SolveStatus, SolverOptions
from .nlp import (
    METHODS,
    NlpProblem,
    OcpWeights,
    assemble,
    find_separating_line,
    num_vars,
    separable,
    solve,
)
from .sim import (
    BatchSummary,
    EpisodeResult,
    Scenario,
    at_goal,
    grid_states,
    in_collision,
    make_scenarios,
    reference_times,
    run_batch,
    run_episode,
    sct,
)
from .vehicle import VehicleInput, VehicleParams, VehicleState, footprint, step_array

__version__ = "0.1.0"

__all__ = [
    "BatchSummary",
    "CircleObstacle",
    "ConvexPolygon",
    "EpisodeResult",
    "InvalidGeometryError",
    "LabeledVertices",
    "METHODS",
    "NlpProblem",
    "OcpWeights",
    "Scenario",
    "SeparatingLineVars",
    "SolveStatus",
    "SolverOptions",
    "VehicleInput",
    "VehicleParams",
    "VehicleState",
    "assemble",
    "at_goal",
    "circle_residuals",
    "find_separating_line",
    "footprint",
    "grid_states",
    "in_collision",
    "ipm",
    "make_scenarios",
    "min_signed_distance",
    "msde_residuals",
    "num_vars",
    "offset_region",
    "point_in_polygon",
    "polygon_circle_intersect",
    "polygons_intersect",
    "reference_times",
    "run_batch",
    "run_episode",
    "sct",
    "separable",
    "solve",
    "step_array",
    "svm_residuals",
]
