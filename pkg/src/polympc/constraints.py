"""Collision-avoidance constraint residuals.

Two interchangeable formulations over the same footprint/obstacle geometry,
both feasible when every residual is >= 0:

* separating line ("svm"): a line a*x + b*y + c = 0, whose coefficients are
  decision variables, must put the ego footprint vertices (label -1) on one
  side and the obstacle vertices (label +1) on the other with margin ``eps``.
  A small quadratic regularizer on (a, b) keeps the line scale bounded.
* minimum signed distance ("msde"): every vertex of one body must lie on or
  outside the other body's edge-line envelope, i.e. the minimum signed
  distance to the edge lines must be <= 0. The min is left unsmoothed; the
  Jacobian follows the argmin edge (lowest index on ties).

Circular obstacles combine per-vertex quadratic exclusion (the corner discs
of the footprint's offset region) with exclusion of the circle center from
the chamfered octagon, the latter expressed in whichever formulation is
active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CircleObstacle, ConvexPolygon, OffsetRegion

SVM_EPS = 1e-6     # separation margin
SVM_ALPHA = 1e-4   # line-coefficient regularization weight

EGO_LABEL = -1.0
OBSTACLE_LABEL = 1.0


@dataclass(frozen=True)
class SeparatingLineVars:
    a: float
    b: float
    c: float

    def to_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])


@dataclass
class LabeledVertices:
    """Stacked vertex coordinates with +-1 class labels."""

    points: np.ndarray  # (n, 2)
    labels: np.ndarray  # (n,), -1 for ego, +1 for obstacle

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must be (n, 2)")
        if self.labels.shape != (self.points.shape[0],):
            raise ValueError("labels must match points")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be -1 or +1")

    @classmethod
    def from_polygons(cls, ego_points, obstacle_points) -> "LabeledVertices":
        ego = np.asarray(ego_points, dtype=float)
        obs = np.asarray(obstacle_points, dtype=float)
        labels = np.concatenate(
            [np.full(len(ego), EGO_LABEL), np.full(len(obs), OBSTACLE_LABEL)]
        )
        return cls(np.vstack([ego, obs]), labels)


@dataclass
class ConstraintResiduals:
    """Residual values with per-row derivatives.

    ``wrt_points[k]`` is the derivative of ``values[k]`` with respect to the
    single moving point that row references (an ego/footprint vertex, an
    obstacle vertex, or a circle center, depending on the operation).
    ``wrt_line`` is the derivative w.r.t. (a, b, c) where a separating line
    is involved, zero rows otherwise. ``argmin_edges`` records which edge won
    the min for subgradient rows (-1 where not applicable).
    """

    values: np.ndarray
    wrt_points: np.ndarray
    wrt_line: np.ndarray | None = None
    argmin_edges: np.ndarray | None = None

    def feasible(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.values >= -tol))


def svm_residuals(
    verts: LabeledVertices, line: SeparatingLineVars, eps: float = SVM_EPS
) -> ConstraintResiduals:
    """Margin residuals q_k * (a*x_k + b*y_k + c) - eps, one per vertex."""
    x, y = verts.points[:, 0], verts.points[:, 1]
    q = verts.labels
    values = q * (line.a * x + line.b * y + line.c) - eps
    wrt_line = np.column_stack([q * x, q * y, q])
    wrt_points = np.column_stack([q * line.a, q * line.b])
    return ConstraintResiduals(values=values, wrt_points=wrt_points, wrt_line=wrt_line)


def svm_regularizer(
    line: SeparatingLineVars, alpha: float = SVM_ALPHA
) -> tuple[float, np.ndarray]:
    """Quadratic keep-small term alpha*(a^2 + b^2) and its (a, b, c) gradient."""
    value = alpha * (line.a**2 + line.b**2)
    grad = np.array([2.0 * alpha * line.a, 2.0 * alpha * line.b, 0.0])
    return value, grad


def _vertices_vs_edges(points: np.ndarray, poly: ConvexPolygon):
    """Residual -min_i l_i(p) per point, against poly's edge lines."""
    la = poly.line_array
    vals = points @ la[:, :2].T + la[:, 2]  # (n_points, n_edges)
    idx = np.argmin(vals, axis=1)           # lowest index wins ties
    values = -vals[np.arange(len(points)), idx]
    wrt_points = -la[idx, :2]
    return values, wrt_points, idx


def msde_residuals(ego: ConvexPolygon, obs: ConvexPolygon) -> ConstraintResiduals:
    """Mutual vertex-exclusion residuals between two convex polygons.

    Rows 0..n_ego-1: ego vertices against the obstacle's edge envelope;
    remaining rows: obstacle vertices against the ego's. Each row's
    ``wrt_points`` derivative is taken w.r.t. that row's vertex. Note the
    formulation only excludes vertex containment: crossing configurations
    where no vertex lies inside the other polygon stay feasible.
    """
    v_e, j_e, i_e = _vertices_vs_edges(ego.vertices, obs)
    v_o, j_o, i_o = _vertices_vs_edges(obs.vertices, ego)
    return ConstraintResiduals(
        values=np.concatenate([v_e, v_o]),
        wrt_points=np.vstack([j_e, j_o]),
        argmin_edges=np.concatenate([i_e, i_o]),
    )


def circle_residuals(
    footprint: ConvexPolygon,
    region: OffsetRegion,
    obs: CircleObstacle,
    method: str,
    line: SeparatingLineVars | None = None,
    eps: float = SVM_EPS,
) -> ConstraintResiduals:
    """Residuals keeping a disc obstacle clear of the footprint.

    ``region`` must be the footprint's offset region grown by the obstacle
    radius. Rows 0..3 are the quadratic corner terms |v_j - center|^2 - r^2
    (their ``wrt_points`` derivative is w.r.t. the footprint vertex); the
    remaining row(s) exclude the center from the chamfered octagon, either as
    a single min-signed-distance row (msde, derivative w.r.t. the center) or
    as labeled margin rows for the separating line (svm, octagon vertices
    labeled ego-side).
    """
    if method not in ("svm", "msde"):
        raise ValueError(f"unknown method {method!r}")
    if abs(region.radius - obs.radius) > 1e-9:
        raise ValueError(
            f"offset region radius {region.radius} does not match "
            f"obstacle radius {obs.radius}"
        )
    centers = np.array([c.center for c in region.corner_circles])
    if centers.shape != footprint.vertices.shape or not np.allclose(
        centers, footprint.vertices, atol=1e-9
    ):
        raise ValueError("offset region was not built from this footprint")

    center = np.asarray(obs.center, dtype=float)
    diff = footprint.vertices - center  # (4, 2)
    quad_values = np.einsum("ij,ij->i", diff, diff) - obs.radius**2
    quad_wrt = 2.0 * diff

    if method == "msde":
        oct_values, oct_wrt, oct_idx = _vertices_vs_edges(
            center[None, :], region.octagon
        )
        n = len(quad_values)
        return ConstraintResiduals(
            values=np.concatenate([quad_values, oct_values]),
            wrt_points=np.vstack([quad_wrt, oct_wrt]),
            argmin_edges=np.concatenate([np.full(n, -1), oct_idx]),
        )

    if line is None:
        raise ValueError("svm form needs the separating line variables")
    labeled = LabeledVertices.from_polygons(region.octagon.vertices, center[None, :])
    svm = svm_residuals(labeled, line, eps)
    zeros3 = np.zeros((len(quad_values), 3))
    return ConstraintResiduals(
        values=np.concatenate([quad_values, svm.values]),
        wrt_points=np.vstack([quad_wrt, svm.wrt_points]),
        wrt_line=np.vstack([zeros3, svm.wrt_line]),
    )
