"""Convex 2-D geometry primitives for collision checking and avoidance.

A point is any length-2 array-like ``(x, y)`` in meters. Polygons are
canonicalized to counter-clockwise vertex order on construction and validated
for strict convexity, so every downstream routine can rely on the invariants
instead of re-checking them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Separates modeling bugs (collapsed or collinear polygons) from float noise.
DEGENERACY_TOL = 1e-12  # m^2


class InvalidGeometryError(ValueError):
    """Degenerate or non-convex polygon input."""


class UnsupportedShapeError(ValueError):
    """The operation requires a shape class it cannot handle."""


@dataclass(frozen=True)
class EdgeLine:
    """Edge line alpha*x + beta*y + gamma = 0 with unit normal (alpha, beta).

    The normal points into the polygon interior, so :meth:`evaluate` is the
    signed distance in meters from the line, positive on the interior side.
    """

    alpha: float
    beta: float
    gamma: float

    def evaluate(self, p) -> float:
        x, y = float(p[0]), float(p[1])
        return self.alpha * x + self.beta * y + self.gamma


class ConvexPolygon:
    """Strictly convex polygon with counter-clockwise vertex order.

    Vertices may be passed in either winding; clockwise input is reversed
    (keeping the first vertex first). Repeated or collinear vertices raise
    :class:`InvalidGeometryError`.
    """

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise InvalidGeometryError(
                f"need an (n>=3, 2) vertex array, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidGeometryError("non-finite vertex coordinates")

        area2 = _signed_area2(v)
        if abs(area2) < DEGENERACY_TOL:
            raise InvalidGeometryError("polygon area below degeneracy tolerance")
        if area2 < 0.0:
            # Reverse winding, keep vertex 0 first so constructions that
            # enumerate corners stay predictable.
            v = np.vstack([v[:1], v[:0:-1]])

        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        if np.any(cross < DEGENERACY_TOL):
            raise InvalidGeometryError(
                "vertices are not strictly convex in order (repeated or "
                "collinear vertex, or self-intersecting input)"
            )

        v.setflags(write=False)
        self.vertices = v

        # Interior-positive unit-normal edge lines, one row (alpha, beta,
        # gamma) per edge i running vertices[i] -> vertices[i+1].
        length = np.hypot(e[:, 0], e[:, 1])
        normals = np.column_stack([-e[:, 1], e[:, 0]]) / length[:, None]
        gammas = -np.einsum("ij,ij->i", normals, v)
        la = np.column_stack([normals, gammas])
        la.setflags(write=False)
        self.line_array = la

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def __repr__(self):
        return f"ConvexPolygon({self.vertices.tolist()!r})"


@dataclass(frozen=True)
class CircleObstacle:
    """Disc obstacle: center (x, y) in meters, radius in meters."""

    center: tuple
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.shape != (2,) or not np.all(np.isfinite(c)):
            raise InvalidGeometryError("circle center must be a finite (x, y)")
        if not (self.radius > 0.0 and np.isfinite(self.radius)):
            raise InvalidGeometryError("circle radius must be positive")
        object.__setattr__(self, "center", (float(c[0]), float(c[1])))


@dataclass(frozen=True)
class OffsetRegion:
    """Rectangle grown by a radius: chamfered octagon plus corner discs.

    The union of ``octagon`` and ``corner_circles`` is exactly the set of
    points within ``radius`` of the source rectangle (its Minkowski sum with
    the closed disc), which is the keep-out region a circular obstacle's
    center must avoid.
    """

    octagon: ConvexPolygon
    corner_circles: tuple
    radius: float


def _signed_area2(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def edge_lines(poly: ConvexPolygon) -> list[EdgeLine]:
    """Interior-positive unit-normal line coefficients, one per edge.

    Edge i runs from vertex i to vertex i+1 (cyclic); its line evaluates to
    +distance for points on the interior side.
    """
    return [EdgeLine(*row) for row in poly.line_array]


def min_signed_distance(p, poly: ConvexPolygon) -> tuple[float, int]:
    """Minimum over edges of the signed line distance from ``p``.

    Positive inside the polygon, negative outside, zero on the boundary.
    Note this is a lower bound on the true Euclidean distance outside (it
    measures to edge *lines*, not segments), which is what the avoidance
    constraints use. Returns ``(d, argmin_edge_index)``; ties take the lowest
    index, matching the subgradient convention of the constraint Jacobians.
    """
    la = poly.line_array
    vals = la[:, 0] * float(p[0]) + la[:, 1] * float(p[1]) + la[:, 2]
    idx = int(np.argmin(vals))
    return float(vals[idx]), idx


def point_in_polygon(p, poly: ConvexPolygon) -> bool:
    """Closed-set membership test: boundary points count as inside."""
    d, _ = min_signed_distance(p, poly)
    return d >= 0.0


def _projection_gap(a: ConvexPolygon, b: ConvexPolygon) -> float:
    """Largest separation over a's edge normals (negative = overlap on all)."""
    best = -np.inf
    for alpha, beta, _ in a.line_array:
        axis = np.array([alpha, beta])
        pa = a.vertices @ axis
        pb = b.vertices @ axis
        best = max(best, pb.min() - pa.max(), pa.min() - pb.max())
    return best


def polygons_intersect(a: ConvexPolygon, b: ConvexPolygon) -> bool:
    """Separating-axis intersection test for convex polygons.

    Closed-set semantics: touching boundaries count as intersecting. Used as
    the ground-truth collision oracle everywhere else.
    """
    return _projection_gap(a, b) <= 0.0 and _projection_gap(b, a) <= 0.0


def distance_to_polygon(p, poly: ConvexPolygon) -> float:
    """Euclidean distance from a point to a polygon (0 inside)."""
    if point_in_polygon(p, poly):
        return 0.0
    q = np.asarray(p, dtype=float)
    v = poly.vertices
    w = np.roll(v, -1, axis=0)
    e = w - v
    # clamp the projection onto each edge segment
    t = np.einsum("ij,ij->i", q - v, e) / np.einsum("ij,ij->i", e, e)
    t = np.clip(t, 0.0, 1.0)
    closest = v + t[:, None] * e
    return float(np.min(np.hypot(*(q - closest).T)))


def polygon_circle_intersect(poly: ConvexPolygon, circle: CircleObstacle) -> bool:
    """Closed-set overlap test between a polygon and a disc."""
    return distance_to_polygon(circle.center, poly) <= circle.radius


def offset_region(footprint: ConvexPolygon, r: float) -> OffsetRegion:
    """Grow a rectangular footprint by radius ``r``.

    Each corner is displaced by ``r`` along the outward normals of both
    adjacent edges, giving a chamfered octagon; a disc of radius ``r`` at each
    corner fills in the chamfer so the union is the exact Minkowski sum of the
    rectangle with a closed disc.

    Only rectangles are supported, since the vehicle footprint is one; other
    shapes raise :class:`UnsupportedShapeError`.
    """
    if not (r > 0.0 and np.isfinite(r)):
        raise InvalidGeometryError("offset radius must be positive")
    v = footprint.vertices
    if v.shape[0] != 4:
        raise UnsupportedShapeError("offset region requires a 4-vertex rectangle")
    e = np.roll(v, -1, axis=0) - v
    dots = np.einsum("ij,ij->i", e, np.roll(e, -1, axis=0))
    scale = np.hypot(e[:, 0], e[:, 1]).max() ** 2
    if np.any(np.abs(dots) > 1e-9 * scale):
        raise UnsupportedShapeError("offset region requires right-angle corners")

    # Outward normal of edge i (CCW polygon: outward = right of direction).
    length = np.hypot(e[:, 0], e[:, 1])
    out = np.column_stack([e[:, 1], -e[:, 0]]) / length[:, None]

    verts = []
    for i in range(4):
        n_in = out[i - 1]  # edge arriving at vertex i
        n_out = out[i]     # edge leaving vertex i
        verts.append(v[i] + r * n_in)
        verts.append(v[i] + r * n_out)
    octagon = ConvexPolygon(np.array(verts))
    circles = tuple(CircleObstacle(tuple(corner), r) for corner in v)
    return OffsetRegion(octagon=octagon, corner_circles=circles, radius=float(r))
