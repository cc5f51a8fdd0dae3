import math

import numpy as np
import pytest

from polympc.geometry import (
    CircleObstacle,
    ConvexPolygon,
    InvalidGeometryError,
    UnsupportedShapeError,
    distance_to_polygon,
    edge_lines,
    min_signed_distance,
    offset_region,
    point_in_polygon,
    polygon_circle_intersect,
    polygons_intersect,
)

UNIT_SQUARE = ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])


def square(xmin, ymin, side=1.0):
    return ConvexPolygon(
        [
            (xmin, ymin),
            (xmin + side, ymin),
            (xmin + side, ymin + side),
            (xmin, ymin + side),
        ]
    )


def random_convex_polygon(rng, n=None, radius=1.0, center=(0.0, 0.0)):
    """Random strictly convex polygon: sorted angles on a jittered circle."""
    n = n or rng.integers(3, 9)
    while True:
        angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=n))
        if np.min(np.diff(angles)) < 1e-2:
            continue
        radii = radius * rng.uniform(0.6, 1.0, size=n)
        pts = np.column_stack(
            [center[0] + radii * np.cos(angles), center[1] + radii * np.sin(angles)]
        )
        try:
            return ConvexPolygon(pts)
        except InvalidGeometryError:
            continue


class TestConvexPolygon:
    def test_ccw_canonicalization_preserves_first_vertex(self):
        cw = ConvexPolygon([(0, 0), (0, 1), (1, 1), (1, 0)])
        assert np.allclose(cw.vertices[0], (0, 0))
        # now CCW: positive cross products all the way around
        e = np.roll(cw.vertices, -1, axis=0) - cw.vertices
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        assert np.all(cross > 0)

    def test_repeated_vertex_rejected(self):
        with pytest.raises(InvalidGeometryError):
            ConvexPolygon([(0, 0), (1, 0), (1, 0), (0, 1)])

    def test_collinear_vertex_rejected(self):
        with pytest.raises(InvalidGeometryError):
            ConvexPolygon([(0, 0), (0.5, 0), (1, 0), (1, 1), (0, 1)])

    def test_nonconvex_rejected(self):
        with pytest.raises(InvalidGeometryError):
            ConvexPolygon([(0, 0), (2, 0), (2, 2), (1, 0.5), (0, 2)])

    def test_too_few_vertices_rejected(self):
        with pytest.raises(InvalidGeometryError):
            ConvexPolygon([(0, 0), (1, 0)])

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidGeometryError):
            ConvexPolygon([(0, 0), (np.nan, 0), (1, 1)])

    def test_vertices_read_only(self):
        with pytest.raises(ValueError):
            UNIT_SQUARE.vertices[0, 0] = 5.0


class TestEdgeLines:
    def test_unit_square_bottom_edge(self):
        lines = edge_lines(UNIT_SQUARE)
        assert lines[0].alpha == pytest.approx(0.0, abs=1e-15)
        assert lines[0].beta == pytest.approx(1.0)
        assert lines[0].gamma == pytest.approx(0.0, abs=1e-15)

    def test_unit_square_right_edge(self):
        lines = edge_lines(UNIT_SQUARE)
        assert lines[1].alpha == pytest.approx(-1.0)
        assert lines[1].beta == pytest.approx(0.0, abs=1e-15)
        assert lines[1].gamma == pytest.approx(1.0)

    def test_unit_normals(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            poly = random_convex_polygon(rng)
            for ln in edge_lines(poly):
                assert math.hypot(ln.alpha, ln.beta) == pytest.approx(1.0, abs=1e-12)

    def test_edge_endpoints_on_line(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            poly = random_convex_polygon(rng)
            v = poly.vertices
            for i, ln in enumerate(edge_lines(poly)):
                assert abs(ln.evaluate(v[i])) < 1e-12
                assert abs(ln.evaluate(v[(i + 1) % len(v)])) < 1e-12

    def test_pentagon_apothem_at_centroid(self):
        # regular pentagon, circumradius 2: every edge line gives the apothem
        # 2*cos(pi/5) at the center
        ang = np.pi / 2 + 2 * np.pi * np.arange(5) / 5
        penta = ConvexPolygon(np.column_stack([2 * np.cos(ang), 2 * np.sin(ang)]))
        apothem = 2 * math.cos(math.pi / 5)  # 1.6180339887498949
        for ln in edge_lines(penta):
            assert ln.evaluate((0.0, 0.0)) == pytest.approx(apothem, abs=1e-12)

    def test_interior_positive_on_random_polygons(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            poly = random_convex_polygon(rng)
            c = poly.centroid
            for ln in edge_lines(poly):
                assert ln.evaluate(c) > 0


class TestMinSignedDistance:
    def test_interior_point_of_unit_square(self):
        d, _ = min_signed_distance((0.5, 0.5), UNIT_SQUARE)
        assert d == pytest.approx(0.5)

    def test_exterior_point_right_of_unit_square(self):
        d, idx = min_signed_distance((2.0, 0.5), UNIT_SQUARE)
        assert d == pytest.approx(-1.0)
        assert idx == 1  # right edge

    def test_boundary_point_ties_take_lowest_index(self):
        d, idx = min_signed_distance((0.0, 0.0), UNIT_SQUARE)
        assert d == pytest.approx(0.0, abs=1e-15)
        assert idx == 0  # bottom and left tie at 0; bottom has the lower index

    def test_center_tie_takes_lowest_index(self):
        d, idx = min_signed_distance((0.5, 0.5), UNIT_SQUARE)
        assert idx == 0

    def test_matches_point_in_polygon(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            poly = random_convex_polygon(rng)
            p = rng.uniform(-1.5, 1.5, size=2)
            d, _ = min_signed_distance(p, poly)
            assert point_in_polygon(p, poly) == (d >= 0.0)


class TestPolygonsIntersect:
    def test_disjoint_squares(self):
        assert not polygons_intersect(UNIT_SQUARE, square(3.0, 0.0))

    def test_overlapping_squares(self):
        assert polygons_intersect(UNIT_SQUARE, square(0.5, 0.5))

    def test_touching_squares_count_as_intersecting(self):
        assert polygons_intersect(UNIT_SQUARE, square(1.0, 0.0))

    def test_touching_corner_counts_as_intersecting(self):
        assert polygons_intersect(UNIT_SQUARE, square(1.0, 1.0))

    def test_containment_detected(self):
        big = square(-2.0, -2.0, side=5.0)
        assert polygons_intersect(big, UNIT_SQUARE)
        assert polygons_intersect(UNIT_SQUARE, big)

    def test_cross_configuration_intersects_without_vertex_containment(self):
        horizontal = ConvexPolygon([(-2, -0.5), (2, -0.5), (2, 0.5), (-2, 0.5)])
        vertical = ConvexPolygon([(-0.5, -2), (0.5, -2), (0.5, 2), (-0.5, 2)])
        assert polygons_intersect(horizontal, vertical)
        for v in horizontal.vertices:
            assert not point_in_polygon(v, vertical)
        for v in vertical.vertices:
            assert not point_in_polygon(v, horizontal)

    def test_symmetry_on_random_pairs(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = random_convex_polygon(rng, center=rng.uniform(-2, 2, size=2))
            b = random_convex_polygon(rng, center=rng.uniform(-2, 2, size=2))
            assert polygons_intersect(a, b) == polygons_intersect(b, a)

    def test_far_translation_separates(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            a = random_convex_polygon(rng)
            b = ConvexPolygon(a.vertices + np.array([10.0, 0.0]))
            assert not polygons_intersect(a, b)


class TestDistanceToPolygon:
    def test_inside_is_zero(self):
        assert distance_to_polygon((0.5, 0.5), UNIT_SQUARE) == 0.0

    def test_beyond_edge(self):
        assert distance_to_polygon((2.0, 0.5), UNIT_SQUARE) == pytest.approx(1.0)

    def test_beyond_corner(self):
        assert distance_to_polygon((2.0, 2.0), UNIT_SQUARE) == pytest.approx(
            math.sqrt(2.0)
        )

    def test_circle_overlap(self):
        assert polygon_circle_intersect(UNIT_SQUARE, CircleObstacle((2.0, 0.5), 1.0))
        assert not polygon_circle_intersect(
            UNIT_SQUARE, CircleObstacle((2.0, 0.5), 0.99)
        )


class TestOffsetRegion:
    def test_unit_square_radius_one_octagon(self):
        region = offset_region(UNIT_SQUARE, 1.0)
        expected = np.array(
            [
                (-1, 0),
                (0, -1),
                (1, -1),
                (2, 0),
                (2, 1),
                (1, 2),
                (0, 2),
                (-1, 1),
            ],
            dtype=float,
        )
        assert np.allclose(region.octagon.vertices, expected)

    def test_corner_circles(self):
        region = offset_region(UNIT_SQUARE, 1.0)
        centers = sorted(c.center for c in region.corner_circles)
        assert centers == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        assert all(c.radius == 1.0 for c in region.corner_circles)

    def test_small_radius_approaches_corners(self):
        region = offset_region(UNIT_SQUARE, 1e-4)
        v = region.octagon.vertices
        assert v.shape == (8, 2)
        for corner in UNIT_SQUARE.vertices:
            d = np.min(np.hypot(v[:, 0] - corner[0], v[:, 1] - corner[1]))
            assert d == pytest.approx(1e-4, rel=1e-9)

    def test_membership_matches_rectangle_distance(self):
        # octagon + corner discs must equal the set of points within r of the
        # rectangle; check 10k samples against the closed-form distance
        rect = ConvexPolygon([(0, 0), (2, 0), (2, 1), (0, 1)])
        r = 0.7
        region = offset_region(rect, r)

        def rect_dist(p):
            dx = max(0.0 - p[0], 0.0, p[0] - 2.0)
            dy = max(0.0 - p[1], 0.0, p[1] - 1.0)
            return math.hypot(dx, dy)

        rng = np.random.default_rng(13)
        pts = rng.uniform([-1.5, -1.5], [3.5, 2.5], size=(10_000, 2))
        mismatches = 0
        for p in pts:
            in_region = point_in_polygon(p, region.octagon) or any(
                math.hypot(p[0] - c.center[0], p[1] - c.center[1]) <= c.radius
                for c in region.corner_circles
            )
            if in_region != (rect_dist(p) <= r):
                mismatches += 1
        assert mismatches == 0

    def test_non_rectangle_rejected(self):
        ang = np.pi / 2 + 2 * np.pi * np.arange(5) / 5
        penta = ConvexPolygon(np.column_stack([np.cos(ang), np.sin(ang)]))
        with pytest.raises(UnsupportedShapeError):
            offset_region(penta, 0.5)

    def test_nonpositive_radius_rejected(self):
        with pytest.raises(InvalidGeometryError):
            offset_region(UNIT_SQUARE, 0.0)

    def test_rotated_rectangle_supported(self):
        c, s = math.cos(0.6), math.sin(0.6)
        rot = np.array([[c, -s], [s, c]])
        rect = ConvexPolygon(
            (np.array([(0, 0), (2, 0), (2, 1), (0, 1)], dtype=float) @ rot.T)
        )
        region = offset_region(rect, 0.3)
        assert region.octagon.n_vertices == 8
