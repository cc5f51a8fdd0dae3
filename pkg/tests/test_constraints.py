import math

import numpy as np
import pytest
from scipy.optimize import linprog

from polympc.constraints import (
    SVM_ALPHA,
    SVM_EPS,
    ConstraintResiduals,
    LabeledVertices,
    SeparatingLineVars,
    circle_residuals,
    msde_residuals,
    svm_regularizer,
    svm_residuals,
)
from polympc.geometry import (
    CircleObstacle,
    ConvexPolygon,
    offset_region,
    point_in_polygon,
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
    from test_geometry import random_convex_polygon as gen

    return gen(rng, n=n, radius=radius, center=center)


def lp_separable(ego_pts, obs_pts):
    """Phase-one LP oracle: is there a line with unit-scaled margin?

    Minimizes t subject to q*(a*x + b*y + c) >= 1 - t, t >= 0. Optimal t of 0
    means strictly separable; intersecting hulls force t >= 1.
    """
    labeled = LabeledVertices.from_polygons(ego_pts, obs_pts)
    q = labeled.labels
    x, y = labeled.points[:, 0], labeled.points[:, 1]
    a_ub = np.column_stack([-q * x, -q * y, -q, -np.ones_like(q)])
    b_ub = -np.ones_like(q)
    res = linprog(
        c=[0.0, 0.0, 0.0, 1.0],
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=[(None, None)] * 3 + [(0.0, None)],
        method="highs",
    )
    assert res.status == 0
    return res.fun < 0.5, res.x[:3]


class TestSvmResiduals:
    def test_separated_squares_hand_values(self):
        # ego square x in [2,3] on the negative side of x = 1.5
        ego = square(2.0, 0.0)
        labeled = LabeledVertices.from_polygons(ego.vertices, UNIT_SQUARE.vertices)
        line = SeparatingLineVars(-1.0, 0.0, 1.5)
        res = svm_residuals(labeled, line)
        expected = np.array([0.5, 1.5, 1.5, 0.5, 1.5, 0.5, 0.5, 1.5]) - SVM_EPS
        assert np.allclose(res.values, expected, atol=1e-15)
        assert res.feasible()

    def test_zero_line_is_uniformly_infeasible(self):
        labeled = LabeledVertices.from_polygons(
            square(2.0, 0.0).vertices, UNIT_SQUARE.vertices
        )
        res = svm_residuals(labeled, SeparatingLineVars(0.0, 0.0, 0.0))
        assert np.allclose(res.values, -SVM_EPS)
        assert not res.feasible()

    def test_scale_property(self):
        rng = np.random.default_rng(31)
        labeled = LabeledVertices.from_polygons(
            rng.uniform(2, 3, size=(4, 2)), rng.uniform(0, 1, size=(4, 2))
        )
        line = SeparatingLineVars(*rng.normal(size=3))
        s = 3.7
        scaled = SeparatingLineVars(s * line.a, s * line.b, s * line.c)
        r1 = svm_residuals(labeled, line)
        r2 = svm_residuals(labeled, scaled)
        assert np.allclose(r2.values + SVM_EPS, s * (r1.values + SVM_EPS))

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(32)
        h = 1e-7
        for _ in range(20):
            pts = rng.uniform(-2, 2, size=(6, 2))
            labels = rng.choice([-1.0, 1.0], size=6)
            labeled = LabeledVertices(pts, labels)
            line = SeparatingLineVars(*rng.normal(size=3))
            res = svm_residuals(labeled, line)
            # line coefficients
            for j in range(3):
                la = np.array([line.a, line.b, line.c])
                lp_, lm_ = la.copy(), la.copy()
                lp_[j] += h
                lm_[j] -= h
                fd = (
                    svm_residuals(labeled, SeparatingLineVars(*lp_)).values
                    - svm_residuals(labeled, SeparatingLineVars(*lm_)).values
                ) / (2 * h)
                assert np.allclose(res.wrt_line[:, j], fd, rtol=1e-6, atol=1e-8)
            # each row's own vertex
            for k in range(6):
                for j in range(2):
                    pp, pm = pts.copy(), pts.copy()
                    pp[k, j] += h
                    pm[k, j] -= h
                    fd = (
                        svm_residuals(LabeledVertices(pp, labels), line).values[k]
                        - svm_residuals(LabeledVertices(pm, labels), line).values[k]
                    ) / (2 * h)
                    assert res.wrt_points[k, j] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_feasible_implies_sat_disjoint(self):
        # a feasible margin line strictly separates, so SAT must agree
        rng = np.random.default_rng(33)
        hits = 0
        for _ in range(300):
            a = random_convex_polygon(rng, center=rng.uniform(-2, 2, size=2))
            b = random_convex_polygon(rng, center=rng.uniform(-2, 2, size=2))
            labeled = LabeledVertices.from_polygons(a.vertices, b.vertices)
            line = SeparatingLineVars(*rng.normal(size=3))
            if svm_residuals(labeled, line).feasible():
                hits += 1
                assert not polygons_intersect(a, b)
        assert hits > 0  # the sweep actually exercised feasible cases

    def test_sat_disjoint_implies_line_exists(self):
        rng = np.random.default_rng(34)
        checked = 0
        for _ in range(200):
            a = random_convex_polygon(rng, center=rng.uniform(-3, 3, size=2))
            b = random_convex_polygon(rng, center=rng.uniform(-3, 3, size=2))
            if polygons_intersect(a, b):
                continue
            checked += 1
            ok, coeffs = lp_separable(a.vertices, b.vertices)
            assert ok
            res = svm_residuals(
                LabeledVertices.from_polygons(a.vertices, b.vertices),
                SeparatingLineVars(*coeffs),
            )
            assert res.feasible()
        assert checked > 30

    def test_intersecting_pair_has_no_line(self):
        ok, _ = lp_separable(UNIT_SQUARE.vertices, square(0.5, 0.5).vertices)
        assert not ok

    def test_bad_labels_rejected(self):
        with pytest.raises(ValueError):
            LabeledVertices(np.zeros((2, 2)), np.array([1.0, 2.0]))


class TestSvmRegularizer:
    def test_value_and_gradient(self):
        value, grad = svm_regularizer(SeparatingLineVars(3.0, 4.0, 7.0))
        assert value == pytest.approx(25.0 * SVM_ALPHA)
        assert np.allclose(grad, [6.0 * SVM_ALPHA, 8.0 * SVM_ALPHA, 0.0])

    def test_c_is_free(self):
        v1, _ = svm_regularizer(SeparatingLineVars(1.0, 2.0, 0.0))
        v2, _ = svm_regularizer(SeparatingLineVars(1.0, 2.0, 100.0))
        assert v1 == v2


class TestMsdeResiduals:
    def test_separated_squares_hand_values(self):
        res = msde_residuals(UNIT_SQUARE, square(4.0, 0.0))
        assert np.allclose(res.values, [4, 3, 3, 4, 3, 4, 4, 3])
        assert res.feasible()

    def test_obstacle_vertex_at_ego_centroid(self):
        obs = square(0.5, 0.5)
        res = msde_residuals(UNIT_SQUARE, obs)
        # obstacle vertex (0.5, 0.5) sits at the ego centroid, 0.5 inside
        assert res.values[4] == pytest.approx(-0.5)
        assert not res.feasible()

    def test_cross_configuration_feasible_despite_intersection(self):
        horizontal = ConvexPolygon([(-2, -0.5), (2, -0.5), (2, 0.5), (-2, 0.5)])
        vertical = ConvexPolygon([(-0.5, -2), (0.5, -2), (0.5, 2), (-0.5, 2)])
        assert polygons_intersect(horizontal, vertical)
        res = msde_residuals(horizontal, vertical)
        assert res.feasible()
        assert np.all(res.values > 0)

    def test_touching_squares_on_boundary(self):
        res = msde_residuals(UNIT_SQUARE, square(1.0, 0.0))
        assert res.feasible()
        assert np.min(res.values) == pytest.approx(0.0, abs=1e-15)

    def test_matches_vertex_containment_on_random_pairs(self):
        rng = np.random.default_rng(35)
        for _ in range(300):
            a = random_convex_polygon(rng, center=rng.uniform(-2, 2, size=2))
            b = random_convex_polygon(rng, center=rng.uniform(-2, 2, size=2))
            contained = any(point_in_polygon(v, b) for v in a.vertices) or any(
                point_in_polygon(v, a) for v in b.vertices
            )
            assert msde_residuals(a, b).feasible() == (not contained)

    def test_jacobian_matches_finite_differences_away_from_ties(self):
        rng = np.random.default_rng(36)
        h = 1e-7
        for _ in range(30):
            a = random_convex_polygon(rng, center=rng.uniform(-2, 2, size=2))
            b = random_convex_polygon(rng, center=rng.uniform(-2, 2, size=2))
            res = msde_residuals(a, b)
            n_a = a.n_vertices
            for k in range(len(res.values)):
                own, poly, other = (
                    (k, a, b) if k < n_a else (k - n_a, b, a)
                )
                # skip near-ties of the min, where the subgradient jumps
                la = other.line_array
                p = poly.vertices[own]
                vals = la[:, 0] * p[0] + la[:, 1] * p[1] + la[:, 2]
                svals = np.sort(vals)
                if svals[1] - svals[0] < 1e-5:
                    continue
                for j in range(2):
                    dp = np.zeros(2)
                    dp[j] = h
                    vp = _perturbed_residual(poly, other, own, dp, k < n_a)
                    vm = _perturbed_residual(poly, other, own, -dp, k < n_a)
                    fd = (vp - vm) / (2 * h)
                    assert res.wrt_points[k, j] == pytest.approx(
                        fd, rel=1e-6, abs=1e-8
                    )


def _perturbed_residual(poly, other, vid, dp, ego_side):
    verts = poly.vertices.copy()
    verts[vid] = verts[vid] + dp
    moved = ConvexPolygon(verts)
    if ego_side:
        return msde_residuals(moved, other).values[vid]
    return msde_residuals(other, moved).values[other.n_vertices + vid]


class TestCircleResiduals:
    def setup_method(self):
        self.fp = ConvexPolygon([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])

    def test_far_obstacle_hand_values(self):
        obs = CircleObstacle((3.0, 0.0), 1.0)
        region = offset_region(self.fp, 1.0)
        res = circle_residuals(self.fp, region, obs, "msde")
        assert len(res.values) == 5
        assert np.allclose(np.sort(res.values[:4]), [5.5, 5.5, 11.5, 11.5])
        assert res.values[4] == pytest.approx(1.5)
        assert res.feasible()

    def test_center_at_footprint_vertex(self):
        r = 0.8
        obs = CircleObstacle((0.5, 0.5), r)
        region = offset_region(self.fp, r)
        res = circle_residuals(self.fp, region, obs, "msde")
        assert np.min(res.values[:4]) == pytest.approx(-(r**2))
        assert not res.feasible()

    def test_center_on_octagon_boundary(self):
        r = 0.6
        obs = CircleObstacle((0.5 + r, 0.0), r)  # r beyond the right edge midpoint
        region = offset_region(self.fp, r)
        res = circle_residuals(self.fp, region, obs, "msde")
        assert np.all(res.values[:4] > 0)
        assert res.values[4] == pytest.approx(0.0, abs=1e-12)

    def test_svm_form_has_nine_line_rows(self):
        r = 1.0
        obs = CircleObstacle((3.0, 0.0), r)
        region = offset_region(self.fp, r)
        line = SeparatingLineVars(1.0, 0.0, -2.2)  # x = 2.2, obstacle side positive
        res = circle_residuals(self.fp, region, obs, "svm", line=line)
        assert len(res.values) == 13
        assert res.wrt_line.shape == (13, 3)
        assert np.allclose(res.wrt_line[:4], 0.0)
        assert res.feasible()

    def test_svm_form_requires_line(self):
        obs = CircleObstacle((3.0, 0.0), 1.0)
        region = offset_region(self.fp, 1.0)
        with pytest.raises(ValueError):
            circle_residuals(self.fp, region, obs, "svm")

    def test_radius_mismatch_rejected(self):
        obs = CircleObstacle((3.0, 0.0), 1.0)
        region = offset_region(self.fp, 0.5)
        with pytest.raises(ValueError, match="radius"):
            circle_residuals(self.fp, region, obs, "msde")

    def test_unknown_method_rejected(self):
        obs = CircleObstacle((3.0, 0.0), 1.0)
        region = offset_region(self.fp, 1.0)
        with pytest.raises(ValueError, match="method"):
            circle_residuals(self.fp, region, obs, "sdf")

    def test_foreign_region_rejected(self):
        other = ConvexPolygon([(5, 5), (6, 5), (6, 6), (5, 6)])
        obs = CircleObstacle((3.0, 0.0), 1.0)
        region = offset_region(other, 1.0)
        with pytest.raises(ValueError, match="footprint"):
            circle_residuals(self.fp, region, obs, "msde")

    def test_quadratic_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(37)
        h = 1e-7
        obs = CircleObstacle((2.1, 1.3), 0.9)
        region = offset_region(self.fp, 0.9)
        res = circle_residuals(self.fp, region, obs, "msde")
        center = np.array(obs.center)
        for k in range(4):
            v = self.fp.vertices[k]
            for j in range(2):
                dp = np.zeros(2)
                dp[j] = h
                fp_ = np.dot(v + dp - center, v + dp - center) - obs.radius**2
                fm_ = np.dot(v - dp - center, v - dp - center) - obs.radius**2
                assert res.wrt_points[k, j] == pytest.approx(
                    (fp_ - fm_) / (2 * h), rel=1e-6
                )
