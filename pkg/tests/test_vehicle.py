import math

import numpy as np
import pytest

from polympc.vehicle import (
    SingularSteeringError,
    VehicleInput,
    VehicleParams,
    VehicleState,
    body_corners,
    footprint,
    kbm_step,
    rollout,
    step_array,
)

PARAMS = VehicleParams()


class TestKbmStep:
    def test_single_step_hand_values(self):
        # px += v cos(theta) dt, theta += v/l_f tan(delta) dt, etc.
        x = VehicleState(0.0, 0.0, 1.0, 0.0, 0.3)
        u = VehicleInput(0.5, 0.1)
        nxt = kbm_step(x, u, 0.2, PARAMS)
        assert nxt.px == pytest.approx(0.2)
        assert nxt.py == pytest.approx(0.0, abs=1e-15)
        assert nxt.v == pytest.approx(1.1)
        assert nxt.theta == pytest.approx(0.02474689996876986, abs=1e-15)
        assert nxt.delta == pytest.approx(0.32)

    def test_zero_input_zero_speed_is_fixed_point(self):
        x = VehicleState(1.0, 2.0, 0.0, 0.5, 0.1)
        nxt = kbm_step(x, VehicleInput(0.0, 0.0), 0.2, PARAMS)
        assert np.array_equal(nxt.to_array(), x.to_array())

    def test_reverse_motion(self):
        x = VehicleState(0.0, 0.0, -1.0, 0.0, 0.0)
        nxt = kbm_step(x, VehicleInput(0.0, 0.0), 0.2, PARAMS)
        assert nxt.px == pytest.approx(-0.2)

    def test_singular_steering_raises(self):
        x = VehicleState(0.0, 0.0, 1.0, 0.0, math.pi / 2)
        with pytest.raises(SingularSteeringError):
            kbm_step(x, VehicleInput(0.0, 0.0), 0.2, PARAMS)

    def test_rotation_equivariance(self):
        # rotating the pose by phi and stepping == stepping then rotating
        rng = np.random.default_rng(21)
        for _ in range(50):
            px, py, v, theta, delta = rng.uniform(
                [-5, -5, -2, -3, -0.6], [5, 5, 2, 3, 0.6]
            )
            u = VehicleInput(*rng.uniform([-1, -6], [1, 6]))
            phi = rng.uniform(-math.pi, math.pi)
            c, s = math.cos(phi), math.sin(phi)

            a = kbm_step(VehicleState(px, py, v, theta, delta), u, 0.2, PARAMS)
            b = kbm_step(
                VehicleState(
                    c * px - s * py, s * px + c * py, v, theta + phi, delta
                ),
                u,
                0.2,
                PARAMS,
            )
            assert b.px == pytest.approx(c * a.px - s * a.py, abs=1e-12)
            assert b.py == pytest.approx(s * a.px + c * a.py, abs=1e-12)
            assert b.theta == pytest.approx(a.theta + phi, abs=1e-12)
            assert b.v == pytest.approx(a.v)
            assert b.delta == pytest.approx(a.delta)

    def test_step_array_matches_scalar_step(self):
        rng = np.random.default_rng(22)
        xs = rng.uniform([-5, -5, -2, -3, -0.6], [5, 5, 2, 3, 0.6], size=(30, 5))
        us = rng.uniform([-1, -6], [1, 6], size=(30, 2))
        batched = step_array(xs, us, 0.2, PARAMS.l_f)
        for x, u, b in zip(xs, us, batched):
            one = kbm_step(
                VehicleState.from_array(x), VehicleInput.from_array(u), 0.2, PARAMS
            )
            assert np.array_equal(one.to_array(), b)


class TestRollout:
    def test_length_and_initial_state(self):
        x0 = VehicleState(0.0, 0.0, 0.0, 0.0, 0.0)
        us = [VehicleInput(0.1, 0.0)] * 7
        states = rollout(x0, us, 0.2, PARAMS)
        assert states.shape == (8, 5)
        assert np.array_equal(states[0], x0.to_array())

    def test_matches_manual_fold(self):
        rng = np.random.default_rng(23)
        x0 = VehicleState(*rng.uniform(-1, 1, size=5))
        us = [VehicleInput(*rng.uniform(-0.5, 0.5, size=2)) for _ in range(10)]
        states = rollout(x0, us, 0.2, PARAMS)
        state = x0
        for k, u in enumerate(us):
            state = kbm_step(state, u, 0.2, PARAMS)
            assert np.array_equal(states[k + 1], state.to_array())

    def test_straight_line_constant_accel_exact(self):
        # binary-fraction values make every Euler update exact in float, so
        # the 100-step rollout must equal the closed-form sums to 0 ulp
        n = 100
        dtau = 0.25
        a = 0.03125
        v0 = 0.5
        x0 = VehicleState(0.125, 0.25, v0, 0.0, 0.0)
        us = [VehicleInput(a, 0.0)] * n
        states = rollout(x0, us, dtau, PARAMS)
        for k in range(n + 1):
            v_k = v0 + a * dtau * k
            px_k = 0.125 + dtau * (k * v0 + a * dtau * (k * (k - 1) / 2))
            assert states[k, 2] == v_k
            assert states[k, 0] == px_k
            assert states[k, 1] == 0.25
            assert states[k, 3] == 0.0
            assert states[k, 4] == 0.0


class TestFootprint:
    def test_axis_aligned_extents(self):
        poly = footprint(VehicleState(0.0, 0.0, 0.0, 0.0, 0.0), PARAMS)
        v = poly.vertices
        assert v[:, 0].min() == pytest.approx(-0.85)
        assert v[:, 0].max() == pytest.approx(3.25)
        assert v[:, 1].min() == pytest.approx(-0.9)
        assert v[:, 1].max() == pytest.approx(0.9)

    def test_zero_margin_extents(self):
        p = VehicleParams(d_margin=0.0)
        poly = footprint(VehicleState(0.0, 0.0, 0.0, 0.0, 0.0), p)
        v = poly.vertices
        assert v[:, 0].min() == pytest.approx(-0.8)
        assert v[:, 0].max() == pytest.approx(3.2)
        assert v[:, 1].min() == pytest.approx(-0.85)
        assert v[:, 1].max() == pytest.approx(0.85)

    def test_quarter_turn_swaps_extents(self):
        poly = footprint(VehicleState(0.0, 0.0, 0.0, math.pi / 2, 0.0), PARAMS)
        v = poly.vertices
        assert v[:, 1].min() == pytest.approx(-0.85)
        assert v[:, 1].max() == pytest.approx(3.25)
        assert v[:, 0].min() == pytest.approx(-0.9)
        assert v[:, 0].max() == pytest.approx(0.9)

    def test_translation_follows_position(self):
        base = footprint(VehicleState(0.0, 0.0, 0.0, 0.4, 0.0), PARAMS)
        moved = footprint(VehicleState(3.0, -2.0, 0.0, 0.4, 0.0), PARAMS)
        assert np.allclose(moved.vertices, base.vertices + np.array([3.0, -2.0]))

    def test_diagonal_invariant_under_rotation(self):
        diag = math.hypot(
            PARAMS.l_car + 2 * PARAMS.d_margin, PARAMS.w_car + 2 * PARAMS.d_margin
        )
        rng = np.random.default_rng(24)
        for theta in rng.uniform(-math.pi, math.pi, size=20):
            v = footprint(VehicleState(1.0, 2.0, 0.0, theta, 0.0), PARAMS).vertices
            measured = math.hypot(*(v[2] - v[0]))
            assert measured == pytest.approx(diag, abs=1e-12)

    def test_body_corners_ccw_starting_rear_right(self):
        v = body_corners(PARAMS)
        assert np.allclose(v[0], [-0.85, -0.9])
        assert np.allclose(v[1], [3.25, -0.9])


class TestVehicleParams:
    def test_defaults(self):
        p = VehicleParams()
        assert (p.l_car, p.w_car, p.l_f, p.l_roh) == (4.0, 1.7, 2.5, 0.8)
        assert (p.v_lim, p.delta_lim, p.vdot_lim, p.deltadot_lim) == (
            2.0,
            0.70,
            1.0,
            6.28,
        )
        assert p.d_margin == 0.05

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            VehicleParams(l_f=0.0)
        with pytest.raises(ValueError):
            VehicleParams(l_roh=5.0)
        with pytest.raises(ValueError):
            VehicleParams(d_margin=-0.1)
        with pytest.raises(ValueError):
            VehicleParams(v_lim=0.0)
