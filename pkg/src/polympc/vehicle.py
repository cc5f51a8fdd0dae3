"""Kinematic bicycle model and vehicle footprint.

State is (px, py, v, theta, delta): rear-axle position, longitudinal speed,
heading, steering angle. Input is (v_dot, delta_dot). Discretization is a
single forward-Euler step per interval, used identically by the predictor and
the simulated plant so the two never disagree about the dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ConvexPolygon

# cos(delta) below this is treated as a singular steering angle
_SINGULAR_COS = 1e-9


class SingularSteeringError(ValueError):
    """Steering angle too close to +-pi/2 for the bicycle model."""


@dataclass
class VehicleState:
    px: float
    py: float
    v: float
    theta: float
    delta: float

    def to_array(self) -> np.ndarray:
        return np.array([self.px, self.py, self.v, self.theta, self.delta])

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        px, py, v, theta, delta = (float(c) for c in x)
        return cls(px, py, v, theta, delta)


@dataclass
class VehicleInput:
    v_dot: float
    delta_dot: float

    def to_array(self) -> np.ndarray:
        return np.array([self.v_dot, self.delta_dot])

    @classmethod
    def from_array(cls, u) -> "VehicleInput":
        return cls(float(u[0]), float(u[1]))


@dataclass(frozen=True)
class VehicleParams:
    """Geometry and limits of the ego vehicle (defaults: compact car setup)."""

    l_car: float = 4.0      # overall length [m]
    w_car: float = 1.7      # overall width [m]
    l_f: float = 2.5        # wheelbase [m]
    l_roh: float = 0.8      # rear overhang, rear axle to rear bumper [m]
    d_margin: float = 0.05  # safety inflation applied to the footprint [m]
    v_lim: float = 2.0          # |v| bound [m/s]
    delta_lim: float = 0.70     # |delta| bound [rad]
    vdot_lim: float = 1.0       # |v_dot| bound [m/s^2]
    deltadot_lim: float = 6.28  # |delta_dot| bound [rad/s]

    def __post_init__(self):
        for name in ("l_car", "w_car", "l_f", "l_roh"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.l_roh >= self.l_car:
            raise ValueError("rear overhang exceeds vehicle length")
        if self.d_margin < 0.0:
            raise ValueError("d_margin must be non-negative")
        for name in ("v_lim", "delta_lim", "vdot_lim", "deltadot_lim"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def step_array(x, u, dtau: float, l_f: float):
    """Forward-Euler step on raw arrays; broadcasts over leading axes.

    ``x`` is (..., 5), ``u`` is (..., 2). No singularity guard here; callers
    on the hot path keep delta bounded well away from pi/2.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.empty(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (5,))
    v, theta, delta = x[..., 2], x[..., 3], x[..., 4]
    out[..., 0] = x[..., 0] + v * np.cos(theta) * dtau
    out[..., 1] = x[..., 1] + v * np.sin(theta) * dtau
    out[..., 2] = v + u[..., 0] * dtau
    out[..., 3] = theta + v / l_f * np.tan(delta) * dtau
    out[..., 4] = delta + u[..., 1] * dtau
    return out


def kbm_step(
    state: VehicleState, u: VehicleInput, dtau: float, params: VehicleParams
) -> VehicleState:
    """One forward-Euler step of the kinematic bicycle model."""
    if abs(np.cos(state.delta)) < _SINGULAR_COS:
        raise SingularSteeringError(
            f"steering angle {state.delta} is too close to +-pi/2"
        )
    return VehicleState.from_array(
        step_array(state.to_array(), u.to_array(), dtau, params.l_f)
    )


def rollout(x0, inputs, dtau: float, params: VehicleParams):
    """Fold the Euler step over an input sequence; returns (len(inputs)+1, 5).

    Accepts VehicleState/VehicleInput objects or plain arrays.
    """
    states = np.empty((len(inputs) + 1, 5))
    states[0] = x0.to_array() if isinstance(x0, VehicleState) else np.asarray(x0)
    for k, u in enumerate(inputs):
        u_arr = u.to_array() if isinstance(u, VehicleInput) else np.asarray(u)
        if abs(np.cos(states[k, 4])) < _SINGULAR_COS:
            raise SingularSteeringError(
                f"steering angle {states[k, 4]} is too close to +-pi/2"
            )
        states[k + 1] = step_array(states[k], u_arr, dtau, params.l_f)
    return states


def _corners(params: VehicleParams, inflation: float) -> np.ndarray:
    x_rear = -(params.l_roh + inflation)
    x_front = params.l_car - params.l_roh + inflation
    half_w = params.w_car / 2.0 + inflation
    return np.array(
        [
            [x_rear, -half_w],
            [x_front, -half_w],
            [x_front, half_w],
            [x_rear, half_w],
        ]
    )


def body_corners(params: VehicleParams) -> np.ndarray:
    """Footprint corners in the body frame (rear axle at origin), CCW.

    The rectangle is the car inflated by d_margin on every side:
    x in [-(l_roh+m), l_car-l_roh+m], y in +-(w_car/2+m).
    """
    return _corners(params, params.d_margin)


def _pose_rect(state, params: VehicleParams, inflation: float) -> ConvexPolygon:
    x = state.to_array() if isinstance(state, VehicleState) else np.asarray(state)
    c, s = np.cos(x[3]), np.sin(x[3])
    rot = np.array([[c, -s], [s, c]])
    world = _corners(params, inflation) @ rot.T + x[:2]
    return ConvexPolygon(world)


def footprint(state, params: VehicleParams) -> ConvexPolygon:
    """Inflated footprint rectangle at the state's pose (array or VehicleState).

    This is the outline the avoidance constraints protect; it carries the
    d_margin buffer on every side.
    """
    return _pose_rect(state, params, params.d_margin)


def body_outline(state, params: VehicleParams) -> ConvexPolygon:
    """Exact body rectangle at the state's pose, without the safety margin.

    Physical contact means this outline overlaps an obstacle; the margin in
    footprint exists so constraint-boundary grazes stay clear of it.
    """
    return _pose_rect(state, params, 0.0)
