"""Trajectory-optimization NLP: cost, dynamics defects, collision stacking.

Decision vector layout (N = horizon):

    [ x_1 .. x_N | u_1 .. u_{N-1} | per-obstacle separating lines ]

5 states per step, 2 inputs per interval, and in "svm" mode one (a, b, c)
line triple per obstacle per step, giving 7N - 2 (+ 3*n_obs*N) variables.
The transition into x_k is driven by u_k, with u_{N-1} held over the final
interval, so there are 5N dynamics-defect equality constraints. Inequalities
are the collision residuals of the active formulation; velocity, steering,
and input limits enter as variable bounds.

Evaluation is vectorized across steps and obstacles with precomputed
sparsity patterns, since the receding-horizon loop re-solves this problem
every cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import ipm
from .constraints import SVM_ALPHA, SVM_EPS
from .geometry import CircleObstacle, ConvexPolygon, offset_region
from .vehicle import VehicleParams, VehicleState, body_corners, step_array

METHODS = ("svm", "msde")


@dataclass(frozen=True)
class OcpWeights:
    """Diagonals of the quadratic cost: S_f (terminal), Q (stage), R (input rate)."""

    s_f: np.ndarray  # (5,)
    q: np.ndarray    # (5,)
    r: np.ndarray    # (2,)

    def __post_init__(self):
        for name, size in (("s_f", 5), ("q", 5), ("r", 2)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (size,):
                raise ValueError(f"{name} must have {size} diagonal entries")
            if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} entries must be finite and >= 0")
            object.__setattr__(self, name, arr)


def stage_cost(x, u, u_prev, x_ref, weights: OcpWeights) -> float:
    """State tracking plus input-rate penalty for one step."""
    dx = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
    du = np.asarray(u, dtype=float) - np.asarray(u_prev, dtype=float)
    return float(dx @ (weights.q * dx) + du @ (weights.r * du))


def terminal_cost(x, x_ref, weights: OcpWeights) -> float:
    dx = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
    return float(dx @ (weights.s_f * dx))


@dataclass
class NlpLayout:
    """Index map between the flat decision vector and its named slices."""

    horizon: int
    method: str
    n_obstacles: int
    num_vars: int
    n_eq: int
    n_ineq: int

    @property
    def n_lines(self) -> int:
        return self.n_obstacles if self.method == "svm" else 0

    @property
    def states_end(self) -> int:
        return 5 * self.horizon

    @property
    def inputs_end(self) -> int:
        return 7 * self.horizon - 2

    def state_slice(self, k: int) -> slice:
        # k is 1-based, matching x_1..x_N
        if not 1 <= k <= self.horizon:
            raise IndexError(f"state index {k} outside 1..{self.horizon}")
        return slice(5 * (k - 1), 5 * k)

    def input_slice(self, k: int) -> slice:
        if not 1 <= k <= self.horizon - 1:
            raise IndexError(f"input index {k} outside 1..{self.horizon - 1}")
        base = self.states_end + 2 * (k - 1)
        return slice(base, base + 2)

    def line_slice(self, obstacle: int, k: int) -> slice:
        if self.method != "svm":
            raise ValueError("separating-line variables exist only in svm mode")
        if not 0 <= obstacle < self.n_obstacles:
            raise IndexError(f"obstacle index {obstacle} outside the scenario")
        if not 1 <= k <= self.horizon:
            raise IndexError(f"line step {k} outside 1..{self.horizon}")
        base = self.inputs_end + 3 * (obstacle * self.horizon + (k - 1))
        return slice(base, base + 3)

    def states(self, z) -> np.ndarray:
        return z[: self.states_end].reshape(self.horizon, 5)

    def inputs(self, z) -> np.ndarray:
        return z[self.states_end : self.inputs_end].reshape(self.horizon - 1, 2)

    def lines(self, z) -> np.ndarray | None:
        if self.method != "svm":
            return None
        return z[self.inputs_end :].reshape(self.n_obstacles, self.horizon, 3)


def num_vars(horizon: int, n_obstacles: int, method: str) -> int:
    base = 7 * horizon - 2
    if method == "svm":
        base += 3 * n_obstacles * horizon
    return base


class _Ctx:
    """Per-point evaluation cache: poses, trig, footprint vertices."""

    def __init__(self, z, layout: NlpLayout, corners):
        self.z = z
        self.x = layout.states(z)
        self.u = layout.inputs(z)
        self.lines = layout.lines(z)
        self.px = self.x[:, 0]
        self.py = self.x[:, 1]
        self.cos = np.cos(self.x[:, 3])
        self.sin = np.sin(self.x[:, 3])
        self.wv, self.tv, self.rb = self.world(corners)

    def world(self, bpts):
        """World positions, d/dtheta tangents, and rotated offsets of body points."""
        bx, by = bpts[:, 0], bpts[:, 1]
        c, s = self.cos[:, None], self.sin[:, None]
        rbx = c * bx - s * by
        rby = s * bx + c * by
        w = np.stack([self.px[:, None] + rbx, self.py[:, None] + rby], axis=-1)
        t = np.stack([-s * bx - c * by, c * bx - s * by], axis=-1)
        rb = np.stack([rbx, rby], axis=-1)
        return w, t, rb


class _BlockBase:
    """One obstacle's residual rows: values, Jacobian data, Hessian data.

    Patterns (rows/cols index arrays) are fixed at construction; `eval`
    returns the residual values in global row order and the Jacobian entries
    aligned with the pattern. `hess` returns entries of sum_r lam_r *
    grad^2(residual_r) aligned with its own pattern.
    """

    rows_per_step: int

    def n_rows(self, n):
        return n * self.rows_per_step


def _pose_cols(n):
    base = 5 * np.arange(n)
    return base, base + 1, base + 3


def _row_grid(n, rows_per_step, local_rows, offset):
    """Global row index for (step, local_row) pairs, shaped (n, len(local_rows))."""
    return offset + rows_per_step * np.arange(n)[:, None] + np.asarray(local_rows)


class _PolyMsdeBlock(_BlockBase):
    def __init__(self, obs: ConvexPolygon, layout: NlpLayout, row_offset: int,
                 body_lines: np.ndarray):
        n = layout.horizon
        self.obs_lines = obs.line_array          # (m, 3)
        self.obs_verts = obs.vertices            # (m, 2)
        self.body_lines = body_lines             # (4, 3) ego rect, body frame
        m = len(self.obs_verts)
        self.m = m
        self.rows_per_step = 4 + m

        px, py, th = _pose_cols(n)
        pose = np.stack([px, py, th], axis=-1)   # (n, 3)

        rows_e = _row_grid(n, self.rows_per_step, np.arange(4), row_offset)
        rows_o = _row_grid(n, self.rows_per_step, 4 + np.arange(m), row_offset)
        self.ji_rows = np.concatenate(
            [np.repeat(rows_e, 3), np.repeat(rows_o, 3)]
        )
        self.ji_cols = np.concatenate(
            [
                np.broadcast_to(pose[:, None, :], (n, 4, 3)).ravel(),
                np.broadcast_to(pose[:, None, :], (n, m, 3)).ravel(),
            ]
        )
        # ego rows: one (theta, theta) entry; obs rows: (px,th)x2, (py,th)x2, (th,th)
        self.h_rows = np.concatenate(
            [rows_e.ravel(), np.repeat(rows_o, 5)]
        )
        self.h_r = np.concatenate(
            [
                np.broadcast_to(th[:, None], (n, 4)).ravel(),
                np.broadcast_to(
                    np.stack([px, th, py, th, th], axis=-1)[:, None, :], (n, m, 5)
                ).ravel(),
            ]
        )
        self.h_c = np.concatenate(
            [
                np.broadcast_to(th[:, None], (n, 4)).ravel(),
                np.broadcast_to(
                    np.stack([th, px, th, py, th], axis=-1)[:, None, :], (n, m, 5)
                ).ravel(),
            ]
        )

    def eval(self, ctx: _Ctx):
        n = len(ctx.px)
        ea, eb, eg = self.obs_lines.T
        vals = ctx.wv[..., 0, None] * ea + ctx.wv[..., 1, None] * eb + eg
        idx = np.argmin(vals, axis=-1)                       # (n, 4)
        dmin = np.take_along_axis(vals, idx[..., None], -1)[..., 0]
        ab = self.obs_lines[idx, :2]                         # (n, 4, 2)
        vals_e = -dmin
        d_e = np.stack(
            [
                -ab[..., 0],
                -ab[..., 1],
                -(ab[..., 0] * ctx.tv[..., 0] + ab[..., 1] * ctx.tv[..., 1]),
            ],
            axis=-1,
        )

        q = self.obs_verts
        dx = q[None, :, 0] - ctx.px[:, None]
        dy = q[None, :, 1] - ctx.py[:, None]
        c, s = ctx.cos[:, None], ctx.sin[:, None]
        wbx = c * dx + s * dy
        wby = -s * dx + c * dy
        la, lb_, lg = self.body_lines.T
        lv = wbx[..., None] * la + wby[..., None] * lb_ + lg  # (n, m, 4)
        oidx = np.argmin(lv, axis=-1)
        lmin = np.take_along_axis(lv, oidx[..., None], -1)[..., 0]
        nb = self.body_lines[oidx, :2]                        # (n, m, 2)
        gg = self.body_lines[oidx, 2]
        vals_o = -lmin
        ex = -s * dx + c * dy
        ey = -c * dx - s * dy
        d_o = np.stack(
            [
                c * nb[..., 0] - s * nb[..., 1],
                s * nb[..., 0] + c * nb[..., 1],
                -(nb[..., 0] * ex + nb[..., 1] * ey),
            ],
            axis=-1,
        )

        out = np.empty((n, self.rows_per_step))
        out[:, :4] = vals_e
        out[:, 4:] = vals_o
        ji = np.concatenate([d_e.ravel(), d_o.ravel()])

        self._h_e = (ab[..., 0] * ctx.rb[..., 0] + ab[..., 1] * ctx.rb[..., 1]).ravel()
        hpx = -s * nb[..., 0] - c * nb[..., 1]
        hpy = c * nb[..., 0] - s * nb[..., 1]
        htt = lmin - gg
        self._h_o = np.stack([hpx, hpx, hpy, hpy, htt], axis=-1).ravel()
        return out.ravel(), ji

    def hess(self, lam):
        lam2 = lam.reshape(-1, self.rows_per_step)
        w_e = lam2[:, :4].ravel()
        w_o = np.repeat(lam2[:, 4:].ravel(), 5)
        return np.concatenate([w_e * self._h_e, w_o * self._h_o])


class _PolySvmBlock(_BlockBase):
    def __init__(self, obs: ConvexPolygon, layout: NlpLayout, row_offset: int,
                 line_index: int):
        n = layout.horizon
        self.obs_verts = obs.vertices
        m = len(self.obs_verts)
        self.m = m
        self.line_index = line_index
        self.rows_per_step = 4 + m

        px, py, th = _pose_cols(n)
        lbase = layout.inputs_end + 3 * (line_index * n + np.arange(n))
        la, lb_, lc = lbase, lbase + 1, lbase + 2

        rows_e = _row_grid(n, self.rows_per_step, np.arange(4), row_offset)
        rows_o = _row_grid(n, self.rows_per_step, 4 + np.arange(m), row_offset)
        cols_e = np.stack([px, py, th, la, lb_, lc], axis=-1)  # (n, 6)
        cols_o = np.stack([la, lb_, lc], axis=-1)
        self.ji_rows = np.concatenate([np.repeat(rows_e, 6), np.repeat(rows_o, 3)])
        self.ji_cols = np.concatenate(
            [
                np.broadcast_to(cols_e[:, None, :], (n, 4, 6)).ravel(),
                np.broadcast_to(cols_o[:, None, :], (n, m, 3)).ravel(),
            ]
        )
        # ego-row curvature: (th,th), (la,px)x2, (lb,py)x2, (la,th)x2, (lb,th)x2
        self.h_rows = np.repeat(rows_e, 9)
        h_r = np.stack([th, la, px, lb_, py, la, th, lb_, th], axis=-1)
        h_c = np.stack([th, px, la, py, lb_, th, la, th, lb_], axis=-1)
        self.h_r = np.broadcast_to(h_r[:, None, :], (n, 4, 9)).ravel()
        self.h_c = np.broadcast_to(h_c[:, None, :], (n, 4, 9)).ravel()

    def eval(self, ctx: _Ctx):
        n = len(ctx.px)
        line = ctx.lines[self.line_index]  # (n, 3)
        a, b, cc = line[:, 0:1], line[:, 1:2], line[:, 2:3]
        wx, wy = ctx.wv[..., 0], ctx.wv[..., 1]
        vals_e = -(a * wx + b * wy + cc) - SVM_EPS
        d_e = np.stack(
            [
                np.broadcast_to(-a, wx.shape),
                np.broadcast_to(-b, wx.shape),
                -(a * ctx.tv[..., 0] + b * ctx.tv[..., 1]),
                -wx,
                -wy,
                np.full_like(wx, -1.0),
            ],
            axis=-1,
        )
        qx, qy = self.obs_verts[:, 0], self.obs_verts[:, 1]
        vals_o = (a * qx + b * qy + cc) - SVM_EPS
        d_o = np.stack(
            [
                np.broadcast_to(qx, vals_o.shape),
                np.broadcast_to(qy, vals_o.shape),
                np.ones_like(vals_o),
            ],
            axis=-1,
        )
        out = np.empty((n, self.rows_per_step))
        out[:, :4] = vals_e
        out[:, 4:] = vals_o
        ji = np.concatenate([d_e.ravel(), d_o.ravel()])

        htt = a * ctx.rb[..., 0] + b * ctx.rb[..., 1]
        ones = np.ones_like(wx)
        self._h = np.stack(
            [
                htt,
                -ones,
                -ones,
                -ones,
                -ones,
                -ctx.tv[..., 0],
                -ctx.tv[..., 0],
                -ctx.tv[..., 1],
                -ctx.tv[..., 1],
            ],
            axis=-1,
        ).ravel()
        return out.ravel(), ji

    def hess(self, lam):
        lam2 = lam.reshape(-1, self.rows_per_step)
        w_e = np.repeat(lam2[:, :4].ravel(), 9)
        return w_e * self._h


class _CircleBlockBase(_BlockBase):
    def __init__(self, circle: CircleObstacle, params: VehicleParams):
        self.center = np.asarray(circle.center)
        self.radius = circle.radius
        body = ConvexPolygon(body_corners(params))
        region = offset_region(body, circle.radius)
        self.oct_lines = region.octagon.line_array   # (8, 3), body frame
        self.oct_verts = region.octagon.vertices     # (8, 2), body frame
        corners = body_corners(params)
        self.bn2 = corners[:, 0] ** 2 + corners[:, 1] ** 2  # |b_j|^2 per vertex


class _CircleMsdeBlock(_CircleBlockBase):
    rows_per_step = 5  # 4 corner quadratics + 1 octagon exclusion

    def __init__(self, circle, params, layout: NlpLayout, row_offset: int):
        super().__init__(circle, params)
        n = layout.horizon
        px, py, th = _pose_cols(n)
        pose = np.stack([px, py, th], axis=-1)
        rows_q = _row_grid(n, 5, np.arange(4), row_offset)
        rows_c = _row_grid(n, 5, np.array([4]), row_offset)
        self.ji_rows = np.concatenate([np.repeat(rows_q, 3), np.repeat(rows_c, 3)])
        self.ji_cols = np.concatenate(
            [
                np.broadcast_to(pose[:, None, :], (n, 4, 3)).ravel(),
                np.broadcast_to(pose[:, None, :], (n, 1, 3)).ravel(),
            ]
        )
        # quad rows: (px,px),(py,py),(px,th)x2,(py,th)x2,(th,th); oct row: 5
        self.h_rows = np.concatenate([np.repeat(rows_q, 7), np.repeat(rows_c, 5)])
        hq_r = np.stack([px, py, px, th, py, th, th], axis=-1)
        hq_c = np.stack([px, py, th, px, th, py, th], axis=-1)
        ho_r = np.stack([px, th, py, th, th], axis=-1)
        ho_c = np.stack([th, px, th, py, th], axis=-1)
        self.h_r = np.concatenate(
            [
                np.broadcast_to(hq_r[:, None, :], (n, 4, 7)).ravel(),
                np.broadcast_to(ho_r[:, None, :], (n, 1, 5)).ravel(),
            ]
        )
        self.h_c = np.concatenate(
            [
                np.broadcast_to(hq_c[:, None, :], (n, 4, 7)).ravel(),
                np.broadcast_to(ho_c[:, None, :], (n, 1, 5)).ravel(),
            ]
        )

    def eval(self, ctx: _Ctx):
        n = len(ctx.px)
        d = ctx.wv - self.center
        vals_q = d[..., 0] ** 2 + d[..., 1] ** 2 - self.radius**2
        d_q = np.stack(
            [
                2.0 * d[..., 0],
                2.0 * d[..., 1],
                2.0 * (d[..., 0] * ctx.tv[..., 0] + d[..., 1] * ctx.tv[..., 1]),
            ],
            axis=-1,
        )

        c, s = ctx.cos, ctx.sin
        dx = self.center[0] - ctx.px
        dy = self.center[1] - ctx.py
        wbx = c * dx + s * dy
        wby = -s * dx + c * dy
        la, lb_, lg = self.oct_lines.T
        lv = wbx[:, None] * la + wby[:, None] * lb_ + lg  # (n, 8)
        oidx = np.argmin(lv, axis=-1)
        lmin = lv[np.arange(n), oidx]
        nb = self.oct_lines[oidx, :2]
        gg = self.oct_lines[oidx, 2]
        vals_c = -lmin
        ex = -s * dx + c * dy
        ey = -c * dx - s * dy
        d_c = np.stack(
            [
                c * nb[:, 0] - s * nb[:, 1],
                s * nb[:, 0] + c * nb[:, 1],
                -(nb[:, 0] * ex + nb[:, 1] * ey),
            ],
            axis=-1,
        )

        out = np.empty((n, 5))
        out[:, :4] = vals_q
        out[:, 4] = vals_c
        ji = np.concatenate([d_q.ravel(), d_c.ravel()])

        two = np.full_like(vals_q, 2.0)
        htt_q = 2.0 * (
            self.bn2 - (d[..., 0] * ctx.rb[..., 0] + d[..., 1] * ctx.rb[..., 1])
        )
        self._h_q = np.stack(
            [
                two,
                two,
                2.0 * ctx.tv[..., 0],
                2.0 * ctx.tv[..., 0],
                2.0 * ctx.tv[..., 1],
                2.0 * ctx.tv[..., 1],
                htt_q,
            ],
            axis=-1,
        ).ravel()
        hpx = -s * nb[:, 0] - c * nb[:, 1]
        hpy = c * nb[:, 0] - s * nb[:, 1]
        self._h_c = np.stack([hpx, hpx, hpy, hpy, lmin - gg], axis=-1).ravel()
        return out.ravel(), ji

    def hess(self, lam):
        lam2 = lam.reshape(-1, 5)
        w_q = np.repeat(lam2[:, :4].ravel(), 7)
        w_c = np.repeat(lam2[:, 4].ravel(), 5)
        return np.concatenate([w_q * self._h_q, w_c * self._h_c])


class _CircleSvmBlock(_CircleBlockBase):
    rows_per_step = 13  # 4 quadratics + 8 octagon vertices + 1 center

    def __init__(self, circle, params, layout: NlpLayout, row_offset: int,
                 line_index: int):
        super().__init__(circle, params)
        n = layout.horizon
        self.line_index = line_index
        px, py, th = _pose_cols(n)
        pose = np.stack([px, py, th], axis=-1)
        lbase = layout.inputs_end + 3 * (line_index * n + np.arange(n))
        la, lb_, lc = lbase, lbase + 1, lbase + 2
        cols_v = np.stack([px, py, th, la, lb_, lc], axis=-1)
        cols_c = np.stack([la, lb_, lc], axis=-1)

        rows_q = _row_grid(n, 13, np.arange(4), row_offset)
        rows_v = _row_grid(n, 13, 4 + np.arange(8), row_offset)
        rows_c = _row_grid(n, 13, np.array([12]), row_offset)
        self.ji_rows = np.concatenate(
            [np.repeat(rows_q, 3), np.repeat(rows_v, 6), np.repeat(rows_c, 3)]
        )
        self.ji_cols = np.concatenate(
            [
                np.broadcast_to(pose[:, None, :], (n, 4, 3)).ravel(),
                np.broadcast_to(cols_v[:, None, :], (n, 8, 6)).ravel(),
                np.broadcast_to(cols_c[:, None, :], (n, 1, 3)).ravel(),
            ]
        )
        self.h_rows = np.concatenate([np.repeat(rows_q, 7), np.repeat(rows_v, 9)])
        hq_r = np.stack([px, py, px, th, py, th, th], axis=-1)
        hq_c = np.stack([px, py, th, px, th, py, th], axis=-1)
        hv_r = np.stack([th, la, px, lb_, py, la, th, lb_, th], axis=-1)
        hv_c = np.stack([th, px, la, py, lb_, th, la, th, lb_], axis=-1)
        self.h_r = np.concatenate(
            [
                np.broadcast_to(hq_r[:, None, :], (n, 4, 7)).ravel(),
                np.broadcast_to(hv_r[:, None, :], (n, 8, 9)).ravel(),
            ]
        )
        self.h_c = np.concatenate(
            [
                np.broadcast_to(hq_c[:, None, :], (n, 4, 7)).ravel(),
                np.broadcast_to(hv_c[:, None, :], (n, 8, 9)).ravel(),
            ]
        )

    def eval(self, ctx: _Ctx):
        n = len(ctx.px)
        d = ctx.wv - self.center
        vals_q = d[..., 0] ** 2 + d[..., 1] ** 2 - self.radius**2
        d_q = np.stack(
            [
                2.0 * d[..., 0],
                2.0 * d[..., 1],
                2.0 * (d[..., 0] * ctx.tv[..., 0] + d[..., 1] * ctx.tv[..., 1]),
            ],
            axis=-1,
        )

        ow, ot, orb = ctx.world(self.oct_verts)
        line = ctx.lines[self.line_index]
        a, b, cc = line[:, 0:1], line[:, 1:2], line[:, 2:3]
        wx, wy = ow[..., 0], ow[..., 1]
        vals_v = -(a * wx + b * wy + cc) - SVM_EPS
        d_v = np.stack(
            [
                np.broadcast_to(-a, wx.shape),
                np.broadcast_to(-b, wx.shape),
                -(a * ot[..., 0] + b * ot[..., 1]),
                -wx,
                -wy,
                np.full_like(wx, -1.0),
            ],
            axis=-1,
        )
        vals_c = (
            line[:, 0] * self.center[0] + line[:, 1] * self.center[1] + line[:, 2]
        ) - SVM_EPS
        d_c = np.stack(
            [
                np.full(n, self.center[0]),
                np.full(n, self.center[1]),
                np.ones(n),
            ],
            axis=-1,
        )

        out = np.empty((n, 13))
        out[:, :4] = vals_q
        out[:, 4:12] = vals_v
        out[:, 12] = vals_c
        ji = np.concatenate([d_q.ravel(), d_v.ravel(), d_c.ravel()])

        two = np.full_like(vals_q, 2.0)
        htt_q = 2.0 * (
            self.bn2 - (d[..., 0] * ctx.rb[..., 0] + d[..., 1] * ctx.rb[..., 1])
        )
        self._h_q = np.stack(
            [
                two,
                two,
                2.0 * ctx.tv[..., 0],
                2.0 * ctx.tv[..., 0],
                2.0 * ctx.tv[..., 1],
                2.0 * ctx.tv[..., 1],
                htt_q,
            ],
            axis=-1,
        ).ravel()
        htt_v = a * orb[..., 0] + b * orb[..., 1]
        ones = np.ones_like(wx)
        self._h_v = np.stack(
            [
                htt_v,
                -ones,
                -ones,
                -ones,
                -ones,
                -ot[..., 0],
                -ot[..., 0],
                -ot[..., 1],
                -ot[..., 1],
            ],
            axis=-1,
        ).ravel()
        return out.ravel(), ji

    def hess(self, lam):
        lam2 = lam.reshape(-1, 13)
        w_q = np.repeat(lam2[:, :4].ravel(), 7)
        w_v = np.repeat(lam2[:, 4:12].ravel(), 9)
        return np.concatenate([w_q * self._h_q, w_v * self._h_v])


class NlpProblem:
    """Assembled trajectory-optimization problem over the solver protocol."""

    def __init__(self, scenario, x0, u_prev, method: str):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        params: VehicleParams = scenario.vehicle
        n = int(scenario.horizon)
        if n < 2:
            raise ValueError("horizon must be at least 2")
        self.params = params
        self.weights: OcpWeights = scenario.weights
        self.obstacles = list(scenario.obstacles)
        self.dtau = float(scenario.dtau)
        self.method = method
        self.x_ref = _state_array(scenario.x_ref)
        self.x0 = _state_array(x0)
        self.u_prev = np.zeros(2) if u_prev is None else np.asarray(u_prev, float)
        if not np.all(np.isfinite(self.x0)):
            raise ValueError("current state must be finite")

        self.horizon = n
        self.corners = body_corners(params)
        self.body_lines = ConvexPolygon(self.corners).line_array

        blocks = []
        offset = 0
        layout_probe = NlpLayout(n, method, len(self.obstacles), 0, 0, 0)
        for o, obs in enumerate(self.obstacles):
            if isinstance(obs, ConvexPolygon):
                if method == "msde":
                    blk = _PolyMsdeBlock(obs, layout_probe, offset, self.body_lines)
                else:
                    blk = _PolySvmBlock(obs, layout_probe, offset, o)
            elif isinstance(obs, CircleObstacle):
                if method == "msde":
                    blk = _CircleMsdeBlock(obs, params, layout_probe, offset)
                else:
                    blk = _CircleSvmBlock(obs, params, layout_probe, offset, o)
            else:
                raise TypeError(f"unsupported obstacle type {type(obs).__name__}")
            blocks.append(blk)
            offset += blk.n_rows(n)
        self.blocks = blocks

        self.n = num_vars(n, len(self.obstacles), method)
        self.n_eq = 5 * n
        self.n_ineq = offset
        self.layout = NlpLayout(
            n, method, len(self.obstacles), self.n, self.n_eq, self.n_ineq
        )

        self.lb, self.ub = self._bounds()
        self._build_eq_pattern()
        self._build_cost_hess()
        if blocks:
            self._ji_rows = np.concatenate([b.ji_rows for b in blocks])
            self._ji_cols = np.concatenate([b.ji_cols for b in blocks])
            self._hc_rows = np.concatenate([b.h_r for b in blocks])
            self._hc_cols = np.concatenate([b.h_c for b in blocks])
            self._block_slices = []
            pos = 0
            for b in blocks:
                self._block_slices.append(slice(pos, pos + b.n_rows(n)))
                pos += b.n_rows(n)
        self._ctx_obj = None

    # -- layout helpers ---------------------------------------------------

    def _bounds(self):
        p = self.params
        n = self.horizon
        lb = np.full(self.n, -np.inf)
        ub = np.full(self.n, np.inf)
        states = np.tile([np.inf, np.inf, p.v_lim, np.inf, p.delta_lim], n)
        lb[: 5 * n] = -states
        ub[: 5 * n] = states
        inputs = np.tile([p.vdot_lim, p.deltadot_lim], n - 1)
        lb[5 * n : 7 * n - 2] = -inputs
        ub[5 * n : 7 * n - 2] = inputs
        return lb, ub

    def _build_eq_pattern(self):
        n = self.horizon
        ns = 5 * n
        rows_i = np.arange(ns)
        cols_i = np.arange(ns)

        # -(I + dtau*Fx) block on x_{k-1}, k = 2..N
        rows_prev = np.arange(5, ns)
        cols_prev = np.arange(ns - 5)
        fx_pat = np.array([(0, 2), (0, 3), (1, 2), (1, 3), (3, 2), (3, 4)])
        base_r = 5 * np.arange(1, n)[:, None]
        base_c = 5 * np.arange(0, n - 1)[:, None]
        rows_fx = (base_r + fx_pat[None, :, 0]).ravel()
        cols_fx = (base_c + fx_pat[None, :, 1]).ravel()

        iu = 5 * n + 2 * np.minimum(np.arange(n), n - 2)
        rows_u = np.empty(2 * n, dtype=int)
        cols_u = np.empty(2 * n, dtype=int)
        rows_u[0::2] = 5 * np.arange(n) + 2
        rows_u[1::2] = 5 * np.arange(n) + 4
        cols_u[0::2] = iu
        cols_u[1::2] = iu + 1

        self._je_rows = np.concatenate([rows_i, rows_prev, rows_fx, rows_u])
        self._je_cols = np.concatenate([cols_i, cols_prev, cols_fx, cols_u])
        self._je_const = np.concatenate(
            [
                np.ones(ns),
                -np.ones(ns - 5),
            ]
        )
        self._je_u = np.full(2 * n, -self.dtau)

    def _build_cost_hess(self):
        n = self.horizon
        w = self.weights
        rows = [np.arange(5 * n)]
        cols = [np.arange(5 * n)]
        diag_states = np.tile(2.0 * w.q, n)
        diag_states[5 * (n - 1) :] = 2.0 * w.s_f
        data = [diag_states]

        iu = 5 * n + np.arange(2 * (n - 1))
        mult = np.ones(n - 1)
        mult[: n - 2] = 2.0
        rows.append(iu)
        cols.append(iu)
        data.append(np.repeat(mult, 2) * np.tile(2.0 * w.r, n - 1))
        if n > 2:
            off = 5 * n + np.arange(2 * (n - 2))
            rows.append(off)
            cols.append(off + 2)
            data.append(np.tile(-2.0 * w.r, n - 2))
            rows.append(off + 2)
            cols.append(off)
            data.append(np.tile(-2.0 * w.r, n - 2))

        if self.method == "svm":
            nl = 3 * self.layout.n_lines * n
            lidx = self.layout.inputs_end + np.arange(nl)
            ldiag = np.tile([2.0 * SVM_ALPHA, 2.0 * SVM_ALPHA, 0.0], nl // 3)
            rows.append(lidx)
            cols.append(lidx)
            data.append(ldiag)

        self._hcost_rows = np.concatenate(rows)
        self._hcost_cols = np.concatenate(cols)
        self._hcost_data = np.concatenate(data)

        # dynamics curvature pattern: 3x3 (v, theta, delta) block on x_{k-1}
        base = 5 * np.arange(0, n - 1)[:, None]
        pat_r = np.array([2, 3, 3, 2, 4, 4])
        pat_c = np.array([3, 2, 3, 4, 2, 4])
        self._hdyn_rows = (base + pat_r).ravel()
        self._hdyn_cols = (base + pat_c).ravel()

    # -- evaluation -------------------------------------------------------

    def _ctx(self, z) -> _Ctx:
        if self._ctx_obj is not None and self._ctx_obj.z is z:
            return self._ctx_obj
        self._ctx_obj = _Ctx(z, self.layout, self.corners)
        return self._ctx_obj

    def _u_eff(self, u):
        return np.vstack([u, u[-1:]])

    def _cost(self, ctx: _Ctx) -> float:
        dx = ctx.x - self.x_ref
        w = self.weights
        cost = float(np.sum((dx[:-1] ** 2) @ w.q) + (dx[-1] ** 2) @ w.s_f)
        du = np.diff(np.vstack([self.u_prev, ctx.u]), axis=0)
        cost += float(np.sum((du**2) @ w.r))
        if ctx.lines is not None:
            cost += float(SVM_ALPHA * np.sum(ctx.lines[..., :2] ** 2))
        return cost

    def _defects(self, ctx: _Ctx):
        x_prev = np.vstack([self.x0, ctx.x[:-1]])
        pred = step_array(x_prev, self._u_eff(ctx.u), self.dtau, self.params.l_f)
        return (ctx.x - pred).ravel()

    def _collision(self, ctx: _Ctx, with_jac: bool):
        if not self.blocks:
            empty = np.zeros(0)
            return (empty, empty) if with_jac else empty
        vals = []
        data = []
        for blk in self.blocks:
            v, d = blk.eval(ctx)
            blk._h_ctx = ctx
            vals.append(v)
            data.append(d)
        values = np.concatenate(vals)
        if not with_jac:
            return values
        return values, np.concatenate(data)

    def eval_fc(self, z):
        ctx = _Ctx(z, self.layout, self.corners)  # trial points: no cache
        return self._cost(ctx), self._defects(ctx), self._collision(ctx, False)

    def eval_derivs(self, z):
        ctx = self._ctx(z)
        f = self._cost(ctx)
        ce = self._defects(ctx)

        grad = np.zeros(self.n)
        dx = ctx.x - self.x_ref
        gx = 2.0 * dx * self.weights.q
        gx[-1] = 2.0 * dx[-1] * self.weights.s_f
        grad[: 5 * self.horizon] = gx.ravel()
        du = np.diff(np.vstack([self.u_prev, ctx.u]), axis=0)
        gu = 2.0 * du * self.weights.r
        gu[:-1] -= gu[1:].copy()
        grad[5 * self.horizon : 7 * self.horizon - 2] = gu.ravel()
        if ctx.lines is not None:
            gl = np.zeros_like(ctx.lines)
            gl[..., :2] = 2.0 * SVM_ALPHA * ctx.lines[..., :2]
            grad[self.layout.inputs_end :] = gl.ravel()

        je = self._eq_jacobian(ctx)
        if self.blocks:
            ci, ji_data = self._collision(ctx, True)
            ji = sp.csr_matrix(
                (ji_data, (self._ji_rows, self._ji_cols)),
                shape=(self.n_ineq, self.n),
            )
        else:
            ci = np.zeros(0)
            ji = sp.csr_matrix((0, self.n))
        return f, grad, ce, je, ci, ji

    def _eq_jacobian(self, ctx: _Ctx):
        n = self.horizon
        x_prev = np.vstack([self.x0, ctx.x[:-1]])[1:]  # x_1..x_{N-1}
        v = x_prev[:, 2]
        th = x_prev[:, 3]
        de = x_prev[:, 4]
        c, s = np.cos(th), np.sin(th)
        sec2 = 1.0 / np.cos(de) ** 2
        dt = self.dtau
        fx = np.stack(
            [
                -dt * c,
                dt * v * s,
                -dt * s,
                -dt * v * c,
                -dt * np.tan(de) / self.params.l_f,
                -dt * v * sec2 / self.params.l_f,
            ],
            axis=-1,
        ).ravel()
        data = np.concatenate([self._je_const, fx, self._je_u])
        je = sp.coo_matrix(
            (data, (self._je_rows, self._je_cols)), shape=(self.n_eq, self.n)
        )
        return je.toarray()

    def eval_hess(self, z, y_eq, y_in):
        ctx = self._ctx(z)
        n = self.horizon
        rows = [self._hcost_rows, self._hdyn_rows]
        cols = [self._hcost_cols, self._hdyn_cols]

        lam = y_eq.reshape(n, 5)[1:]  # defects k = 2..N, curvature on x_{k-1}
        x_mid = ctx.x[:-1]
        v = x_mid[:, 2]
        th = x_mid[:, 3]
        de = x_mid[:, 4]
        c, s = np.cos(th), np.sin(th)
        sec2 = 1.0 / np.cos(de) ** 2
        dt = self.dtau
        hvt = -dt * (-lam[:, 0] * s + lam[:, 1] * c)
        htt = dt * v * (lam[:, 0] * c + lam[:, 1] * s)
        hvd = -dt * lam[:, 3] * sec2 / self.params.l_f
        hdd = -dt * lam[:, 3] * 2.0 * v * np.tan(de) * sec2 / self.params.l_f
        hdyn = np.stack([hvt, hvt, htt, hvd, hvd, hdd], axis=-1).ravel()
        data = [self._hcost_data, hdyn]

        if self.blocks:
            # block curvature terms were stashed by eval(); refresh if this
            # point was not the last one evaluated
            for blk in self.blocks:
                if getattr(blk, "_h_ctx", None) is not ctx:
                    blk.eval(ctx)
                    blk._h_ctx = ctx
            hblocks = [
                blk.hess(-y_in[slc])
                for blk, slc in zip(self.blocks, self._block_slices)
            ]
            rows.append(self._hc_rows)
            cols.append(self._hc_cols)
            data.append(np.concatenate(hblocks))

        w = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n),
        )
        return w.toarray()

    # -- starting points --------------------------------------------------

    def initial_guess(self, prev_solution=None) -> np.ndarray:
        if prev_solution is not None:
            return shift_warm_start(prev_solution, self.layout)
        z = np.zeros(self.n)
        states = self.layout.states(z)
        x = self.x0.copy()
        zero_u = np.zeros(2)
        for k in range(self.horizon):
            x = step_array(x, zero_u, self.dtau, self.params.l_f)
            states[k] = x
        if self.method == "svm":
            lines = self.layout.lines(z)
            ego_mid = states[:, :2] + np.stack(
                [np.cos(states[:, 3]), np.sin(states[:, 3])], axis=-1
            ) * (self.corners[:, 0].mean())
            for o, obs in enumerate(self.obstacles):
                target = (
                    obs.centroid
                    if isinstance(obs, ConvexPolygon)
                    else np.asarray(obs.center)
                )
                d = target - ego_mid
                norm = np.hypot(d[:, 0], d[:, 1])
                norm = np.where(norm < 1e-9, 1.0, norm)
                ab = d / norm[:, None]
                mid = 0.5 * (target + ego_mid)
                cc = -np.einsum("ij,ij->i", ab, mid)
                lines[o] = np.column_stack([ab, cc])
        return z

    def solve(self, z0=None, options=None, multipliers=None) -> ipm.SolveResult:
        if z0 is None:
            z0 = self.initial_guess()
        return ipm.solve(self, z0, options, multipliers)


def _state_array(x) -> np.ndarray:
    if isinstance(x, VehicleState):
        return x.to_array()
    arr = np.asarray(x, dtype=float)
    if arr.shape != (5,):
        raise ValueError("state must have 5 components")
    return arr


def assemble(scenario, x0, u_prev=None, method: str = "msde") -> NlpProblem:
    """Build the horizon problem for the current state and previous input."""
    return NlpProblem(scenario, x0, u_prev, method)


def solve(problem: NlpProblem, warm_start=None, options=None, multipliers=None):
    """Solve an assembled problem; thin wrapper over the interior-point core."""
    return problem.solve(warm_start, options, multipliers)


def find_separating_line(ego: ConvexPolygon, obstacle: ConvexPolygon):
    """Best-margin line between two polygons via a phase-I feasibility solve.

    Minimizes the uniform margin slack t subject to q_i (a x_i + b y_i + c)
    + t >= 1 over the labeled vertices (ego -1, obstacle +1) and t >= 0.
    t* stays near 0 when a strict separator exists and near 1 when it does
    not, so the midpoint is a robust decision threshold.

    Returns ``(line, t_star)`` with the line in world coordinates.
    """
    pts = np.vstack([ego.vertices, obstacle.vertices])
    labels = np.concatenate(
        [-np.ones(ego.n_vertices), np.ones(obstacle.n_vertices)]
    )
    center = pts.mean(axis=0)
    scale = max(float(np.abs(pts - center).max()), 1e-9)
    scaled = (pts - center) / scale

    a_ineq = np.column_stack(
        [labels * scaled[:, 0], labels * scaled[:, 1], labels, np.ones(len(pts))]
    )
    # no margin regularizer here: a keep-small term on (a, b) would beat the
    # unit gain from t once the gap shrinks past its square root, misreading
    # barely-disjoint pairs as overlapping
    problem = ipm.FunctionalProblem(
        n=4,
        f=lambda z: z[3],
        grad=lambda z: np.array([0.0, 0.0, 0.0, 1.0]),
        hess=lambda z, ye, yi: np.zeros((4, 4)),
        c_ineq=lambda z: a_ineq @ z - 1.0,
        jac_ineq=lambda z: a_ineq,
        lb=np.array([-np.inf, -np.inf, -np.inf, 0.0]),
        ub=None,
    )
    result = ipm.solve(problem, np.array([0.0, 0.0, 0.0, 2.0]))
    a_s, b_s, c_s, t_star = result.solution
    # undo the coordinate normalization: f(x) = a_s (x - center)/scale + ...
    a = a_s / scale
    b = b_s / scale
    c = c_s - (a_s * center[0] + b_s * center[1]) / scale
    return np.array([a, b, c]), float(t_star)


def separable(ego: ConvexPolygon, obstacle: ConvexPolygon) -> bool:
    """Whether a line strictly separates the two polygons."""
    _, t_star = find_separating_line(ego, obstacle)
    return t_star < 0.5


def shift_warm_start(prev_solution, layout: NlpLayout) -> np.ndarray:
    """Shift a previous solution one step earlier, duplicating the last step."""
    prev = np.asarray(prev_solution, dtype=float)
    if prev.shape != (layout.num_vars,):
        raise ValueError(
            f"solution length {prev.shape} does not match layout "
            f"({layout.num_vars} variables)"
        )
    z = prev.copy()
    states = layout.states(z)
    states[:-1] = layout.states(prev)[1:]
    inputs = layout.inputs(z)
    inputs[:-1] = layout.inputs(prev)[1:]
    lines = layout.lines(z)
    if lines is not None:
        lines[:, :-1] = layout.lines(prev)[:, 1:]
    return z
