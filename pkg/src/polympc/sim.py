"""Scenario definitions, closed-loop episode execution, batch metrics.

An episode runs the receding-horizon loop: assemble the horizon problem at
the current state, solve it warm-started from the previous cycle, apply the
first input to the plant, then check collision and goal arrival. The plant
uses the same Euler discretization as the predictor; in realtime mode it
advances by the measured solve time (capped at dtau) in sub-steps of at most
0.02 s instead of a full interval.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    CircleObstacle,
    ConvexPolygon,
    polygon_circle_intersect,
    polygons_intersect,
)
from .ipm import SolveStatus, SolverOptions
from .nlp import OcpWeights, assemble
from .vehicle import (
    VehicleInput,
    VehicleParams,
    VehicleState,
    body_outline,
    step_array,
)

POSITION_TOL = 0.2
HEADING_TOL = math.radians(10.0)
SPEED_TOL = 0.1
PLANT_SUBSTEP = 0.02
MAX_CONSECUTIVE_FAILURES = 10

REVERSE_WEIGHTS = OcpWeights(
    s_f=np.array([300.0, 300.0, 15.0, 600.0, 15.0]),
    q=np.array([0.25, 0.25, 0.05, 1.0, 0.05]),
    r=np.array([0.2, 20.0]),
)
PARALLEL_WEIGHTS = OcpWeights(
    s_f=np.array([800.0, 800.0, 20.0, 400.0, 20.0]),
    q=np.array([0.5, 0.5, 0.05, 0.5, 0.05]),
    r=np.array([0.2, 20.0]),
)


def _as_state(x) -> np.ndarray:
    if isinstance(x, VehicleState):
        return x.to_array()
    arr = np.asarray(x, dtype=float)
    if arr.shape != (5,):
        raise ValueError("state must have 5 components")
    return arr


def in_collision(state, obstacles, params: VehicleParams) -> bool:
    """Exact-projection check of the car body against every obstacle.

    Uses the true body rectangle, not the margin-inflated footprint the
    planner constrains: the margin is clearance budget, and grazing it is
    not contact.
    """
    fp = body_outline(state, params)
    for obs in obstacles:
        if isinstance(obs, CircleObstacle):
            if polygon_circle_intersect(fp, obs):
                return True
        elif polygons_intersect(fp, obs):
            return True
    return False


def at_goal(state, x_ref, speed_gate: bool = True) -> bool:
    """Position within 0.2 m, heading within 10 degrees (wrap-aware)."""
    x = _as_state(state)
    ref = _as_state(x_ref)
    if math.hypot(x[0] - ref[0], x[1] - ref[1]) > POSITION_TOL:
        return False
    dth = math.atan2(math.sin(x[3] - ref[3]), math.cos(x[3] - ref[3]))
    if abs(dth) > HEADING_TOL:
        return False
    if speed_gate and abs(x[2]) >= SPEED_TOL:
        return False
    return True


@dataclass
class Scenario:
    """A parking or avoidance task: map, weights, reference, start grid."""

    name: str
    vehicle: VehicleParams
    weights: OcpWeights
    obstacles: list
    x_ref: np.ndarray
    initial_states: np.ndarray
    dtau: float = 0.2
    horizon: int = 21
    max_sim_time: float = 60.0

    def __post_init__(self):
        self.x_ref = _as_state(self.x_ref)
        states = np.atleast_2d(np.asarray(self.initial_states, dtype=float))
        if states.shape[1] != 5:
            raise ValueError("initial states must have 5 components each")
        self.initial_states = states
        if self.dtau <= 0.0 or self.max_sim_time <= 0.0:
            raise ValueError("dtau and max_sim_time must be positive")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        for obs in self.obstacles:
            if not isinstance(obs, (ConvexPolygon, CircleObstacle)):
                raise TypeError(
                    f"unsupported obstacle type {type(obs).__name__}"
                )
        # the reference and every spawn point must be collision-free
        if in_collision(self.x_ref, self.obstacles, self.vehicle):
            raise ValueError("x_ref is in collision")
        for i, x0 in enumerate(self.initial_states):
            if in_collision(x0, self.obstacles, self.vehicle):
                raise ValueError(f"initial state {i} is in collision")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "vehicle": {
                "l_car": self.vehicle.l_car,
                "w_car": self.vehicle.w_car,
                "l_f": self.vehicle.l_f,
                "l_roh": self.vehicle.l_roh,
                "d_margin": self.vehicle.d_margin,
                "v_lim": self.vehicle.v_lim,
                "delta_lim": self.vehicle.delta_lim,
                "vdot_lim": self.vehicle.vdot_lim,
                "deltadot_lim": self.vehicle.deltadot_lim,
            },
            "weights": {
                "S_f": self.weights.s_f.tolist(),
                "Q": self.weights.q.tolist(),
                "R": self.weights.r.tolist(),
            },
            "obstacles": [_obstacle_to_dict(o) for o in self.obstacles],
            "x_ref": self.x_ref.tolist(),
            "initial_states": self.initial_states.tolist(),
            "dtau": self.dtau,
            "horizon": self.horizon,
            "max_sim_time": self.max_sim_time,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            vehicle = VehicleParams(**data.get("vehicle", {}))
            weights = OcpWeights(
                s_f=np.asarray(data["weights"]["S_f"], dtype=float),
                q=np.asarray(data["weights"]["Q"], dtype=float),
                r=np.asarray(data["weights"]["R"], dtype=float),
            )
            obstacles = [_obstacle_from_dict(o) for o in data["obstacles"]]
            if "initial_states" in data:
                initial = np.asarray(data["initial_states"], dtype=float)
            else:
                g = data["grid"]
                initial = grid_states(
                    tuple(g["origin"]), g["spacing"], g["nx"], g["ny"],
                    heading=g.get("heading", 0.0),
                )
        except KeyError as exc:
            raise ValueError(f"scenario is missing field {exc}") from exc
        return cls(
            name=data.get("name", "custom"),
            vehicle=vehicle,
            weights=weights,
            obstacles=obstacles,
            x_ref=np.asarray(data["x_ref"], dtype=float),
            initial_states=initial,
            dtau=float(data.get("dtau", 0.2)),
            horizon=int(data.get("horizon", 21)),
            max_sim_time=float(data.get("max_sim_time", 60.0)),
        )


def _obstacle_to_dict(obs) -> dict:
    if isinstance(obs, ConvexPolygon):
        return {"type": "polygon", "vertices": obs.vertices.tolist()}
    if isinstance(obs, CircleObstacle):
        return {
            "type": "circle",
            "center": list(obs.center),
            "radius": obs.radius,
        }
    raise TypeError(f"unsupported obstacle type {type(obs).__name__}")


def _obstacle_from_dict(data: dict):
    kind = data.get("type")
    if kind == "polygon":
        return ConvexPolygon(np.asarray(data["vertices"], dtype=float))
    if kind == "circle":
        cx, cy = data["center"]
        return CircleObstacle((float(cx), float(cy)), float(data["radius"]))
    raise ValueError(f"unknown obstacle type {kind!r}")


@dataclass
class EpisodeResult:
    """One closed-loop run: trajectory, outcome flags, solver diagnostics."""

    times: np.ndarray            # (T+1,) simulated clock, 0 first
    states: np.ndarray           # (T+1, 5)
    inputs: np.ndarray           # (T, 2) input applied over [t_k, t_{k+1})
    success: bool
    completion_time: float       # nan when unsuccessful
    collision: bool
    solve_times: np.ndarray      # (T,) seconds per MPC cycle
    solver_iterations: np.ndarray
    solver_failures: int
    method: str
    x0: np.ndarray

    @property
    def trace(self):
        """(time, VehicleState, VehicleInput) per executed cycle."""
        return [
            (
                float(self.times[k]),
                VehicleState.from_array(self.states[k]),
                VehicleInput.from_array(self.inputs[k]),
            )
            for k in range(len(self.inputs))
        ]


def _plant_step(x, u, dt, params):
    """Advance the plant by dt using Euler sub-steps of at most 0.02 s."""
    n_sub = max(1, int(math.ceil(dt / PLANT_SUBSTEP - 1e-12)))
    h = dt / n_sub
    for _ in range(n_sub):
        x = step_array(x, u, h, params.l_f)
    return x


def run_episode(
    scenario: Scenario,
    x0,
    method: str,
    timing_mode: str = "fixed",
    solver_options: SolverOptions | None = None,
    speed_gate: bool = True,
) -> EpisodeResult:
    """Close the loop from x0 until success, collision, or timeout."""
    if timing_mode not in ("fixed", "realtime"):
        raise ValueError(f"unknown timing mode {timing_mode!r}")
    x = _as_state(x0).copy()
    times = [0.0]
    states = [x.copy()]
    inputs: list = []
    solve_times: list = []
    iterations: list = []
    failures = 0
    consecutive = 0
    success = False
    collision = False
    completion = math.nan

    # the spawn point may already be at the goal, or inside an obstacle if
    # user-supplied
    if in_collision(x, scenario.obstacles, scenario.vehicle):
        collision = True
    elif at_goal(x, scenario.x_ref, speed_gate):
        success = True
        completion = 0.0

    t = 0.0
    u_prev = np.zeros(2)
    z_prev = None
    mults = None
    vdot_max = scenario.vehicle.vdot_lim
    ddot_max = scenario.vehicle.deltadot_lim
    while not success and not collision and t < scenario.max_sim_time - 1e-9:
        problem = assemble(scenario, x, u_prev, method)
        z0 = problem.initial_guess(z_prev)
        result = problem.solve(z0, options=solver_options, multipliers=mults)
        solve_times.append(result.solve_time)
        iterations.append(result.iterations)

        if result.status == SolveStatus.CONVERGED:
            consecutive = 0
            z_prev = result.solution
            mults = result.multipliers
            u = problem.layout.inputs(result.solution)[0].copy()
            if not np.all(np.isfinite(u)):
                u = np.zeros(2)
        else:
            failures += 1
            consecutive += 1
            # keep the failed iterate as the next warm start (a cold rollout
            # from a state aimed at an obstacle is far worse), drop the duals
            z_prev = (
                result.solution
                if np.all(np.isfinite(result.solution))
                else None
            )
            mults = None
            # the safe action while the planner is down: drive speed and
            # steering toward neutral at the rate limits (holding a locked
            # wheel would keep carving the current arc)
            u = np.array(
                [
                    np.clip(-x[2] / scenario.dtau, -vdot_max, vdot_max),
                    np.clip(-x[4] / scenario.dtau, -ddot_max, ddot_max),
                ]
            )
            if consecutive > MAX_CONSECUTIVE_FAILURES:
                break
        if timing_mode == "realtime":
            dt = min(result.solve_time, scenario.dtau)
            x = _plant_step(x, u, dt, scenario.vehicle)
        else:
            # plant and predictor share the discretization exactly
            dt = scenario.dtau
            x = step_array(x, u, dt, scenario.vehicle.l_f)
        t += dt
        u_prev = u
        times.append(t)
        states.append(x.copy())
        inputs.append(u)

        if in_collision(x, scenario.obstacles, scenario.vehicle):
            collision = True
        elif at_goal(x, scenario.x_ref, speed_gate):
            success = True
            completion = t

    return EpisodeResult(
        times=np.asarray(times),
        states=np.asarray(states).reshape(-1, 5),
        inputs=np.asarray(inputs).reshape(-1, 2),
        success=success,
        completion_time=completion,
        collision=collision,
        solve_times=np.asarray(solve_times),
        solver_iterations=np.asarray(iterations, dtype=int),
        solver_failures=failures,
        method=method,
        x0=_as_state(x0),
    )


def sct(results, reference_times=None) -> float:
    """Success-weighted completion-time score over a batch of episodes.

    Each episode contributes S_i * T_i / max(C_i, T_i) where T_i is the
    reference (best-among-methods) completion time. Without references the
    episode's own completion time is used, collapsing the score to the
    success rate.
    """
    if not len(results):
        raise ValueError("need at least one episode")
    total = 0.0
    for i, ep in enumerate(results):
        if not ep.success:
            continue
        t_ref = ep.completion_time
        if reference_times is not None:
            given = reference_times[i]
            if given is not None and np.isfinite(given):
                t_ref = float(given)
        if t_ref <= 0.0:
            raise ValueError(f"reference time for episode {i} must be positive")
        total += t_ref / max(ep.completion_time, t_ref)
    return total / len(results)


def reference_times(*batches) -> list:
    """Per-episode minimum completion time among methods; None if all failed."""
    if not batches:
        raise ValueError("need at least one batch")
    n = len(batches[0])
    if any(len(b) != n for b in batches):
        raise ValueError("batches must cover the same episodes")
    out = []
    for i in range(n):
        times = [
            b[i].completion_time
            for b in batches
            if b[i].success and np.isfinite(b[i].completion_time)
        ]
        out.append(min(times) if times else None)
    return out


@dataclass
class BatchSummary:
    """Aggregate of one method over a scenario's initial-state grid."""

    scenario: str
    method: str
    episodes: list = field(repr=False)
    sct: float = 0.0
    success_rate: float = 0.0
    avg_solve_time: float = 0.0
    worst_solve_time: float = 0.0
    solver_failures: int = 0


def _episode_task(args):
    scenario, index, method, timing_mode, options, speed_gate = args
    return index, run_episode(
        scenario,
        scenario.initial_states[index],
        method,
        timing_mode,
        solver_options=options,
        speed_gate=speed_gate,
    )


def run_batch(
    scenario: Scenario,
    method: str,
    parallelism: int = 1,
    timing_mode: str = "fixed",
    solver_options: SolverOptions | None = None,
    speed_gate: bool = True,
    episodes=None,
    reference=None,
) -> BatchSummary:
    """Run every initial state (or a subset) and aggregate the metrics.

    ``reference`` carries per-episode T_i values from a companion method;
    without it the SCT equals the success rate.
    """
    indices = list(range(len(scenario.initial_states)) if episodes is None else episodes)
    if not indices:
        raise ValueError("batch needs at least one episode")
    tasks = [
        (scenario, i, method, timing_mode, solver_options, speed_gate)
        for i in indices
    ]
    results: list = [None] * len(indices)
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for pos, (_, ep) in zip(
                range(len(tasks)), pool.map(_episode_task, tasks)
            ):
                results[pos] = ep
    else:
        for pos, task in enumerate(tasks):
            results[pos] = _episode_task(task)[1]

    all_times = np.concatenate(
        [ep.solve_times for ep in results if len(ep.solve_times)]
        or [np.zeros(1)]
    )
    return BatchSummary(
        scenario=scenario.name,
        method=method,
        episodes=results,
        sct=sct(results, reference),
        success_rate=float(np.mean([ep.success for ep in results])),
        avg_solve_time=float(np.mean(all_times)),
        worst_solve_time=float(np.max(all_times)),
        solver_failures=int(sum(ep.solver_failures for ep in results)),
    )


# ---------------------------------------------------------------------------
# built-in scenarios


def grid_states(origin, spacing: float, nx: int, ny: int, heading: float = 0.0):
    """Uniform spawn grid at rest: rows sweep y, columns sweep x."""
    states = np.zeros((nx * ny, 5))
    k = 0
    for iy in range(ny):
        for ix in range(nx):
            states[k, 0] = origin[0] + spacing * ix
            states[k, 1] = origin[1] + spacing * iy
            states[k, 3] = heading
            k += 1
    return states


def box(x0: float, y0: float, x1: float, y1: float) -> ConvexPolygon:
    return ConvexPolygon(
        np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    )


def make_scenarios() -> dict:
    """The four built-in tasks; layouts are fixed artifacts of this package."""
    vehicle = VehicleParams()

    # 3-slot bay (2.5 m x 5.0 m slots), parked cars in the outer slots,
    # 10 m apron in front, walled on all sides
    reverse = Scenario(
        name="reverse_parking",
        vehicle=vehicle,
        weights=REVERSE_WEIGHTS,
        obstacles=[
            box(-9.4, -5.4, -9.0, 10.4),
            box(9.0, -5.4, 9.4, 10.4),
            box(-9.4, -5.4, 9.4, -5.0),
            box(-9.4, 10.0, 9.4, 10.4),
            box(-3.35, -4.5, -1.65, -0.5),
            box(1.65, -4.5, 3.35, -0.5),
        ],
        x_ref=np.array([0.0, -3.7, 0.0, math.pi / 2.0, 0.0]),
        initial_states=grid_states((-5.0, 2.0), 0.5, 21, 5),
    )

    # 7.0 m curb gap between two parked cars, 3.5 m driving lane above them
    parallel = Scenario(
        name="parallel_parking",
        vehicle=vehicle,
        weights=PARALLEL_WEIGHTS,
        obstacles=[
            box(-10.0, -0.45, 10.0, -0.05),
            box(-7.5, -0.05, -3.5, 1.65),
            box(3.5, -0.05, 7.5, 1.65),
            box(-10.0, 5.15, 10.0, 5.55),
        ],
        x_ref=np.array([-1.2, 0.95, 0.0, 0.0, 0.0]),
        initial_states=grid_states((-3.2, 3.0), 0.2, 33, 2),
    )

    # slalom gates: the pentagon dips just below the drive line from above,
    # the triangle pokes just above it from below, so the shortest path run
    # weaves around both
    polygon_course = Scenario(
        name="polygon_course",
        vehicle=vehicle,
        weights=REVERSE_WEIGHTS,
        obstacles=[
            ConvexPolygon(
                np.array(
                    [[-3.4, 0.6], [-1.0, 0.2], [-0.4, 1.8], [-2.0, 2.9], [-3.5, 1.9]]
                )
            ),
            ConvexPolygon(np.array([[3.3, -2.2], [5.9, -1.9], [4.5, -0.2]])),
        ],
        x_ref=np.array([9.5, 0.0, 0.0, 0.0, 0.0]),
        initial_states=np.array([[-8.5, 0.0, 0.0, 0.0, 0.0]]),
    )

    circle_course = Scenario(
        name="circle_course",
        vehicle=vehicle,
        weights=REVERSE_WEIGHTS,
        obstacles=[
            CircleObstacle((-12.0 + 4.0 * i, 1.1 * (-1.0) ** i), 0.7)
            for i in range(7)
        ],
        x_ref=np.array([16.0, 0.0, 0.0, 0.0, 0.0]),
        initial_states=np.array([[-16.5, 0.0, 0.0, 0.0, 0.0]]),
    )

    return {
        "reverse_parking": reverse,
        "parallel_parking": parallel,
        "polygon_course": polygon_course,
        "circle_course": circle_course,
    }
