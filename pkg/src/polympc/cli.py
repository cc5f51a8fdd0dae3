"""Command-line front end: experiment runs, method comparison, self-audit.

Subcommands
    run      one episode or a whole batch; writes results.csv, summary.json,
             and optional per-episode trajectory SVGs
    compare  both collision formulations on one scenario, scored against the
             per-episode best completion time
    check    internal audits: variable counts, separability agreement with
             the exact polygon-intersection test, derivative correctness

Output directory resolution: --out beats the POLYMPC_OUT environment
variable, which beats ./out. All files use SI units (meters, radians,
seconds) except the solve-time columns, which are milliseconds.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import nlp
from .geometry import CircleObstacle, ConvexPolygon, polygons_intersect
from .ipm import SolverOptions
from .sim import (
    Scenario,
    make_scenarios,
    reference_times,
    run_batch,
    sct,
)
from .vehicle import VehicleParams

RESULTS_HEADER = (
    "episode,x0_px,x0_py,success,completion_time_s,"
    "avg_solve_ms,max_solve_ms,collision,solver_failures"
)

SCENARIO_ALIASES = {
    "reverse": "reverse_parking",
    "parallel": "parallel_parking",
    "polygon": "polygon_course",
    "circle": "circle_course",
}

EXPECTED_NUM_VARS = {
    ("reverse_parking", "msde"): 145,
    ("parallel_parking", "msde"): 145,
    ("polygon_course", "msde"): 145,
    ("circle_course", "msde"): 145,
    ("reverse_parking", "svm"): 523,
    ("parallel_parking", "svm"): 397,
    ("polygon_course", "svm"): 271,
    ("circle_course", "svm"): 586,
}


class CliError(Exception):
    """Configuration or input problem; carries the process exit code."""

    def __init__(self, message: str, exit_code: int = 2):
        super().__init__(message)
        self.exit_code = exit_code


def load_scenario(spec: str) -> Scenario:
    name = SCENARIO_ALIASES.get(spec, spec)
    builtins = make_scenarios()
    if name in builtins:
        return builtins[name]
    path = Path(spec)
    if not path.is_file():
        raise CliError(
            f"unknown scenario {spec!r}: not a built-in name "
            f"({', '.join(sorted(SCENARIO_ALIASES))}) and not a file"
        )
    try:
        data = json.loads(path.read_text())
        return Scenario.from_dict(data)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise CliError(f"cannot load scenario file {spec!r}: {exc}") from exc


def resolve_out_dir(arg) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get("POLYMPC_OUT")
    return Path(env) if env else Path("out")


def _solver_options(args) -> SolverOptions | None:
    if args.tol is None and args.max_iters is None:
        return None
    opts = SolverOptions()
    if args.tol is not None:
        opts.tol = args.tol
    if args.max_iters is not None:
        opts.max_iter = args.max_iters
    return opts


# ---------------------------------------------------------------------------
# results persistence


def _solve_ms(episode, deterministic: bool) -> np.ndarray:
    """Per-cycle solve times in ms; iteration counts stand in when the run
    must be reproducible bit for bit."""
    if deterministic:
        return episode.solver_iterations.astype(float)
    return episode.solve_times * 1e3


def results_rows(episodes, indices, deterministic: bool):
    rows = []
    for idx, ep in zip(indices, episodes):
        ms = _solve_ms(ep, deterministic)
        rows.append(
            (
                idx,
                f"{ep.x0[0]:.6f}",
                f"{ep.x0[1]:.6f}",
                int(ep.success),
                f"{ep.completion_time:.6f}",
                f"{(np.mean(ms) if len(ms) else 0.0):.6f}",
                f"{(np.max(ms) if len(ms) else 0.0):.6f}",
                int(ep.collision),
                ep.solver_failures,
            )
        )
    return rows


def write_results_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_HEADER.split(","))
        writer.writerows(rows)


def summarize(scenario, method, timing_mode, deterministic, episodes, refs=None):
    all_ms = np.concatenate(
        [_solve_ms(ep, deterministic) for ep in episodes if len(ep.solve_times)]
        or [np.zeros(1)]
    )
    return {
        "scenario": scenario.name,
        "method": method,
        "timing_mode": timing_mode,
        "episodes": len(episodes),
        "success_rate": float(np.mean([ep.success for ep in episodes])),
        "sct": sct(episodes, refs),
        "avg_solve_ms": float(np.mean(all_ms)),
        "worst_solve_ms": float(np.max(all_ms)),
        "solver_failures": int(sum(ep.solver_failures for ep in episodes)),
    }


def svg_document(scenario, episode) -> str:
    """Single-episode trajectory over the obstacle map, y axis pointing up."""
    pts = [episode.states[:, :2], scenario.x_ref[None, :2]]
    polys = []
    for obs in scenario.obstacles:
        if isinstance(obs, CircleObstacle):
            ang = np.linspace(0.0, 2.0 * math.pi, 33)[:-1]
            v = np.column_stack(
                [
                    obs.center[0] + obs.radius * np.cos(ang),
                    obs.center[1] + obs.radius * np.sin(ang),
                ]
            )
        else:
            v = obs.vertices
        polys.append(v)
        pts.append(v)
    allp = np.vstack(pts)
    x0, y0 = allp.min(axis=0) - 1.0
    x1, y1 = allp.max(axis=0) + 1.0

    def fmt(points):
        return " ".join(f"{p[0]:.3f},{-p[1]:.3f}" for p in points)

    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{x0:.3f} {-y1:.3f} {x1 - x0:.3f} {y1 - y0:.3f}" '
        f'width="{80 * (x1 - x0):.0f}" height="{80 * (y1 - y0):.0f}">',
        f'<rect x="{x0:.3f}" y="{-y1:.3f}" width="{x1 - x0:.3f}" '
        f'height="{y1 - y0:.3f}" fill="white"/>',
    ]
    for v in polys:
        parts.append(
            f'<polygon points="{fmt(v)}" fill="#b8bcc4" stroke="#555" '
            'stroke-width="0.04"/>'
        )
    parts.append(
        f'<circle cx="{scenario.x_ref[0]:.3f}" cy="{-scenario.x_ref[1]:.3f}" '
        'r="0.15" fill="#c23b3b"/>'
    )
    parts.append(
        f'<polyline points="{fmt(episode.states[:, :2])}" fill="none" '
        'stroke="#1f5fa8" stroke-width="0.07"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# audits


def check_variable_counts():
    scns = make_scenarios()
    got = {}
    for (name, method), want in EXPECTED_NUM_VARS.items():
        scn = scns[name]
        have = nlp.num_vars(scn.horizon, len(scn.obstacles), method)
        got[(name, method)] = have
        if have != want:
            return False, f"{name}/{method}: {have} variables, expected {want}"
    counts = "/".join(
        str(got[(n, m)])
        for m in ("msde",)
        for n in ("reverse_parking",)
    )
    svm = "/".join(
        str(got[(n, "svm")])
        for n in (
            "reverse_parking", "parallel_parking", "polygon_course", "circle_course",
        )
    )
    return True, f"{counts}/{svm}"


def random_convex_polygon(rng, center, scale: float) -> ConvexPolygon:
    """Convex hull of up to 8 points scattered in a disc; 3 to 8 vertices."""
    from scipy.spatial import ConvexHull

    while True:
        n = rng.integers(4, 9)
        raw = rng.normal(size=(n, 2)) * scale
        try:
            hull = ConvexHull(raw)
        except Exception:
            continue
        verts = raw[hull.vertices] + np.asarray(center)
        if len(verts) >= 3:
            return ConvexPolygon(verts)


def check_separability(pairs: int = 1000, seed: int = 0):
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(pairs):
        a = random_convex_polygon(rng, (0.0, 0.0), 1.0)
        # offsets straddle touching distance so both outcomes are common
        off = rng.uniform(0.0, 4.0) * _unit(rng)
        b = random_convex_polygon(rng, off, 1.0)
        sat_disjoint = not polygons_intersect(a, b)
        svm_disjoint = nlp.separable(a, b)
        if sat_disjoint != svm_disjoint:
            mismatches += 1
    ok = mismatches == 0
    return ok, f"{pairs - mismatches}/{pairs} agree"


def _unit(rng):
    ang = rng.uniform(0.0, 2.0 * math.pi)
    return np.array([math.cos(ang), math.sin(ang)])


def _audit_scenario() -> Scenario:
    return Scenario(
        name="audit",
        vehicle=VehicleParams(),
        weights=nlp.OcpWeights(
            s_f=np.array([300.0, 300.0, 15.0, 600.0, 15.0]),
            q=np.array([0.25, 0.25, 0.05, 1.0, 0.05]),
            r=np.array([0.2, 20.0]),
        ),
        obstacles=[
            ConvexPolygon(np.array([[2.0, 1.0], [4.0, 1.0], [4.0, 2.4], [2.0, 2.4]])),
            ConvexPolygon(
                np.array(
                    [[-4.0, -1.0], [-2.4, -2.0], [-1.2, -0.6], [-2.0, 0.8], [-3.6, 0.6]]
                )
            ),
            CircleObstacle((0.5, -2.5), 0.6),
        ],
        x_ref=np.array([6.0, 0.0, 0.0, 0.0, 0.0]),
        initial_states=np.array([[-8.0, 0.0, 0.0, 0.0, 0.0]]),
        horizon=6,
    )


def check_gradients(points: int = 100, seed: int = 0):
    """Compare analytic first derivatives against central differences.

    Rows where the forward and backward one-sided quotients disagree sit on
    a kink of the min in the signed-distance constraint and are excluded;
    everywhere else the analytic Jacobian must match to 1e-5.
    """
    rng = np.random.default_rng(seed)
    scn = _audit_scenario()
    h = 1e-6
    worst = 0.0
    for k in range(points):
        method = ("msde", "svm")[k % 2]
        problem = nlp.assemble(
            scn, rng.uniform(-1.0, 1.0, size=5), rng.uniform(-0.5, 0.5, size=2),
            method,
        )
        n = problem.layout.num_vars
        z = np.empty(n)
        st = problem.layout.states(z)
        st[:, 0] = rng.uniform(-6.0, 6.0, size=len(st))
        st[:, 1] = rng.uniform(-6.0, 6.0, size=len(st))
        st[:, 2] = rng.uniform(-1.9, 1.9, size=len(st))
        st[:, 3] = rng.uniform(-math.pi, math.pi, size=len(st))
        st[:, 4] = rng.uniform(-0.65, 0.65, size=len(st))
        problem.layout.inputs(z)[:] = rng.uniform(-0.9, 0.9, size=(len(st) - 1, 2))
        if method == "svm":
            problem.layout.lines(z)[:] = rng.uniform(-1.0, 1.0, size=(len(problem.layout.lines(z)), len(st), 3))

        _, grad, _, je, _, ji = problem.eval_derivs(z)
        je = np.asarray(je.todense() if hasattr(je, "todense") else je)
        ji = np.asarray(ji.todense() if hasattr(ji, "todense") else ji)
        analytic = np.vstack([grad[None, :], je, ji])

        m = analytic.shape[0]
        central = np.empty((m, n))
        kink = np.zeros(m, dtype=bool)
        f0, ce0, ci0 = problem.eval_fc(z)
        base = np.concatenate([[f0], ce0, ci0])
        for j in range(n):
            z[j] += h
            fp, cep, cip = problem.eval_fc(z)
            z[j] -= 2.0 * h
            fm, cem, cim = problem.eval_fc(z)
            z[j] += h
            up = np.concatenate([[fp], cep, cip])
            dn = np.concatenate([[fm], cem, cim])
            central[:, j] = (up - dn) / (2.0 * h)
            fwd = (up - base) / h
            bwd = (base - dn) / h
            scale = np.maximum(1.0, np.maximum(np.abs(fwd), np.abs(bwd)))
            kink |= np.abs(fwd - bwd) > 1e-3 * scale
        keep = ~kink
        err = np.abs(analytic[keep] - central[keep])
        scale = np.maximum(1.0, np.maximum(np.abs(analytic[keep]), np.abs(central[keep])))
        worst = max(worst, float((err / scale).max()))
    ok = worst < 1e-5
    return ok, f"max rel err {worst:.2e}"


# ---------------------------------------------------------------------------
# subcommands


def _select_episodes(scenario, args):
    total = len(scenario.initial_states)
    if args.episode is not None:
        if args.batch:
            raise CliError("--batch and --episode are mutually exclusive")
        if not 0 <= args.episode < total:
            raise CliError(
                f"episode {args.episode} out of range (scenario has {total})"
            )
        return [args.episode]
    return list(range(total))


def _run_one_method(scenario, method, indices, args):
    return run_batch(
        scenario,
        method,
        parallelism=args.parallel,
        timing_mode=args.timing,
        solver_options=_solver_options(args),
        episodes=indices,
    )


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.deterministic and args.timing == "realtime":
        raise CliError("--deterministic requires fixed timing")
    indices = _select_episodes(scenario, args)
    out = resolve_out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)

    batch = _run_one_method(scenario, args.method, indices, args)
    episodes = batch.episodes

    write_results_csv(
        out / "results.csv", results_rows(episodes, indices, args.deterministic)
    )
    summary = summarize(
        scenario, args.method, args.timing, args.deterministic, episodes
    )
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if args.svg:
        for idx, ep in zip(indices, episodes):
            (out / f"trajectory_{idx}.svg").write_text(svg_document(scenario, ep))

    print(
        f"{scenario.name} {args.method}: {len(episodes)} episode(s), "
        f"success rate {summary['success_rate']:.3f}, "
        f"SCT {summary['sct']:.3f}, "
        f"avg solve {summary['avg_solve_ms']:.1f} ms"
    )
    return 0


def cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    indices = _select_episodes(scenario, args)
    out = resolve_out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)

    methods = [args.method_a, args.method_b]
    batches = [
        _run_one_method(scenario, method, indices, args) for method in methods
    ]
    refs = reference_times(*[b.episodes for b in batches])

    report = {
        "scenario": scenario.name,
        "episodes": len(indices),
        "methods": {},
    }
    lines = [
        f"scenario: {scenario.name}  episodes: {len(indices)}",
        f"{'method':8s} {'success':>8s} {'SCT':>8s} {'avg ms':>9s} {'worst ms':>9s}",
    ]
    for method, batch in zip(methods, batches):
        entry = summarize(
            scenario, method, args.timing, args.deterministic, batch.episodes, refs
        )
        report["methods"][method] = entry
        lines.append(
            f"{method:8s} {entry['success_rate']:8.3f} {entry['sct']:8.3f} "
            f"{entry['avg_solve_ms']:9.1f} {entry['worst_solve_ms']:9.1f}"
        )
    (out / "compare.json").write_text(json.dumps(report, indent=2) + "\n")
    print("\n".join(lines))
    return 0


def cmd_check(args) -> int:
    checks = [
        ("variable counts", lambda: check_variable_counts()),
        (
            "separability agreement",
            lambda: check_separability(args.pairs, args.seed),
        ),
        ("gradient audit", lambda: check_gradients(args.points, args.seed)),
    ]
    failed = False
    for label, fn in checks:
        ok, detail = fn()
        print(f"{label}: {detail} {'OK' if ok else 'FAIL'}")
        failed |= not ok
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# argument plumbing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polympc",
        description="trajectory optimization experiments for tight-space parking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_method=True):
        p.add_argument("--scenario", required=True,
                       help="built-in name (reverse, parallel, polygon, circle) "
                            "or scenario JSON path")
        if with_method:
            p.add_argument("--method", required=True, choices=nlp.METHODS)
        p.add_argument("--batch", action="store_true",
                       help="run the whole initial-state grid (default)")
        p.add_argument("--episode", type=int, default=None, metavar="I",
                       help="run a single grid index instead")
        p.add_argument("--timing", choices=("fixed", "realtime"), default="fixed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--parallel", type=int, default=1, metavar="N")
        p.add_argument("--svg", action="store_true",
                       help="write per-episode trajectory SVGs")
        p.add_argument("--deterministic", action="store_true",
                       help="report iteration counts instead of wall-clock "
                            "solve times, for reproducible output files")
        p.add_argument("--seed", type=int, default=0)

    p_run = sub.add_parser("run", help="run one episode or a batch")
    add_common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="score both methods on one scenario")
    add_common(p_cmp, with_method=False)
    p_cmp.add_argument("--method-a", default="svm", choices=nlp.METHODS)
    p_cmp.add_argument("--method-b", default="msde", choices=nlp.METHODS)
    p_cmp.set_defaults(fn=cmd_compare)

    p_chk = sub.add_parser("check", help="run the internal audit suite")
    p_chk.add_argument("--pairs", type=int, default=1000,
                       help="polygon pairs for the separability audit")
    p_chk.add_argument("--points", type=int, default=100,
                       help="evaluation points for the gradient audit")
    p_chk.add_argument("--seed", type=int, default=0)
    p_chk.set_defaults(fn=cmd_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # solver or infrastructure panic
        print(f"panic: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
