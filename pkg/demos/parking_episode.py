"""Closed-loop reverse parking from a single start, with an SVG picture.

Runs the receding-horizon loop from the far corner of the start grid,
prints a sparse timeline of the maneuver, and renders the driven path
over the obstacle map to out/parking_episode.svg.
"""

import math
from pathlib import Path

import numpy as np

from polympc import make_scenarios, run_episode
from polympc.cli import svg_document

scenario = make_scenarios()["reverse_parking"]
x0 = np.array([-5.0, 2.0, 0.0, 0.0, 0.0])

episode = run_episode(scenario, x0, method="msde")

print(f"start   ({x0[0]:+.2f}, {x0[1]:+.2f})")
print(f"goal    ({scenario.x_ref[0]:+.2f}, {scenario.x_ref[1]:+.2f}) "
      f"heading {math.degrees(scenario.x_ref[3]):.0f} deg")
print()
print(f"{'t':>5s} {'px':>7s} {'py':>7s} {'v':>6s} {'heading':>8s}")
for k in range(0, len(episode.times), 10):
    t = episode.times[k]
    px, py, v, th, _ = episode.states[k]
    print(f"{t:5.1f} {px:7.2f} {py:7.2f} {v:6.2f} {math.degrees(th):7.1f} deg")
px, py, v, th, _ = episode.states[-1]
print(f"{episode.times[-1]:5.1f} {px:7.2f} {py:7.2f} {v:6.2f} "
      f"{math.degrees(th):7.1f} deg")
print()
print(f"success {episode.success}, "
      f"completion {episode.completion_time:.1f} s, "
      f"avg solve {1e3 * np.mean(episode.solve_times):.1f} ms, "
      f"solver failures {episode.solver_failures}")

out = Path("out")
out.mkdir(exist_ok=True)
(out / "parking_episode.svg").write_text(svg_document(scenario, episode))
print(f"wrote {out / 'parking_episode.svg'}")
