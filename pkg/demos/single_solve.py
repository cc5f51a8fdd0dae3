"""One open-loop trajectory optimization, both formulations side by side.

Assembles the reverse-parking problem from the grid center and solves it
cold (no warm start). The separating-line formulation carries three extra
variables per obstacle per step, which shows up directly in problem size
and solve time; the planned maneuvers come out nearly identical.
"""

import time

import numpy as np

from polympc import assemble, make_scenarios, solve

scenario = make_scenarios()["reverse_parking"]
x0 = np.array([0.0, 3.0, 0.0, 0.0, 0.0])

for method in ("msde", "svm"):
    problem = assemble(scenario, x0, method=method)
    t0 = time.perf_counter()
    result = solve(problem)
    wall = time.perf_counter() - t0

    states = problem.layout.states(result.solution)
    inputs = problem.layout.inputs(result.solution)
    print(f"{method}:")
    print(f"  variables       {problem.layout.num_vars}")
    print(f"  status          {result.status.name} in {result.iterations} iterations")
    print(f"  solve time      {1e3 * wall:.1f} ms")
    print(f"  objective       {result.objective:.2f}")
    print(f"  first input     vdot {inputs[0, 0]:+.3f}, ddot {inputs[0, 1]:+.3f}")
    print(f"  horizon end     ({states[-1, 0]:+.2f}, {states[-1, 1]:+.2f}) "
          f"heading {np.degrees(states[-1, 3]):+.1f} deg")
    print()
