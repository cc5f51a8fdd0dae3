"""Watch the separating-line test flip as two polygons close in.

A pentagon slides toward a fixed square. At each offset we solve the
small interior-point feasibility problem for a line with the pentagon's
vertices on one side and the square's on the other, and compare the
verdict with the exhaustive projection test.
"""

import numpy as np

from polympc import ConvexPolygon, find_separating_line, polygons_intersect, separable

square = ConvexPolygon(np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]))
pentagon_home = np.array(
    [[-3.0, 0.2], [-2.0, -0.6], [-1.2, 0.3], [-1.6, 1.4], [-2.8, 1.2]]
)

print(f"{'shift':>6s} {'separable':>10s} {'projection':>11s}  line (a, b, c)")
for shift in np.arange(0.0, 3.1, 0.25):
    pentagon = ConvexPolygon(pentagon_home + [shift, 0.4])
    apart = separable(pentagon, square)
    overlap = polygons_intersect(pentagon, square)
    (a, b, c), _ = find_separating_line(pentagon, square)
    desc = f"({a:+.3f}, {b:+.3f}, {c:+.3f})" if apart else "none"
    print(f"{shift:6.2f} {str(apart):>10s} {str(overlap):>11s}  {desc}")
    assert apart == (not overlap)

print("\nthe two tests agreed at every offset")
