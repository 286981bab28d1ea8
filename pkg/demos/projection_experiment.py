"""Project a planar product pair onto random lines and compare dimension functions.

    python demos/projection_experiment.py [depth] [lines]
"""
import sys

import numpy as np

from mutualmf import estimate_dims, build_scale_table, make_pair, project_pair, sample_grassmann

depth = int(sys.argv[1]) if len(sys.argv) > 1 else 10
lines = int(sys.argv[2]) if len(sys.argv) > 2 else 5
mu, nu = make_pair("product-binomial", depth)
points = [(-1.0, -0.5), (0.0, 0.0), (1.0, 1.0), (2.0, 1.5)]


def dims(a, b, q, t):
    return estimate_dims(build_scale_table(a, b, q, t, 4, depth))[:3]


planar = {qt: dims(mu, nu, *qt) for qt in points}
print("plane:   " + "  ".join(f"({q:g},{t:g}) B={planar[q, t][1]:6.3f}" for q, t in points))

for seed in range(lines):
    V = sample_grassmann(2, 1, seed)
    pa, pb = project_pair(mu, nu, V)
    angle = np.degrees(np.arctan2(V.basis[0, 1], V.basis[0, 0])) % 180
    row = []
    for q, t in points:
        b, B, L = dims(pa, pb, q, t)
        row.append(f"({q:g},{t:g}) B={B:6.3f}")
    print(f"{angle:5.1f} deg " + "  ".join(row))

# at q = t = 0 the plane has dimension 2 but a line can only carry 1
