"""Scrambling light cone and a fitted butterfly velocity, noiseless.

The squared commutator C_j(t) is read off the teleportation fidelity of the
two-copy protocol. The first time each C_j reaches 0.1 gives a spreading
time, and a straight line through (j, t_j) gives v_B = 1 / slope.

Run: python demos/03_light_cone.py
"""

import numpy as np

from xy_butterfly import ModelParams, run_pipeline

for r, h in [(0.0, 0.0), (2.1, 0.8)]:
    res = run_pipeline(ModelParams(1.0, r, h, 5))
    print(f"\nr = {r}, h = {h}")
    # A coarse text picture of the surface: one row per site.
    for j in range(2, 6):
        row = [rec.C for rec in res.surface if rec.j == j and round(rec.t / 0.25, 9).is_integer()]
        print(f"  j={j} " + " ".join(f"{c:4.2f}" for c in row[:9]))
    for p in res.spreading:
        print(f"  t_{p.j} = {p.t_j:.4f} ({p.crossing_quality})")
    print(f"  fitted v_B {res.fit.v_B:.4f}, analytic {res.analytic_vB:.4f}, "
          f"deviation {100 * res.rel_dev:.1f}%")

# The times are on the same grid for every site, so the ordering of the
# spreading times is itself a check of causality.
assert np.all(np.diff([p.t_j for p in res.spreading]) >= 0)
