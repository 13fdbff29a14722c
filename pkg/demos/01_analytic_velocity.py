"""Butterfly velocity of the XY chain from its quasiparticle dispersion.

Run: python demos/01_analytic_velocity.py
"""

import numpy as np

from xy_butterfly import butterfly_velocity, group_velocity, vb_sweep

# The isotropic chain has a cosine band: the fastest mode sits at k = pi/2.
iso = butterfly_velocity(1.0, 0.0, 0.0)
print(f"isotropic      v_B = {iso.v_B:.6f} at k* = {iso.k_star:.4f}")

# Strong anisotropy with a field pushes the fastest mode elsewhere.
aniso = butterfly_velocity(1.0, 2.1, 0.8)
print(f"r=2.1, h=0.8   v_B = {aniso.v_B:.6f} at k* = {aniso.k_star:.4f}")

# The group velocity over the Brillouin zone, coarsely tabulated.
for k in np.linspace(0, np.pi, 9):
    print(f"  k = {k:5.3f}   v_g = {group_velocity(k, 1.0, 2.1, 0.8):+.4f}")

# A small (r, h) grid. Rows are r, columns are h; note the mirror symmetry.
grid = np.linspace(-2, 2, 5)
table = vb_sweep(grid, grid, 1.0)
print("\n   r \\ h " + "".join(f"{h:8.2f}" for h in grid))
for r, row in zip(grid, table):
    print(f"{r:8.2f} " + "".join(f"{v:8.3f}" for v in row))
