"""Condensation onto a nearly degenerate doublet.

The ferromagnetic chain (h = 0.5, 11 sites) has a ground doublet split by
a gap far below the level spacing.  Two critical energies appear: below
eps_c1 the doublet as a whole condenses, and only below eps_c0 does the
lower member take over.  Between them the two members share the weight,
with ratio p_1/p_gs = 1/(1 + beta*gap).
"""

import numpy as np

from eigencond.ensemble import near_degeneracy_curve
from eigencond.models import ModelSpec, build

op = build(ModelSpec("TFIM1D", 11, {"h_x": 0.5}), exact_degeneracy_only=True)
near = near_degeneracy_curve(op.eigenvalues())
print(f"gap = {near.gap:.3e}  eps_c1 = {near.eps_c1:.4f}  "
      f"eps_c0 = {near.eps_c0:.4f}")
c = near.curve
print(f"{'eps':>7} {'beta':>11} {'p_gs':>8} {'p_1':>8} {'1/(1+b*gap)':>12}")
for target in (1.2, 0.9, 0.8, 0.6, 0.4, 0.2, 0.12, 0.08, 0.04):
    i = int(np.argmin(np.abs(c.eps - target)))
    print(f"{c.eps[i]:7.3f} {c.beta[i]:11.4g} {c.p_gs[i]:8.4f} "
          f"{c.p_1[i]:8.4f} {1.0 / (1.0 + c.beta[i] * near.gap):12.4f}")
