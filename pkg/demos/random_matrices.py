"""Critical energies of Gaussian orthogonal matrices.

The semicircle law puts eps_c- at 1/2.  At finite size the sample-to-sample
spread shrinks like N**(-1/3), the scale of edge fluctuations.  Rescaled
ground energies collapse onto one distribution across sizes.  Each sample
costs O(N) through the tridiagonal model, so N = 2**14 is quick.
"""

import numpy as np
from scipy.stats import ks_2samp

from eigencond.critical import critical_energy_ensemble_stats
from eigencond.ensemble import semicircle_critical_densities

sizes = (8, 10, 12, 14)
print("semicircle values:", semicircle_critical_densities())
stats = critical_energy_ensemble_stats(
    "GOE", {v: range(1000 * v, 1000 * v + 200) for v in sizes}, sizes)
for v, m, s in zip(stats.sizes, stats.mean, stats.std):
    print(f"N = 2**{v:<3d} eps_c- = {m:.4f} +- {s:.4f}")
print(f"slope of std against N: {stats.slope():.3f} (edge scale -1/3)")

scaled = {v: -(stats.eps_gs[v] + 1.0) * np.sqrt(2.0) * 2.0 ** (2 * v / 3)
          for v in sizes}
for v in sizes[:-1]:
    p = ks_2samp(scaled[v], scaled[sizes[-1]]).pvalue
    print(f"rescaled ground energies, N = 2**{v} vs 2**{sizes[-1]}: "
          f"KS p = {p:.2f}")
