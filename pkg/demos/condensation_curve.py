"""Ground-state condensation seen by nested sampling.

Paramagnetic chain, V = 8.  Nested sampling walks the constraint energy
down from the infinite-temperature value, once on H and once on E_max - H,
and records the weight of each discarded state on the ground and
anti-ground states.  Binned, the weights are tiny between the two critical
energies and grow linearly outside them.  The last column is the
typical-ensemble prediction at the same energy density.

Run time is about fifteen seconds.
"""

import numpy as np

from eigencond.critical import exact_critical_energy
from eigencond.ensemble import solve_beta_for_energy, typical_weights
from eigencond.models import ModelSpec, build
from eigencond.sampler import SamplerConfig, bin_weights, sample_both_tails

V = 8
op = build(ModelSpec("TFIM1D", V, {"h_x": 5.0})).diagonalize()
e = op.spectrum
crit = exact_critical_energy(e, n_sites=V)
e_max = op.anti_ground.energy
print(f"eps_c- = {crit.eps_c_minus:.4f}   eps_c+ = {crit.eps_c_plus:.4f}   "
      f"eps_max = {e_max / V:.4f}")

# Stop each tail a quarter of the way from the edge to the critical energy.
low = SamplerConfig(n_moves=4, max_iterations=100_000,
                    target_energy=0.25 * crit.eps_c_minus * V, seed=1)
high = SamplerConfig(n_moves=4, max_iterations=100_000,
                     target_energy=e_max - 0.25 * (e_max - crit.eps_c_plus * V),
                     seed=2)
ground, anti = sample_both_tails(op, low, high, store_states=False)
print(f"{len(ground)} + {len(anti)} records")

bins = bin_weights(ground, op, 0.25, anti_records=anti)
print(f"{'eps':>7} {'<p>':>9} {'stderr':>9} {'n':>5} {'typical':>9}")
i_gs, i_anti = np.argmin(e), np.argmax(e)
for eps, mean, err, n in zip(bins.centers, bins.means, bins.stderr,
                             bins.counts):
    beta = solve_beta_for_energy(e, eps * V)
    w = typical_weights(e, beta)
    print(f"{eps:7.3f} {mean:9.4f} {err:9.4f} {n:5d} "
          f"{w[i_gs] + w[i_anti]:9.4f}")
