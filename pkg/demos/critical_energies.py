"""Four routes to the critical energy of the paramagnetic chain.

For small chains the bulk inverse sum is done exactly from the full
spectrum and estimated stochastically with conjugate-gradient solves.
The Jordan-Wigner quadrature works at any length, and the leading moment
expansion needs only the first two spectral moments; its error shrinks as
the chain grows.
"""

from eigencond.critical import (exact_critical_energy, free_fermion_report,
                                stochastic_critical_energy)
from eigencond.ensemble import critical_energy_moment_expansion
from eigencond.freefermion import jordan_wigner_spectrum
from eigencond.models import ModelSpec, build

H = 5.0
print(f"{'V':>4} {'exact':>10} {'stochastic':>18} {'free fermion':>13} "
      f"{'moments':>10}")
for v in (6, 8, 10, 20, 40, 80):
    sp_ = jordan_wigner_spectrum(v, 1.0, H)
    ff = free_fermion_report(sp_).eps_c_minus
    mom, _ = critical_energy_moment_expansion(sp_.moments(), sp_.e_max)
    if v <= 10:
        op = build(ModelSpec("TFIM1D", v, {"h_x": H}))
        exact = f"{exact_critical_energy(op.eigenvalues()).eps_c_minus:10.6f}"
        est = stochastic_critical_energy(op, 256, seed=v, both=False)
        stoch = f"{est.eps_c_minus:9.5f}+-{est.stderr[0]:.5f}"
    else:
        exact, stoch = f"{'':10}", f"{'':18}"
    print(f"{v:4d} {exact} {stoch} {ff:13.6f} {mom:10.6f}")
