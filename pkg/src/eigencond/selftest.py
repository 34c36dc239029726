"""
Fast internal consistency checks behind ``eigencond selftest``.

Each check compares two independent routes to the same number on a small
system and finishes in well under a second.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .critical import exact_critical_energy, free_fermion_report
from .freefermion import (jordan_wigner_spectrum, many_body_spectrum,
                          stable_z, stable_ze)
from .models import ModelSpec, build
from .sampler import gmc_advance, gmc_advance_stepwise, random_tangent
from .statespace import Hamiltonian, haar_random_state, spectral_moments


def _jordan_wigner():
    spec = ModelSpec("TFIM1D", 6, {"h_x": 1.3})
    dense = np.linalg.eigvalsh(build(spec).to_dense())
    ff = np.sort(many_body_spectrum(jordan_wigner_spectrum(6, 1.0, 1.3)))
    return float(np.max(np.abs(dense - dense[0] - ff))), 1e-10


def _critical_routes():
    spec = ModelSpec("TFIM1D", 8, {"h_x": 5.0})
    exact = exact_critical_energy(build(spec).eigenvalues(), 1, 1)
    ff = free_fermion_report(jordan_wigner_spectrum(8, 1.0, 5.0))
    return abs(exact.eps_c_minus / ff.eps_c_minus - 1.0), 1e-7


def _quadrature():
    spec = jordan_wigner_spectrum(7, 1.0, 2.0)
    e = many_body_spectrum(spec)
    worst = 0.0
    for beta in (1e-3, 1.0, 1e3):
        w = 1.0 / (1.0 + beta * e)
        worst = max(worst, abs(stable_z(spec, beta) / math.fsum(w) - 1.0),
                    abs(stable_ze(spec, beta) / math.fsum(e * w) - 1.0))
    return worst, 1e-8


def _rotation():
    rng = np.random.default_rng(1)
    evals = np.sort(rng.normal(size=16))
    op = Hamiltonian(evals - evals[0], "diagonal", 4)
    psi = haar_random_state(16, rng)
    v = random_tangent(psi, rng)
    # A constraint just above the start forces reflections.
    e_star = float(np.real(np.vdot(psi, op.matvec(psi)))) + 0.02
    a = gmc_advance(op, psi.copy(), v.copy(), e_star, 2000, 1e-3)
    b = gmc_advance_stepwise(op, psi.copy(), v.copy(), e_star, 2000, 1e-3)
    if a[2] == 0:
        raise AssertionError("no reflection occurred")
    return float(np.max(np.abs(a[0] - b[0]))), 1e-10


def _heisenberg():
    op = build(ModelSpec("Heisenberg1D", 5))
    return abs(op.ground.degeneracy - 6), 0.5


def _moments():
    op = build(ModelSpec("MFIM1D", 6))
    m = spectral_moments(op)
    return abs(m.s2 / m.s2_pauli - 1.0), 1e-10


def _tridiagonal():
    op = build(ModelSpec("GOE", 5, seed=3), diagonalize=False)
    diag, off = op.data
    dense = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    ref = np.linalg.eigvalsh(dense)
    got = sla.eigvalsh_tridiagonal(diag, off)
    return float(np.max(np.abs(ref - got))), 1e-10


CHECKS = {
    "jordan-wigner spectrum": _jordan_wigner,
    "critical energy: free fermion vs exact": _critical_routes,
    "quadrature vs direct sums": _quadrature,
    "segment jump vs micro-steps": _rotation,
    "heisenberg ground degeneracy": _heisenberg,
    "pauli vs spectral s2": _moments,
    "tridiagonal spectrum": _tridiagonal,
}


def run(verbose=False):
    """Run every check; return ``True`` when all pass."""
    ok = True
    for name, check in CHECKS.items():
        try:
            err, tol = check()
            passed = err <= tol
            detail = f"error {err:.2e} (tol {tol:.0e})"
        except Exception as exc:  # report and keep going
            passed = False
            detail = f"{type(exc).__name__}: {exc}"
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return ok
