import json
import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from eigencond.critical import (CriticalEnergyReport, DivergentSumError,
                                NotPositiveDefiniteError, SolverError,
                                conjugate_gradient,
                                critical_energy_ensemble_stats,
                                exact_critical_energy, free_fermion_report,
                                moment_expansion_report,
                                stochastic_critical_energy,
                                stochastic_inverse_trace,
                                tridiagonal_bulk_inverse_sums)
from eigencond.freefermion import jordan_wigner_spectrum
from eigencond.models import ModelSpec, build, gaussian_ensemble_tridiagonal
from eigencond.statespace import GroundSpace, Hamiltonian, spectral_moments


# -- exact sums ---------------------------------------------------------------

def test_four_level_example():
    r = exact_critical_energy([0.0, 1.0, 2.0, 3.0], n_sites=1)
    assert r.eps_c_minus == pytest.approx(18 / 11, rel=1e-15)
    # Reflected spectrum is the same ladder.
    assert r.eps_c_plus == pytest.approx(3 - 18 / 11, rel=1e-15)


def test_degenerate_ground_space_is_excluded():
    e = [0.0, 0.0, 0.0, 1.0, 2.0, 4.0, 4.0, 4.0]
    r = exact_critical_energy(e, n_sites=3)
    assert r.eps_c_minus == pytest.approx(5 / (1 + 1 / 2 + 3 / 4) / 3)
    assert r.eps_c_plus == pytest.approx((4 - 5 / (1 / 3 + 1 / 2 + 3 / 4))
                                         / 3)
    with pytest.raises(DivergentSumError):
        exact_critical_energy(e, ground_degeneracy=1)


def test_shift_invariance():
    e = np.array([0.0, 0.5, 1.7, 2.0])
    a = exact_critical_energy(e, n_sites=2)
    b = exact_critical_energy(e - 3.1, n_sites=2)
    assert a.eps_c_minus == pytest.approx(b.eps_c_minus, rel=1e-14)


@pytest.mark.parametrize("v,h", [(6, 5.0), (8, 1.0), (10, 0.5)])
def test_free_fermion_matches_exact(v, h):
    spec = ModelSpec("TFIM1D", v, {"h_x": h})
    op = build(spec)
    exact = exact_critical_energy(op.eigenvalues(), op.ground.degeneracy,
                                  op.anti_ground.degeneracy)
    ff = free_fermion_report(jordan_wigner_spectrum(v, 1.0, h))
    assert ff.eps_c_minus == pytest.approx(exact.eps_c_minus, rel=1e-7)
    assert ff.eps_c_plus == pytest.approx(exact.eps_c_plus, rel=1e-7)


def test_moment_expansion_report(tfim10):
    r = moment_expansion_report(spectral_moments(tfim10),
                                tfim10.anti_ground.energy)
    exact = exact_critical_energy(tfim10.eigenvalues())
    assert r.method == "moment-expansion"
    # Leading order only: about 3% high at V = 10, 0.7% at V = 20.
    assert r.eps_c_minus == pytest.approx(exact.eps_c_minus, rel=0.05)
    assert r.eps_c_minus > exact.eps_c_minus


# -- conjugate gradient ---------------------------------------------------------

def test_cg_matches_direct_solve(rng):
    a = rng.standard_normal((30, 30))
    a = a @ a.T + 30 * np.eye(30)
    b = rng.standard_normal((30, 4))
    x, it = conjugate_gradient(lambda p: a @ p, b, tol=1e-12)
    assert np.allclose(x, np.linalg.solve(a, b), rtol=1e-9, atol=1e-12)
    assert it <= 60
    x1, _ = conjugate_gradient(lambda p: a @ p, b[:, 0], tol=1e-12)
    assert x1.shape == (30,)


def test_cg_reports_stall(rng):
    a = np.diag(np.logspace(0, 12, 200))
    with pytest.raises(SolverError) as info:
        conjugate_gradient(lambda p: a @ p, rng.standard_normal(200),
                           tol=1e-14, maxiter=5)
    assert info.value.residual > 1e-14


def test_cg_detects_indefinite_operator():
    a = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(NotPositiveDefiniteError):
        conjugate_gradient(lambda p: a @ p, np.ones(3))


# -- stochastic trace ---------------------------------------------------------------

def test_trace_of_small_diagonal_operator():
    op = Hamiltonian(sp.diags([0.0, 1.0, 2.0, 0.0]).tocsr(), "sparse", 2)
    kernel = GroundSpace(0.0, np.eye(4)[:, [0, 3]])
    est = stochastic_inverse_trace(op, kernel, 1000,
                                   np.random.default_rng(0))
    assert abs(est.mean - 1.5) < 3.0 * est.stderr


def test_exact_deflation_keeps_estimate_unbiased(tfim8):
    plain = stochastic_inverse_trace(tfim8, tfim8.ground, 100,
                                     np.random.default_rng(1))
    deflated = stochastic_inverse_trace(tfim8, tfim8.ground, 100,
                                        np.random.default_rng(1), n_exact=4)
    e = np.sort(tfim8.eigenvalues())
    exact = math.fsum(1.0 / e[1:])
    assert deflated.exact_part == pytest.approx(math.fsum(1.0 / e[1:5]),
                                                rel=1e-9)
    assert abs(deflated.mean - exact) < 3.0 * deflated.stderr
    assert abs(plain.mean - exact) < 3.0 * plain.stderr


@pytest.mark.parametrize("spec", [
    ModelSpec("TFIM1D", 8, {"h_x": 5.0}),
    ModelSpec("Heisenberg1D", 8),
    ModelSpec("MFIM1D", 8),
    ModelSpec("GOE", 8, seed=4),
])
def test_stochastic_matches_exact(spec):
    kw = {"diagonalize": False} if spec.family == "GOE" else {}
    op = build(spec, **kw)
    exact = exact_critical_energy(op.eigenvalues(), op.ground.degeneracy,
                                  op.anti_ground.degeneracy)
    est = stochastic_critical_energy(op, 200, seed=3)
    assert abs(est.eps_c_minus - exact.eps_c_minus) < 3 * est.stderr[0]
    assert abs(est.eps_c_plus - exact.eps_c_plus) < 3 * est.stderr[1]
    assert est.n_probes == 200 and est.seed == 3


# -- reports -----------------------------------------------------------------------

def test_report_validation_and_serialization():
    with pytest.raises(ValueError):
        CriticalEnergyReport("guess", 1.0)
    with pytest.raises(ValueError):
        CriticalEnergyReport("exact-sum", 1.0, 2.0, stderr=(0.1, 0.1))
    with pytest.raises(ValueError):
        CriticalEnergyReport("stochastic-trace", 1.0, 2.0)
    r = CriticalEnergyReport("stochastic-trace", 1.0, 2.0, (0.1, 0.2), 50,
                             {"family": "GOE"}, 8, 1e-8, 7)
    out = json.loads(json.dumps(r.to_json()))
    assert out["V"] == 8 and out["m"] == 50
    assert out["stderr"] == [0.1, 0.2]
    assert out["model"] == {"family": "GOE"}


# -- random families -----------------------------------------------------------------

def test_ensemble_stats_use_the_builder_matrices():
    stats = critical_energy_ensemble_stats("GUE", [3, 4], [6])
    for j, seed in enumerate([3, 4]):
        op = build(ModelSpec("GUE", 6, seed=seed), diagonalize=False)
        e = op.eigenvalues()
        ref = exact_critical_energy(e, 1, 1, n_sites=6).eps_c_minus
        assert stats.eps_c[6][j] == pytest.approx(ref, rel=1e-10)
        assert stats.eps_gs[6][j] == pytest.approx((e[0] - op.shift) / 6,
                                                   rel=1e-10)


def test_ensemble_stats_are_deterministic_and_shrink():
    seeds = {v: range(100 * v, 100 * v + 30) for v in (6, 8)}
    a = critical_energy_ensemble_stats("GOE", seeds, [8, 6])
    b = critical_energy_ensemble_stats("GOE", seeds, [6, 8])
    assert np.array_equal(a.eps_c[8], b.eps_c[8])
    assert list(a.sizes) == [6, 8]
    assert a.std[1] < a.std[0]
    assert a.slope() < 0


@pytest.mark.parametrize("beta", [1, 2])
@pytest.mark.parametrize("v", [6, 9, 12])
def test_tridiagonal_sums_match_full_spectrum(beta, v):
    for seed in range(3):
        diag, off = gaussian_ensemble_tridiagonal(
            v, beta, np.random.default_rng(seed))
        e = sla.eigvalsh_tridiagonal(diag, off, lapack_driver="sterf")
        e_min, e_max, low, high = tridiagonal_bulk_inverse_sums(diag, off)
        assert e_min == pytest.approx(e[0], abs=1e-12 * v)
        assert e_max == pytest.approx(e[-1], abs=1e-12 * v)
        assert low == pytest.approx(math.fsum(1.0 / (e[1:] - e[0])),
                                    rel=1e-10)
        assert high == pytest.approx(math.fsum(1.0 / (e[-1] - e[:-1])),
                                     rel=1e-10)


def test_tridiagonal_sums_on_a_general_matrix():
    diag = np.array([2.0, -1.0, 0.5, 3.0, 1.0])
    off = np.array([0.7, 1.1, -0.4, 0.9])
    e = sla.eigvalsh_tridiagonal(diag, off)
    _, _, low, high = tridiagonal_bulk_inverse_sums(diag, off)
    assert low == pytest.approx(math.fsum(1.0 / (e[1:] - e[0])), rel=1e-10)
    assert high == pytest.approx(math.fsum(1.0 / (e[-1] - e[:-1])),
                                 rel=1e-10)
