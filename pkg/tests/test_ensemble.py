import math

import numpy as np
import pytest
from scipy import integrate

from eigencond.critical import free_fermion_report
from eigencond.ensemble import (EnergyOutOfRangeError, InvalidBetaError,
                                bulk_energy,
                                critical_energy_moment_expansion,
                                critical_window_curve, default_beta_grid,
                                ensemble_curve, free_fermion_curve,
                                near_degeneracy_curve, scaling_function,
                                scaling_transform,
                                semicircle_critical_densities,
                                solve_beta_for_energy, typical_weights,
                                window_betas)
from eigencond.freefermion import jordan_wigner_spectrum, many_body_spectrum
from eigencond.statespace import SpectralMoments


@pytest.fixture(scope="module")
def chain10():
    spec = jordan_wigner_spectrum(10, 1.0, 5.0)
    return spec, np.sort(many_body_spectrum(spec))


# -- typical weights ----------------------------------------------------------

def test_two_level_weights():
    assert typical_weights([0.0, 1.0], 1.0) == pytest.approx([2 / 3, 1 / 3])


@pytest.mark.parametrize("beta", [-0.2, 0.0, 0.3, 10.0, 1e6])
def test_weights_are_normalized(chain10, beta):
    _, e = chain10
    p = typical_weights(e, beta / e[-1] if beta < 0 else beta)
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-14)
    assert np.all(p > 0)


def test_pole_is_rejected():
    with pytest.raises(InvalidBetaError):
        typical_weights([0.0, 1.0, 2.0], -0.5)
    with pytest.raises(InvalidBetaError):
        ensemble_curve([0.0, 1.0, 2.0], [-0.6])


# -- bulk energy --------------------------------------------------------------

def test_bulk_energy_decreases_to_critical_energy(chain10):
    _, e = chain10
    e_c = 1023 / math.fsum(1.0 / e[1:])
    betas = [0.0, 1e-3, 1e-1, 1.0, 10.0, 1e3, 1e6]
    vals = [bulk_energy(e, b) for b in betas]
    assert vals[0] == pytest.approx(np.mean(e[1:]))
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert all(x > e_c for x in vals)
    assert bulk_energy(e, 1e12) == pytest.approx(e_c, rel=1e-9)
    assert bulk_energy(e, math.inf) == pytest.approx(e_c, rel=1e-14)


def test_condensed_weight_from_bulk_energy(chain10):
    _, e = chain10
    e_c = 1023 / math.fsum(1.0 / e[1:])
    for beta in (1e2, 1e3, 1e4):
        c = ensemble_curve(e, [beta])
        # Exact for a non-degenerate ground state.
        assert c.p_gs[0] == pytest.approx(
            1.0 - c.E_av[0] / bulk_energy(e, beta), rel=1e-12)
        # Deep in the condensed phase E_bulk is pinned at E_c.
        assert c.p_gs[0] == pytest.approx(1.0 - c.E_av[0] / e_c, abs=1e-4)


# -- inversion ------------------------------------------------------------------

def test_solve_beta_four_level_example():
    e = np.array([0.0, 1.0, 2.0, 3.0])
    beta = solve_beta_for_energy(e, 1.0)
    w = 1.0 / (1.0 + beta * e)
    assert abs(math.fsum(e * w) / math.fsum(w) - 1.0) < 1e-10


@pytest.mark.parametrize("frac", [0.01, 0.2, 0.45, 0.5, 0.55, 0.9, 0.999])
def test_solve_beta_round_trip(chain10, frac):
    _, e = chain10
    target = frac * e[-1]
    beta = solve_beta_for_energy(e, target)
    got = ensemble_curve(e, [beta]).E_av[0]
    assert got == pytest.approx(target, rel=1e-9)
    assert (beta > 0) == (target < np.mean(e))


def test_solve_beta_free_fermion_matches_spectral(chain10):
    spec, e = chain10
    for target in (0.1 * e[-1], 0.8 * e[-1]):
        assert solve_beta_for_energy(spec, target) == pytest.approx(
            solve_beta_for_energy(e, target), rel=1e-7)


def test_solve_beta_rejects_out_of_range(chain10):
    _, e = chain10
    with pytest.raises(EnergyOutOfRangeError):
        solve_beta_for_energy(e, -0.1)
    with pytest.raises(EnergyOutOfRangeError):
        solve_beta_for_energy(e, e[-1])


# -- curves -----------------------------------------------------------------------

def test_free_fermion_curve_matches_spectral_sums(chain10):
    spec, e = chain10
    betas = default_beta_grid(e.size, 60)
    ff = free_fermion_curve(spec, betas)
    ref = ensemble_curve(e, betas)
    assert np.allclose(ff.Z, ref.Z, rtol=1e-9)
    assert np.allclose(ff.E_av, ref.E_av, rtol=1e-8)
    assert np.allclose(ff.p_gs, ref.p_gs, rtol=1e-9)
    assert np.allclose(ff.p_anti_gs, ref.p_anti_gs, rtol=1e-9)
    ff.check_monotone()
    assert ff.n_sites == ref.n_sites == 10
    assert list(ff.columns()) == ["beta", "Z", "ZE", "E_av", "p_gs",
                                  "p_anti_gs"]
    assert np.allclose(ff.columns()["ZE"], ref.ZE, rtol=1e-8)


def test_curve_columns_and_ordering(chain10):
    _, e = chain10
    c = ensemble_curve(e)
    assert c.beta.size == 400
    assert list(c.columns()) == ["beta", "Z", "E_av", "p_gs", "p_anti_gs"]
    c.check_monotone()
    assert c.p_gs[-1] > 0.99
    assert c.eps[0] == pytest.approx(np.mean(e) / 10, rel=1e-5)


def test_monotonicity_check_flags_repeated_beta(chain10):
    _, e = chain10
    c = ensemble_curve(e, [0.1, 0.2, 0.2, 0.3])
    with pytest.raises(ValueError):
        c.check_monotone()


# -- analytic reference values ------------------------------------------------------

def test_semicircle_critical_densities():
    minus, plus = semicircle_critical_densities()
    assert minus == pytest.approx(0.5, rel=1e-12)
    assert plus == pytest.approx(1.5, rel=1e-12)
    # Independent route: x = -cos t on [0, pi].
    inv, _ = integrate.quad(
        lambda t: 2.0 / math.pi * math.sin(t) ** 2 / (1.0 - math.cos(t)),
        0.0, math.pi)
    assert 1.0 / inv == pytest.approx(minus, rel=1e-10)
    assert semicircle_critical_densities(2.0)[0] == pytest.approx(1.0)


def test_moment_expansion_limits_and_accuracy():
    flat = SpectralMoments(eps_inf=2.0, s2=0.0, n_sites=6)
    assert critical_energy_moment_expansion(flat, 24.0) == \
        pytest.approx((2.0, 2.0))
    spec = jordan_wigner_spectrum(20, 1.0, 5.0)
    minus, plus = critical_energy_moment_expansion(spec.moments(), spec.e_max)
    ref = free_fermion_report(spec)
    assert minus == pytest.approx(ref.eps_c_minus, rel=0.02)
    assert plus == pytest.approx(ref.eps_c_plus, rel=0.02)


def test_scaling_function():
    eta = np.array([-30.0, -1.0, 0.0, 1.0, 30.0, 1e8])
    f = scaling_function(eta)
    assert f[2] == pytest.approx(1.0)
    assert np.allclose(f * scaling_function(-eta), 1.0, rtol=1e-12)
    assert np.allclose(f * (f + eta), 1.0, rtol=1e-12)
    assert f[-1] == pytest.approx(1e-8, rel=1e-12)


def test_window_curve_energy_offset_matches_direct(chain10):
    spec, e = chain10
    m = spec.moments()
    curve = critical_window_curve(spec, m, eta_max=6.0, points=41)
    e_c = 1023 / math.fsum(1.0 / e[1:])
    ref = ensemble_curve(e, curve.beta)
    assert np.allclose(curve.delta_e, ref.E_av - e_c, rtol=1e-6,
                       atol=1e-9 * e_c)
    sc = scaling_transform(curve, m, e_c / 10)
    assert sc.eta[0] == pytest.approx(6.0, rel=1e-6)
    assert sc.eta[-1] == pytest.approx(-6.0, rel=1e-6)


def test_window_betas_span_requested_range(chain10):
    spec, e = chain10
    m = spec.moments()
    eps_c = 1023 / math.fsum(1.0 / e[1:]) / 10
    betas = window_betas(e, m, eps_c, eta_max=3.0, points=51)
    assert betas.size == 51 and np.all(np.diff(betas) > 0)
    sc = scaling_transform(ensemble_curve(e, betas), m, eps_c)
    assert sc.eta[0] == pytest.approx(3.0, rel=1e-6)
    assert sc.eta[-1] <= -3.0 + 1e-6


# -- near-degenerate doublet ----------------------------------------------------------

def test_doublet_weight_ratio():
    rng = np.random.default_rng(2)
    e = np.concatenate([[0.0, 1e-3], 1.0 + rng.random(30)])
    nd = near_degeneracy_curve(e)
    c = nd.curve
    assert np.allclose(c.p_1 / c.p_gs, 1.0 / (1.0 + c.beta * 1e-3),
                       rtol=1e-12)
    assert nd.gap == pytest.approx(1e-3)
    assert nd.e_c1 == pytest.approx(30 / math.fsum(1.0 / e[2:]))
    assert nd.e_c0 == pytest.approx(31 / math.fsum(1.0 / e[1:]))
    assert list(c.columns())[-1] == "p_1"


def test_exact_doublet_shares_weight_equally():
    e = np.concatenate([[0.0, 0.0], np.linspace(1.0, 2.0, 14)])
    nd = near_degeneracy_curve(e)
    assert np.allclose(nd.curve.p_1, nd.curve.p_gs, rtol=1e-14)
    assert nd.e_c0 == 0.0
