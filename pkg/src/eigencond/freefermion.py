"""
Free-fermion solution of the open transverse-field Ising chain.

The chain ``J sum_j Z_j Z_{j+1} + h sum_j X_j`` (``V - 1`` bonds) is unitarily
equivalent, by a site-wise Hadamard rotation and sign gauge, to
``-J sum X X - h sum Z``.  A Jordan-Wigner transformation turns the latter into
``(i/4) sum_ab A_ab g_a g_b`` over ``2V`` Majorana operators with a real
antisymmetric coupling matrix ``A``; the eigenvalues of ``A`` come in pairs
``+-i eps_k`` and the many-body spectrum is ``sum_k n_k eps_k - sum_k eps_k/2``
with ``n_k`` in ``{0, 1}``.

Spectral sums over all ``2**V`` states then reduce to one-dimensional
integrals of ``prod_k (1 + exp(-y eps_k))``, evaluated in the log domain so that
``V`` in the hundreds stays within double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = [
    "QUAD_RTOL",
    "PairingError",
    "QuadratureError",
    "DivergentIntegralError",
    "FreeFermionSpectrum",
    "majorana_matrix",
    "jordan_wigner_spectrum",
    "many_body_spectrum",
    "log1pexp",
    "stable_z",
    "stable_z_bulk",
    "stable_ze",
    "free_fermion_critical_energy",
    "ResolventSums",
    "resolvent_sums",
]

QUAD_RTOL = 1e-10
_PIECE_RTOL = 1e-12
_PAIRING_TOL = 1e-10


class PairingError(ArithmeticError):
    """Eigenvalues of the Majorana matrix are not paired as ``+-eps``."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class DivergentIntegralError(ArithmeticError):
    """A zero mode not absorbed in the ground degeneracy makes the integral
    diverge."""


@dataclass(frozen=True)
class FreeFermionSpectrum:
    """Single-particle energies of a quadratic fermion Hamiltonian.

    Attributes
    ----------
    epsilons : ndarray
        Non-negative mode energies ``eps_k`` in ascending order.
    const_shift : float
        Energy of the empty state in the original (unshifted) units, so that
        unshifted energies are ``sum_k n_k eps_k + const_shift`` and shifted
        energies are ``sum_k n_k eps_k``.
    ground_degeneracy : int
        ``2**z`` with ``z`` the number of exact zero modes.
    zero_tol : float
        Threshold below which a mode counts as an exact zero.
    """

    epsilons: np.ndarray
    const_shift: float = 0.0
    ground_degeneracy: int = 1
    zero_tol: float = 0.0

    @classmethod
    def from_epsilons(cls, epsilons, const_shift=None, zero_tol=None):
        eps = np.sort(np.clip(np.asarray(epsilons, dtype=float), 0.0, None))
        if zero_tol is None:
            zero_tol = 1e-13 * max(float(eps.max(initial=0.0)), 1e-300)
        n_zero = int(np.count_nonzero(eps <= zero_tol))
        if const_shift is None:
            const_shift = -0.5 * float(eps.sum())
        return cls(eps, float(const_shift), 2 ** n_zero, float(zero_tol))

    @property
    def n_sites(self):
        return int(self.epsilons.size)

    @property
    def dim(self):
        return 2.0 ** self.n_sites

    @property
    def active(self):
        """Modes with strictly positive energy."""
        return self.epsilons[self.epsilons > self.zero_tol]

    @property
    def n_bulk(self):
        return self.dim - self.ground_degeneracy

    @property
    def e_max(self):
        """Shifted energy of the fully occupied (anti-ground) state."""
        return float(self.epsilons.sum())

    @property
    def e_inf(self):
        """Mean shifted energy ``sum_k eps_k / 2``."""
        return 0.5 * self.e_max

    @property
    def s2(self):
        """``V * mu_2(eps)``: each occupation is an independent fair coin, so
        the energy variance is ``sum_k eps_k^2 / 4``."""
        return float(np.sum(self.epsilons ** 2) / (4.0 * self.n_sites))

    def moments(self):
        """Spectral moments of the chain, for the scaling analysis."""
        from .statespace import SpectralMoments
        v = self.n_sites
        return SpectralMoments(self.e_inf / v, self.s2, {2: self.s2 / v}, v)


def majorana_matrix(n_sites, J, h):
    """Real antisymmetric ``2V x 2V`` coupling matrix of the open chain.

    Field terms couple Majoranas ``(2j, 2j+1)`` with ``2h`` and bonds couple
    ``(2j+1, 2j+2)`` with ``2J`` (zero-based indices).
    """
    a = np.zeros((2 * n_sites, 2 * n_sites))
    for j in range(n_sites):
        a[2 * j, 2 * j + 1] = 2.0 * h
    for j in range(n_sites - 1):
        a[2 * j + 1, 2 * j + 2] = 2.0 * J
    return a - a.T


def jordan_wigner_spectrum(n_sites, J=1.0, h=1.0):
    """Mode energies of the open transverse-field Ising chain.

    Parameters
    ----------
    n_sites : int
        Chain length ``V``.
    J, h : float
        Bond and transverse-field couplings.

    Returns
    -------
    FreeFermionSpectrum

    Raises
    ------
    PairingError
        If the eigenvalues of ``iA`` fail to pair as ``+-eps`` within 1e-10.
    """
    a = majorana_matrix(n_sites, J, h)
    evals = np.linalg.eigvalsh(1j * a)
    scale = max(float(np.max(np.abs(evals))), 1.0)
    mismatch = float(np.max(np.abs(evals + evals[::-1])))
    if mismatch > _PAIRING_TOL * scale:
        raise PairingError(f"Majorana eigenvalues unpaired by {mismatch:.3e}")
    eps = 0.5 * (evals[n_sites:] - evals[:n_sites][::-1])
    return FreeFermionSpectrum.from_epsilons(eps)


def many_body_spectrum(spectrum, *, shifted=True):
    """All ``2**V`` energies ``sum_k n_k eps_k`` (ascending).

    Only sensible for moderate ``V``; used as a direct-sum reference.
    """
    energies = np.zeros(1)
    for eps in spectrum.epsilons:
        energies = np.concatenate([energies, energies + eps])
    energies.sort()
    if not shifted:
        energies = energies + spectrum.const_shift
    return energies


def log1pexp(w):
    """``log(1 + exp(w))`` without overflow or underflow."""
    w = np.asarray(w, dtype=float)
    return np.where(w > 36.0, w,
                    np.where(w < -36.0, np.exp(np.minimum(w, 0.0)),
                             np.log1p(np.exp(np.minimum(w, 36.0)))))


def _log_trace(y, eps):
    """``sum_k log(1 + exp(-y eps_k))`` over the active modes."""
    return float(np.sum(log1pexp(-y * eps)))


def _piecewise_quad(func, y0, *, rtol=_PIECE_RTOL):
    """Integrate a positive, eventually decaying ``func`` over ``[0, inf)``.

    The half-line is cut at ``y0 * 2**j``; each piece is integrated with
    adaptive Gauss-Kronrod quadrature.  Cutting stops once the remaining tail,
    bounded by ``func(edge) * edge``, is negligible, and the last piece runs to
    infinity.
    """
    total = 0.0
    err = 0.0
    lo = 0.0
    hi = y0
    for _ in range(2000):
        val, e, info = _quad(func, lo, hi, rtol)
        total += val
        err += e
        f_hi = func(hi)
        if f_hi * hi <= 1e-3 * rtol * abs(total):
            val, e, info = _quad(func, hi, np.inf, rtol)
            total += val
            err += e
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise QuadratureError("tail did not decay", achieved=err)
    if total != 0.0 and err > QUAD_RTOL * abs(total):
        raise QuadratureError(
            f"relative error {err / abs(total):.2e} above {QUAD_RTOL:g}",
            achieved=err / abs(total))
    return total


def _quad(func, lo, hi, rtol):
    val, err, info = integrate.quad(func, lo, hi, epsabs=0.0, epsrel=rtol,
                                    limit=200, full_output=True)[:3]
    return val, err, info


def _check_beta(beta):
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta!r}")


def _first_scale(eps, rate):
    return 1.0 / (rate + float(np.sum(eps)) + 1e-300)


def stable_z(spectrum, beta):
    """``Z(beta) = sum_alpha 1/(1 + beta E_alpha)`` over all ``2**V`` states.

    Uses ``Z = N_gs + (N_gs/beta) int_0^inf dy exp(-y/beta) expm1(S(y))`` with
    ``S(y) = sum_k log(1 + exp(-y eps_k))`` over the non-zero modes.
    """
    return spectrum.ground_degeneracy + stable_z_bulk(spectrum, beta)


def stable_z_bulk(spectrum, beta):
    """Bulk part ``Z - N_gs`` of :func:`stable_z`, without cancellation."""
    _check_beta(beta)
    eps = spectrum.active
    rate = 1.0 / beta

    def integrand(y):
        return np.exp(-y * rate) * np.expm1(_log_trace(y, eps))

    val = _piecewise_quad(integrand, _first_scale(eps, rate))
    return spectrum.ground_degeneracy * rate * val


def stable_ze(spectrum, beta):
    """``ZE(beta) = sum_alpha E_alpha/(1 + beta E_alpha)``.

    ``ZE = N_gs sum_k eps_k [1/(1 + beta eps_k) + (1/beta) int dy
    exp(-y (1/beta + eps_k)) expm1(S_k(y))]`` where ``S_k`` omits mode ``k``.
    """
    _check_beta(beta)
    eps = spectrum.active
    rate = 1.0 / beta
    total = 0.0
    for k, ek in enumerate(eps):
        others = np.delete(eps, k)

        def integrand(y, ek=ek, others=others):
            return np.exp(-y * (rate + ek)) * np.expm1(_log_trace(y, others))

        val = _piecewise_quad(integrand, _first_scale(eps, rate))
        total += ek * (1.0 / (1.0 + beta * ek) + rate * val)
    return spectrum.ground_degeneracy * total


def _bulk_trace(lam, eps, n_gs):
    """``tr exp(-lam H) - N_gs`` over the bulk, in the log domain."""
    return n_gs * np.expm1(_log_trace(lam, eps))


def _check_zero_modes(spectrum):
    n_zero = spectrum.n_sites - spectrum.active.size
    if 2 ** n_zero != spectrum.ground_degeneracy:
        raise DivergentIntegralError(
            f"{n_zero} zero mode(s) inconsistent with ground degeneracy "
            f"{spectrum.ground_degeneracy}")
    if spectrum.active.size == 0:
        raise DivergentIntegralError("no bulk states")


def free_fermion_critical_energy(spectrum):
    """Critical energy ``E_c = N_bulk / sum_{bulk} 1/E_alpha``.

    The inverse-energy sum is ``int_0^inf dlam (prod_k(1 + e^{-lam eps_k}) -
    N_gs)``.
    """
    return resolvent_sums(spectrum).e_c


@dataclass(frozen=True)
class ResolventSums:
    """Bulk resolvent sums needed near the condensation window.

    Attributes
    ----------
    r0 : float
        ``sum_bulk 1/E``.
    n_bulk, n_gs : float
    """

    r0: float
    n_bulk: float
    n_gs: float
    spectrum: FreeFermionSpectrum

    @property
    def e_c(self):
        return self.n_bulk / self.r0

    def correction(self, beta):
        """``D(z) = sum_bulk 1/(E (E + z))`` with ``z = 1/beta``."""
        _check_beta(beta)
        z = 1.0 / beta
        eps = self.spectrum.active
        n_gs = self.n_gs

        def integrand(lam):
            return _bulk_trace(lam, eps, n_gs) * (-np.expm1(-lam * z)) / z

        return _piecewise_quad(integrand, _first_scale(eps, 0.0))

    def window(self, beta):
        """Ensemble quantities computed without catastrophic cancellation.

        Returns
        -------
        dict
            ``Z``, ``ZE``, ``E_av``, ``p_gs`` and ``dE = E_av - E_c``, where
            the last is evaluated from the exact identity
            ``dE = [N_b (z^2 D - N_gs) - z R0 Z_b] / (Z R0)`` rather than as a
            difference of two nearly equal numbers.
        """
        z = 1.0 / beta
        d = self.correction(beta)
        z_bulk = z * self.r0 - z * z * d
        big_z = self.n_gs + z_bulk
        ze = z * (self.n_bulk - z_bulk)
        num = self.n_bulk * (z * z * d - self.n_gs) - z * self.r0 * z_bulk
        return {
            "Z": big_z,
            "ZE": ze,
            "E_av": ze / big_z,
            "p_gs": self.n_gs / big_z,
            "dE": num / (big_z * self.r0),
        }


def resolvent_sums(spectrum):
    """Evaluate ``sum_bulk 1/E`` for a free-fermion spectrum.

    Raises
    ------
    DivergentIntegralError
        If an exact zero mode is not accounted for in the ground degeneracy.
    """
    _check_zero_modes(spectrum)
    eps = spectrum.active
    n_gs = spectrum.ground_degeneracy

    def integrand(lam):
        return _bulk_trace(lam, eps, n_gs)

    r0 = _piecewise_quad(integrand, _first_scale(eps, 0.0))
    return ResolventSums(r0, spectrum.n_bulk, float(n_gs), spectrum)
