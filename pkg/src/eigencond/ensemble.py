"""
The typical-weight ensemble ``p_alpha = Z^-1 / (1 + beta E_alpha)``.

Energies are shifted so that the ground energy is zero.  For ``beta > 0``
the weights describe constraint energies below the spectral mean, for
``-1/E_max < beta < 0`` energies above it.  Large ``beta`` drives the
ensemble towards the ground space; the bulk alone cannot go below the
critical energy ``E_c = N_bulk / sum_bulk 1/E``, and the remaining weight
condenses onto the ground space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .freefermion import (FreeFermionSpectrum, resolvent_sums, stable_z,
                          stable_ze)
from .statespace import degeneracy_tolerance, group_extremal

__all__ = [
    "InvalidBetaError",
    "EnergyOutOfRangeError",
    "EnsembleCurve",
    "ScalingData",
    "NearDegeneracyCurve",
    "default_beta_grid",
    "typical_weights",
    "ensemble_curve",
    "free_fermion_curve",
    "solve_beta_for_energy",
    "bulk_energy",
    "critical_energy_moment_expansion",
    "semicircle_critical_densities",
    "scaling_function",
    "scaling_transform",
    "critical_window_curve",
    "window_betas",
    "near_degeneracy_curve",
]


class InvalidBetaError(ValueError):
    """``1 + beta E_alpha`` is not positive for every level."""


class EnergyOutOfRangeError(ValueError):
    """Requested energy is outside the open spectral interval."""


@dataclass(frozen=True)
class EnsembleCurve:
    """Tabulated ensemble quantities along a grid of ``beta``.

    Attributes
    ----------
    beta, Z, E_av, p_gs, p_anti_gs : ndarray
    p_1 : ndarray or None
        Weight of the first state above the ground space, when tracked.
    provenance : str
        ``"spectral-sum"`` or ``"free-fermion-quadrature"``.
    n_sites : int
    delta_e : ndarray or None
        ``E_av - E_c`` evaluated without cancellation, when available.
    """

    beta: np.ndarray
    Z: np.ndarray
    E_av: np.ndarray
    p_gs: np.ndarray
    p_anti_gs: np.ndarray
    p_1: np.ndarray | None = None
    provenance: str = "spectral-sum"
    n_sites: int = 1
    delta_e: np.ndarray | None = None
    ZE: np.ndarray | None = None

    @property
    def eps(self):
        return self.E_av / self.n_sites

    def columns(self):
        """CSV columns: ``beta,Z,E_av,p_gs,p_anti_gs[,p_1]``.

        Free-fermion curves use ``beta,Z,ZE,E_av,p_gs,p_anti_gs``.
        """
        cols = {"beta": self.beta, "Z": self.Z}
        if self.provenance == "free-fermion-quadrature":
            cols["ZE"] = self.ZE
        cols.update({"E_av": self.E_av, "p_gs": self.p_gs,
                     "p_anti_gs": self.p_anti_gs})
        if self.p_1 is not None:
            cols["p_1"] = self.p_1
        return cols

    def check_monotone(self):
        """Raise ``ValueError`` unless ``E_av`` strictly decreases with beta."""
        order = np.argsort(self.beta)
        e = self.E_av[order]
        bad = np.flatnonzero(np.diff(e) >= 0.0)
        if bad.size:
            b = self.beta[order][bad[0]]
            raise ValueError(f"E_av not decreasing near beta = {b:.6g}")


@dataclass(frozen=True)
class ScalingData:
    """Rescaled ground weights against the scaling variable.

    ``eta = (eps - eps_c) sqrt(N V) / s`` and
    ``p_rescaled = p_gs eps_inf sqrt(V N) / s``; ``f_eta`` is the reference
    scaling function.
    """

    eta: np.ndarray
    p_rescaled: np.ndarray
    f_eta: np.ndarray

    def max_deviation(self, eta_max=10.0):
        sel = np.abs(self.eta) <= eta_max
        return float(np.max(np.abs(self.p_rescaled[sel] - self.f_eta[sel])))


@dataclass(frozen=True)
class NearDegeneracyCurve:
    """Ensemble curve with the doublet weights kept apart.

    Attributes
    ----------
    curve : EnsembleCurve
        ``p_gs`` is the lowest state only and ``p_1`` its partner.
    e_c1 : float
        ``[(N-2)^-1 sum_{alpha>2} 1/E_alpha]^-1``, below which the doublet
        as a whole condenses.
    e_c0 : float
        ``[(N-1)^-1 sum_{alpha>1} 1/E_alpha]^-1``, below which the true
        ground state takes over from its partner.
    gap : float
        Doublet splitting ``E_1 - E_0``.
    """

    curve: EnsembleCurve
    e_c1: float
    e_c0: float
    gap: float
    n_sites: int = 1

    @property
    def eps_c1(self):
        return self.e_c1 / self.n_sites

    @property
    def eps_c0(self):
        return self.e_c0 / self.n_sites


def default_beta_grid(n, points=400):
    """Grid uniform in ``log(1 + beta)`` from ``1e-6`` to ``1e3 N``."""
    return np.expm1(np.linspace(np.log1p(1e-6), np.log1p(1e3 * n), points))


def _as_spectrum(spectrum):
    e = np.sort(np.asarray(spectrum, dtype=float))
    return e - e[0]


def _degeneracies(e, ground_degeneracy, anti_degeneracy):
    tol = degeneracy_tolerance(float(e[-1] - e[0]) or 1.0)
    if ground_degeneracy is None:
        ground_degeneracy = group_extremal(e, tol)[0].size
    if anti_degeneracy is None:
        anti_degeneracy = group_extremal(e, tol, top=True)[0].size
    return int(ground_degeneracy), int(anti_degeneracy)


def typical_weights(spectrum, beta):
    """Normalized weights ``p_alpha proportional to 1/(1 + beta E_alpha)``.

    Parameters
    ----------
    spectrum : array_like
        Shifted energies (ground energy 0), any order.
    beta : float

    Raises
    ------
    InvalidBetaError
        If ``1 + beta E_alpha <= 0`` for some level.
    """
    e = np.asarray(spectrum, dtype=float)
    denom = 1.0 + beta * e
    if np.any(denom <= 0.0):
        raise InvalidBetaError(f"beta = {beta!r} crosses a pole")
    w = 1.0 / denom
    return w / math.fsum(w)


def _sums(e, beta):
    """``Z = sum 1/(1+bE)`` and ``ZE = sum E/(1+bE)`` for one beta."""
    w = 1.0 / (1.0 + beta * e)
    return math.fsum(w), math.fsum(e * w)


def ensemble_curve(spectrum, betas=None, *, ground_degeneracy=None,
                   anti_degeneracy=None, track_first=False):
    """Spectral-sum ensemble curve.

    Parameters
    ----------
    spectrum : array_like
        Shifted energies.
    betas : array_like, optional
        Defaults to :func:`default_beta_grid`.
    ground_degeneracy, anti_degeneracy : int, optional
        Sizes of the extremal spaces; grouped by tolerance if omitted.  With
        ``track_first`` the ground space is the single lowest state.
    track_first : bool
        Report the weight ``p_1`` of the second-lowest state separately.
    """
    e = _as_spectrum(spectrum)
    if track_first:
        ground_degeneracy = 1
    g, a = _degeneracies(e, ground_degeneracy, anti_degeneracy)
    betas = default_beta_grid(e.size) if betas is None else \
        np.asarray(betas, dtype=float)
    zs, zes, pg, pa, p1 = [], [], [], [], []
    for b in betas:
        if np.any(1.0 + b * e <= 0.0):
            raise InvalidBetaError(f"beta = {b!r} crosses a pole")
        z, ze = _sums(e, b)
        w = 1.0 / (1.0 + b * e)
        zs.append(z)
        zes.append(ze)
        pg.append(math.fsum(w[:g]) / z)
        pa.append(math.fsum(w[e.size - a:]) / z)
        p1.append(w[1] / z)
    zs = np.array(zs)
    zes = np.array(zes)
    return EnsembleCurve(betas, zs, zes / zs, np.array(pg), np.array(pa),
                         np.array(p1) if track_first else None,
                         "spectral-sum", _n_sites_of(e.size), None, zes)


def _n_sites_of(n):
    v = int(round(math.log2(n))) if n > 0 else 1
    return v if 2 ** v == n else 1


def free_fermion_curve(spectrum, betas=None):
    """Ensemble curve of the open Ising chain from its mode energies.

    ``Z`` and ``ZE`` come from the log-domain quadratures; the anti-ground
    weight uses ``E_max = sum_k eps_k`` with the degeneracy of the fully
    occupied state equal to the ground degeneracy.
    """
    v = spectrum.n_sites
    betas = default_beta_grid(spectrum.dim) if betas is None else \
        np.asarray(betas, dtype=float)
    e_max = spectrum.e_max
    n_gs = spectrum.ground_degeneracy
    zs, zes = [], []
    for b in betas:
        zs.append(stable_z(spectrum, b))
        zes.append(stable_ze(spectrum, b))
    zs = np.array(zs)
    zes = np.array(zes)
    p_gs = n_gs / zs
    p_anti = n_gs / (1.0 + betas * e_max) / zs
    return EnsembleCurve(betas, zs, zes / zs, p_gs, p_anti, None,
                         "free-fermion-quadrature", v, None, zes)


def _energy_map(spectrum):
    """Return ``(E_av(beta), e_lo, e_hi, e_inf)`` for either spectrum kind."""
    if isinstance(spectrum, FreeFermionSpectrum):
        def e_av(beta):
            if beta == 0.0:
                return spectrum.e_inf
            if beta < 0.0:
                # Reflection symmetry of the chain: E -> E_max - E.
                return spectrum.e_max - e_av(-beta / (1.0 + beta
                                                      * spectrum.e_max))
            return stable_ze(spectrum, beta) / stable_z(spectrum, beta)
        return e_av, 0.0, spectrum.e_max, spectrum.e_inf
    e = _as_spectrum(spectrum)

    def e_av(beta):
        z, ze = _sums(e, beta)
        return ze / z
    return e_av, 0.0, float(e[-1]), float(np.mean(e))


def solve_beta_for_energy(spectrum, e_av, *, rtol=1e-10, max_iter=200):
    """Find ``beta`` with ``sum_alpha E_alpha p_alpha(beta) = e_av``.

    Bisection on a monotone reparametrization: ``u = log(beta)`` for
    ``beta > 0`` and ``beta = -(1 - exp(-u)) / E_max`` for ``beta < 0``, so the
    pole at ``-1/E_max`` is never reached.

    Parameters
    ----------
    spectrum : array_like or FreeFermionSpectrum
        Shifted energies.
    e_av : float
        Target mean energy, strictly inside the spectral range.
    rtol : float
        Relative tolerance on the energy.

    Raises
    ------
    EnergyOutOfRangeError
    """
    energy, e_lo, e_hi, e_inf = _energy_map(spectrum)
    if not e_lo < e_av < e_hi:
        raise EnergyOutOfRangeError(
            f"E_av = {e_av!r} outside ({e_lo!r}, {e_hi!r})")
    tol = rtol * max(abs(e_av), 1e-300)
    if abs(e_av - e_inf) <= tol:
        return 0.0
    if e_av < e_inf:
        # beta = exp(u); the energy decreases with u.
        def beta_of(u):
            return math.exp(u)
        falling = True
        lo, hi = -40.0, 0.0
    else:
        # beta = -(1 - exp(-u)) / E_max; the energy increases with u.
        def beta_of(u):
            return math.expm1(-u) / e_hi
        falling = False
        lo, hi = 0.0, 1.0

    def excess(u):
        diff = energy(beta_of(u)) - e_av
        return diff if falling else -diff

    while excess(hi) > 0.0:
        lo, hi = hi, hi + 5.0
        if hi > 700.0:
            raise EnergyOutOfRangeError(f"E_av = {e_av!r} not reachable")
    u = hi
    for _ in range(max_iter):
        u = 0.5 * (lo + hi)
        diff = excess(u)
        if abs(diff) <= tol:
            break
        if diff > 0.0:
            lo = u
        else:
            hi = u
    return beta_of(u)


def bulk_energy(spectrum, beta, ground_degeneracy=None):
    """Mean energy of the bulk states alone under the typical weights.

    ``E_bulk = sum_bulk E/(1 + beta E) / sum_bulk 1/(1 + beta E)``; decreases
    in ``beta`` towards ``E_c`` from above.
    """
    if beta < 0.0:
        raise InvalidBetaError("bulk energy is defined for beta >= 0")
    e = _as_spectrum(spectrum)
    g, _ = _degeneracies(e, ground_degeneracy, 1)
    bulk = e[g:]
    if math.isinf(beta):
        return bulk.size / math.fsum(1.0 / bulk)
    # Dividing numerator and denominator by beta keeps the large-beta limit
    # free of cancellation: 1/(1/beta + E).
    inv = 1.0 / beta if beta > 0 else None
    if inv is None:
        return float(np.mean(bulk))
    w = 1.0 / (inv + bulk)
    return math.fsum(bulk * w) / math.fsum(w)


def critical_energy_moment_expansion(moments, anti_ground_energy):
    """Leading moment-expansion estimate of the critical energy densities.

    ``eps_c- = eps_inf (1 - s^2 / (V eps_inf^2))`` and, by the same expansion
    applied to the reflected spectrum ``E_max - H``,
    ``eps_c+ = eps_inf + s^2 / (V (eps_max - eps_inf))``.

    Parameters
    ----------
    moments : SpectralMoments
        In shifted units.
    anti_ground_energy : float
        Shifted energy ``E_max`` of the anti-ground space.

    Returns
    -------
    eps_c_minus, eps_c_plus : float
    """
    v = moments.n_sites
    eps_inf = moments.eps_inf
    s2 = moments.s2
    eps_max = anti_ground_energy / v
    minus = eps_inf * (1.0 - s2 / (v * eps_inf ** 2))
    plus = eps_inf + s2 / (v * (eps_max - eps_inf))
    return minus, plus


def semicircle_critical_densities(radius=1.0):
    """Critical energy densities of a semicircle density of states.

    The density on ``[0, 2 radius]`` (shifted so the edge is at zero) gives
    ``eps_c-^-1 = int rho(e)/e de`` and ``eps_c+`` by reflection; for unit
    radius these are ``1/2`` and ``3/2``.
    """
    # int_{-1}^{1} (2/pi) sqrt(1-x^2) / (r (1+x)) dx; the integrand is
    # (1+x)^(-1/2) (1-x)^(1/2) times a constant, so QUADPACK's algebraic
    # endpoint weight integrates it exactly.
    val, _ = integrate.quad(lambda x: 2.0 / (math.pi * radius), -1.0, 1.0,
                            weight="alg", wvar=(-0.5, 0.5))
    minus = 1.0 / val
    return minus, 2.0 * radius - minus


def scaling_function(eta):
    """``f(eta) = (-eta + sqrt(eta^2 + 4)) / 2``, evaluated stably."""
    eta = np.asarray(eta, dtype=float)
    root = np.sqrt(eta * eta + 4.0)
    return np.where(eta > 0.0, 2.0 / (eta + root), 0.5 * (root - eta))


def scaling_transform(curve, moments, eps_c, *, n_states=None):
    """Map an ensemble curve onto the scaling variables.

    Uses ``curve.delta_e`` (the cancellation-free ``E_av - E_c``) when present
    and ``E_av / V - eps_c`` otherwise.

    Parameters
    ----------
    curve : EnsembleCurve
    moments : SpectralMoments
        Supplies ``V``, ``s`` and ``eps_inf``.
    eps_c : float
        Critical energy density (finite-size value).
    n_states : float, optional
        ``N``; defaults to ``2**V``.
    """
    v = moments.n_sites
    n = 2.0 ** v if n_states is None else float(n_states)
    s = moments.s
    if curve.delta_e is not None:
        d_eps = curve.delta_e / v
    else:
        d_eps = curve.E_av / v - eps_c
    root = math.sqrt(n * v)
    eta = d_eps * root / s
    p_resc = curve.p_gs * moments.eps_inf * root / s
    return ScalingData(eta, p_resc, scaling_function(eta))


def critical_window_curve(spectrum, moments, *, eta_max=12.0, points=401):
    """Free-fermion curve across the condensation window.

    Finds the ``beta`` values where ``eta = +-eta_max`` by bisection in
    ``log beta`` and tabulates ``points`` values uniform in ``log beta``
    between them.  ``E_av - E_c`` is evaluated from resolvent identities so
    the window is resolved even when it is far narrower than ``E_c`` times
    machine precision.
    """
    sums = resolvent_sums(spectrum)
    v = spectrum.n_sites
    scale = math.sqrt(spectrum.dim * v) / moments.s / v

    def eta(beta):
        return sums.window(beta)["dE"] * scale

    # eta decreases with beta; bracket around the natural window scale.
    beta0 = math.sqrt(spectrum.dim * moments.s2 / v) / sums.e_c * v
    lo_u = math.log(beta0)
    while eta(math.exp(lo_u)) < eta_max:
        lo_u -= 2.0
    hi_u = math.log(beta0)
    while eta(math.exp(hi_u)) > -eta_max:
        hi_u += 2.0

    def solve(target, a, b):
        for _ in range(200):
            m = 0.5 * (a + b)
            if eta(math.exp(m)) > target:
                a = m
            else:
                b = m
            if b - a < 1e-12:
                break
        return 0.5 * (a + b)

    u_lo = solve(eta_max, lo_u, hi_u)
    u_hi = solve(-eta_max, lo_u, hi_u)
    betas = np.exp(np.linspace(u_lo, u_hi, points))
    rows = [sums.window(b) for b in betas]
    z = np.array([r["Z"] for r in rows])
    ze = np.array([r["ZE"] for r in rows])
    p_gs = np.array([r["p_gs"] for r in rows])
    p_anti = spectrum.ground_degeneracy / (1.0 + betas * spectrum.e_max) / z
    return EnsembleCurve(betas, z, ze / z, p_gs, p_anti, None,
                         "free-fermion-quadrature", v,
                         np.array([r["dE"] for r in rows]), ze)


def window_betas(spectrum, moments, eps_c, *, eta_max=12.0, points=401):
    """``beta`` grid spanning ``|eta| <= eta_max`` for a tabulated spectrum.

    The end points solve ``E_av(beta) = V (eps_c + eta s / sqrt(N V))`` at
    ``eta = +-eta_max``; interior points are uniform in ``log beta``.  A
    lower end point below the spectrum is replaced by ``1e3 N`` over the
    gap scale.
    """
    e = _as_spectrum(spectrum)
    v = moments.n_sites
    half = eta_max * moments.s / math.sqrt(e.size * v) * v
    e_c = eps_c * v
    hi_e = min(e_c + half, 0.5 * (e_c + float(np.mean(e))))
    beta_lo = solve_beta_for_energy(e, hi_e)
    lo_e = e_c - half
    if lo_e > 0.0:
        beta_hi = solve_beta_for_energy(e, lo_e)
    else:
        beta_hi = 1e3 * e.size / float(e[e > 0][0])
    return np.exp(np.linspace(math.log(beta_lo), math.log(beta_hi), points))


def near_degeneracy_curve(spectrum, betas=None):
    """Ensemble curve with the two lowest states tracked separately.

    Parameters
    ----------
    spectrum : array_like
        Shifted energies whose two lowest levels form an isolated doublet.
    betas : array_like, optional
        Defaults to :func:`default_beta_grid` extended to ``1e3 N / Delta``
        so the whole crossover is covered.
    """
    e = _as_spectrum(spectrum)
    n = e.size
    gap = float(e[1] - e[0])
    if betas is None:
        top = 1e3 * n / max(gap, 1e-300) if gap > 0 else 1e3 * n
        betas = np.expm1(np.linspace(np.log1p(1e-6), np.log1p(top), 800))
    curve = ensemble_curve(e, betas, anti_degeneracy=None, track_first=True)
    e_c1 = (n - 2) / math.fsum(1.0 / e[2:])
    e_c0 = (n - 1) / math.fsum(1.0 / e[1:]) if gap > 0 else 0.0
    return NearDegeneracyCurve(curve, e_c1, e_c0, gap, _n_sites_of(n))
