"""
Critical-energy estimators.

``E_c- = N_bulk / sum_bulk 1/E_alpha`` bounds the bulk energy from below;
``E_c+`` is the same quantity for the reflected operator ``E_max - H``.
Three routes are provided:

* the exact spectral sum (full spectrum needed);
* a stochastic trace of the inverse deflated operator, with Gaussian probe
  vectors and conjugate-gradient solves (matrix-vector products only);
* the free-fermion quadrature for the open Ising chain
  (:mod:`eigencond.freefermion`).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import _kernels
from .freefermion import resolvent_sums
from .models import gaussian_ensemble_tridiagonal
from .statespace import degeneracy_tolerance, group_extremal

__all__ = [
    "METHODS",
    "DivergentSumError",
    "SolverError",
    "NotPositiveDefiniteError",
    "CriticalEnergyReport",
    "TraceEstimate",
    "exact_critical_energy",
    "free_fermion_report",
    "moment_expansion_report",
    "conjugate_gradient",
    "stochastic_inverse_trace",
    "stochastic_critical_energy",
    "EnsembleStats",
    "tridiagonal_bulk_inverse_sums",
    "critical_energy_ensemble_stats",
]

METHODS = ("exact-sum", "stochastic-trace", "free-fermion",
           "moment-expansion")


class DivergentSumError(ArithmeticError):
    """A bulk eigenvalue is zero, so ``sum 1/E`` diverges."""


class SolverError(ArithmeticError):
    """Conjugate gradient did not converge within its iteration cap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotPositiveDefiniteError(ArithmeticError):
    """The deflated operator showed a non-positive curvature direction."""


@dataclass
class CriticalEnergyReport:
    """Critical energy densities from one method.

    ``stderr`` (energy density units, for ``eps_c_minus`` and
    ``eps_c_plus`` respectively) is only set by the stochastic method.
    """

    method: str
    eps_c_minus: float
    eps_c_plus: float | None = None
    stderr: tuple | None = None
    n_probes: int | None = None
    model: dict = field(default_factory=dict)
    n_sites: int = 1
    solver_tol: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if (self.stderr is not None) != (self.method == "stochastic-trace"):
            raise ValueError("stderr is reported by the stochastic method "
                             "only")

    def to_json(self):
        out = asdict(self)
        out["V"] = out.pop("n_sites")
        out["m"] = out.pop("n_probes")
        out["stderr"] = list(self.stderr) if self.stderr is not None \
            else None
        return out


def _bulk_inverse_sum(e, degeneracy):
    bulk = e[degeneracy:]
    if np.any(bulk <= 0.0):
        raise DivergentSumError("zero bulk eigenvalue")
    return math.fsum(1.0 / bulk)


def exact_critical_energy(spectrum, ground_degeneracy=None,
                          anti_degeneracy=None, *, n_sites=None, model=None):
    """Critical energies from the full spectrum.

    Parameters
    ----------
    spectrum : array_like
        Eigenvalues (shifted or not; the minimum is subtracted).
    ground_degeneracy, anti_degeneracy : int, optional
        Sizes of the extremal spaces, which are excluded wholesale.  Grouped
        by tolerance when omitted.
    n_sites : int, optional
        ``V`` for conversion to densities; inferred from ``N = 2**V``.

    Returns
    -------
    CriticalEnergyReport
        ``eps_c_minus`` and ``eps_c_plus`` in shifted energy-density units.
    """
    e = np.sort(np.asarray(spectrum, dtype=float))
    e = e - e[0]
    tol = degeneracy_tolerance(float(e[-1]) or 1.0)
    if ground_degeneracy is None:
        ground_degeneracy = group_extremal(e, tol)[0].size
    if anti_degeneracy is None:
        anti_degeneracy = group_extremal(e, tol, top=True)[0].size
    if n_sites is None:
        n_sites = max(int(round(math.log2(e.size))), 1)
    n = e.size
    e_c_minus = (n - ground_degeneracy) / _bulk_inverse_sum(
        e, ground_degeneracy)
    flipped = (e[-1] - e)[::-1]
    e_c_plus = e[-1] - (n - anti_degeneracy) / _bulk_inverse_sum(
        flipped, anti_degeneracy)
    return CriticalEnergyReport("exact-sum", e_c_minus / n_sites,
                                e_c_plus / n_sites, None, None,
                                dict(model or {}), n_sites)


def free_fermion_report(spectrum, *, model=None):
    """Critical energies of the open Ising chain by quadrature.

    The chain's many-body spectrum is symmetric under ``E -> E_max - E``, so
    ``E_c+ = E_max - E_c-``.
    """
    v = spectrum.n_sites
    e_c = resolvent_sums(spectrum).e_c
    return CriticalEnergyReport("free-fermion", e_c / v,
                                (spectrum.e_max - e_c) / v, None, None,
                                dict(model or {}), v)


def moment_expansion_report(moments, anti_ground_energy, *, model=None):
    """Critical energies from the leading moment expansion."""
    from .ensemble import critical_energy_moment_expansion
    minus, plus = critical_energy_moment_expansion(moments,
                                                   anti_ground_energy)
    return CriticalEnergyReport("moment-expansion", minus, plus, None, None,
                                dict(model or {}), moments.n_sites)


# -- stochastic trace ------------------------------------------------------

def conjugate_gradient(matvec, rhs, *, tol=1e-8, maxiter=None):
    """Batched conjugate gradient for a symmetric positive-definite operator.

    Solves ``A x_j = b_j`` for every column of ``rhs`` simultaneously; each
    column has its own step lengths and stops once
    ``||b_j - A x_j|| <= tol ||b_j||``.

    Parameters
    ----------
    matvec : callable
        Applies ``A`` to an ``(N, k)`` array.
    rhs : ndarray, shape (N, k)
    tol : float
        Relative residual target.
    maxiter : int, optional
        Defaults to ``50 sqrt(N)``.

    Returns
    -------
    x : ndarray, shape (N, k)
    iterations : int

    Raises
    ------
    NotPositiveDefiniteError
        If ``p^T A p <= 0`` for a search direction.
    SolverError
        If some column has not converged after ``maxiter`` iterations.
    """
    b = np.asarray(rhs)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    n, k = b.shape
    if maxiter is None:
        maxiter = int(50 * math.sqrt(n)) + 1
    fused = _kernels.HAVE_NUMBA and not np.iscomplexobj(b)
    if fused:
        b = np.ascontiguousarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    tmp = np.empty_like(b)
    rr = _coldot(r, r)
    target = (tol ** 2) * _coldot(b, b)
    active = rr > target
    it = 0
    while np.any(active):
        if it >= maxiter:
            rel = np.sqrt(rr[active] / np.maximum(target[active], 1e-300))
            worst = float(np.max(rel)) * tol
            raise SolverError(f"CG stalled after {it} iterations, relative "
                              f"residual {worst:.3e}", residual=worst)
        ap = matvec(p)
        fused_step = fused and not np.iscomplexobj(ap)
        if fused_step:
            ap = np.ascontiguousarray(ap)
            curv = _kernels.column_dots(p, ap)
        else:
            curv = _coldot(p, ap)
        if np.any(curv[active] <= 0.0):
            raise NotPositiveDefiniteError(
                f"non-positive curvature {curv[active].min():.3e} at "
                f"iteration {it}")
        # Converged columns keep their solution: zero step length.
        alpha = np.where(active, rr / np.where(active, curv, 1.0), 0.0)
        if fused_step:
            rr_new = _kernels.cg_update(x, r, p, ap, alpha)
        else:
            np.multiply(p, alpha, out=tmp)
            x += tmp
            np.multiply(ap, alpha, out=tmp)
            r -= tmp
            rr_new = _coldot(r, r)
        beta = np.where(active, rr_new / np.where(active, rr, 1.0), 0.0)
        if fused_step:
            _kernels.cg_direction(p, r, beta)
        else:
            p *= beta
            p += r
        rr = np.where(active, rr_new, rr)
        active &= rr_new > target
        it += 1
    return (x[:, 0] if squeeze else x), it


def _coldot(a, b):
    """Column-wise ``Re <a_j | b_j>``."""
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        return np.real(np.einsum("ij,ij->j", a.conj(), b))
    return np.einsum("ij,ij->j", a, b)


@dataclass(frozen=True)
class TraceEstimate:
    """Per-probe samples of ``v^T A^+ v`` and their summary."""

    samples: np.ndarray
    exact_part: float = 0.0

    @property
    def mean(self):
        return self.exact_part + float(np.mean(self.samples))

    @property
    def stderr(self):
        m = self.samples.size
        if m < 2:
            return math.inf
        return float(np.std(self.samples, ddof=1) / math.sqrt(m))


def _deflation(op, space, n_extra):
    """Columns to project out: the extremal space plus ``n_extra`` lowest
    bulk eigenvectors (returned with their eigenvalues)."""
    basis = np.asarray(space.basis)
    if n_extra <= 0:
        return basis, np.zeros(0)
    mat = op.to_sparse()
    k = space.degeneracy + n_extra
    if op.dim <= 256:
        evals, vecs = np.linalg.eigh(mat.toarray())
        evals, vecs = evals[:k], vecs[:, :k]
    else:
        evals, vecs = spla.eigsh(mat, k=k, which="SA", tol=0.0)
        order = np.argsort(evals)
        evals, vecs = evals[order], vecs[:, order]
    extra_vecs = vecs[:, space.degeneracy:]
    extra_vals = evals[space.degeneracy:]
    # Make the extra block exactly orthogonal to the extremal space.
    extra_vecs = extra_vecs - basis @ (basis.conj().T @ extra_vecs)
    full, _ = np.linalg.qr(np.hstack([basis, extra_vecs]))
    return full, extra_vals


def stochastic_inverse_trace(op, space, n_probes, rng, *, solver_tol=1e-8,
                             probe="gaussian", batch=64, n_exact=0):
    """Girard-Hutchinson estimate of ``tr (P_perp H P_perp)^+``.

    Parameters
    ----------
    op : Hamiltonian
        Positive semidefinite (after shifting) with kernel ``space``.
    space : GroundSpace
        Kernel of ``op`` to deflate.
    n_probes : int
    rng : numpy.random.Generator
    solver_tol : float
        CG relative residual target.
    probe : {"gaussian", "rademacher"}
        Real probe distribution in the operator's own coordinates.
    batch : int
        Number of probes solved together.
    n_exact : int
        Additionally deflate this many lowest bulk eigenpairs and add their
        ``1/E`` contributions exactly (variance reduction for tiny gaps).

    Returns
    -------
    TraceEstimate
    """
    if n_probes < 1:
        raise ValueError("need at least one probe")
    basis, extra_vals = _deflation(op, space, n_exact)
    if op.is_real and np.iscomplexobj(basis) and \
            np.max(np.abs(basis.imag)) < 1e-12:
        basis = np.ascontiguousarray(basis.real)
    if np.any(extra_vals <= 0.0):
        raise NotPositiveDefiniteError("deflated eigenvalue is not positive")
    exact_part = math.fsum(1.0 / extra_vals)
    proj = np.ascontiguousarray(basis.conj().T)
    # The shifted matrix with the deflated columns projected out of its
    # output.  Iterates stay in the complement because the right-hand sides
    # do, so one projection per product is enough.
    mat = op.to_sparse() if op.representation in ("sparse", "dense") \
        else None

    def project(x):
        return x - basis @ (proj @ x)

    def matvec(x):
        y = mat @ x if mat is not None else op.matvec(x)
        y -= basis @ (proj @ y)
        return y

    samples = []
    done = 0
    while done < n_probes:
        k = min(batch, n_probes - done)
        if probe == "gaussian":
            v = rng.standard_normal((op.dim, k))
        elif probe == "rademacher":
            v = rng.choice([-1.0, 1.0], size=(op.dim, k))
        else:
            raise ValueError(f"unknown probe distribution {probe!r}")
        v_perp = project(v)
        x, _ = conjugate_gradient(matvec, v_perp, tol=solver_tol)
        samples.append(np.real(np.sum(v_perp.conj() * x, axis=0)))
        done += k
    return TraceEstimate(np.concatenate(samples), exact_part)


def _bootstrap_ec(samples, exact_part, n_bulk, rng, n_boot):
    m = samples.size
    idx = rng.integers(0, m, size=(n_boot, m))
    means = exact_part + samples[idx].mean(axis=1)
    return float(np.std(n_bulk / means, ddof=1))


def stochastic_critical_energy(op, n_probes, *, solver_tol=1e-8, rng=None,
                               seed=None, probe="gaussian", batch=64,
                               n_exact=0, n_bootstrap=1000, both=True,
                               model=None):
    """Critical energies from stochastic traces of deflated inverses.

    ``E_c- = N_bulk / tr (P H P)^+`` with ``P`` projecting out the ground
    space; ``E_c+`` uses the reflected operator ``E_max - H`` and its
    kernel, the anti-ground space.  Standard errors are bootstrap standard
    deviations of ``E_c`` over resampled probes.

    Parameters
    ----------
    op : Hamiltonian
        Sparse (or dense) operator with resolved extremal spaces.
    n_probes : int
    solver_tol : float
    rng : numpy.random.Generator, optional
    seed : int, optional
        Used when ``rng`` is not given.
    probe : {"gaussian", "rademacher"}
    batch : int
    n_exact : int
        Lowest bulk eigenpairs deflated exactly on each side.
    n_bootstrap : int
    both : bool
        Also estimate ``eps_c_plus``.

    Returns
    -------
    CriticalEnergyReport
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    v = op.n_sites
    est = stochastic_inverse_trace(op, op.ground, n_probes, rng,
                                   solver_tol=solver_tol, probe=probe,
                                   batch=batch, n_exact=n_exact)
    n_bulk = op.dim - op.ground.degeneracy
    e_minus = n_bulk / est.mean
    err_minus = _bootstrap_ec(est.samples, est.exact_part, n_bulk, rng,
                              n_bootstrap)
    eps_plus = err_plus = None
    if both:
        flipped = op.reflected()
        est_p = stochastic_inverse_trace(flipped, flipped.ground, n_probes,
                                         rng, solver_tol=solver_tol,
                                         probe=probe, batch=batch,
                                         n_exact=n_exact)
        n_bulk_p = op.dim - flipped.ground.degeneracy
        e_plus = op.anti_ground.energy - n_bulk_p / est_p.mean
        err_plus = _bootstrap_ec(est_p.samples, est_p.exact_part, n_bulk_p,
                                 rng, n_bootstrap) / v
        eps_plus = e_plus / v
    return CriticalEnergyReport(
        "stochastic-trace", e_minus / v, eps_plus,
        (err_minus / v, err_plus), n_probes, dict(model or op.meta), v,
        solver_tol, seed)


# -- random-matrix ensemble statistics -----------------------------------

def _pivot_log_derivative(diag, off, x):
    """``sum_{alpha > 0} 1/(E_alpha - x)`` for ``x`` the lowest eigenvalue.

    With ``p(t) = det(T - t)`` and ``x`` a simple root,
    ``sum_{alpha>0} 1/(E_alpha - x) = -p''(x) / (2 p'(x))``.  The LDL^T
    pivots ``d_k`` of ``T - t`` and their first two derivatives give this
    ratio without forming ``p``: only the last pivot vanishes at ``x``.
    The recurrence runs from the end of the matrix whose leading block does
    not carry the extremal eigenvector, so the other pivots stay away from
    zero.
    """
    a = diag[::-1]
    b2 = (off * off)[::-1]
    n = a.size
    d = a[0] - x
    d1 = -1.0
    d2 = 0.0
    log_deriv = d1 / d
    for k in range(1, n - 1):
        q = b2[k - 1] / d
        nd = a[k] - x - q
        nd1 = -1.0 + q * d1 / d
        nd2 = q * (d2 / d - 2.0 * d1 * d1 / (d * d))
        d, d1, d2 = nd, nd1, nd2
        log_deriv += d1 / d
    q = b2[n - 2] / d
    last1 = -1.0 + q * d1 / d
    last2 = q * (d2 / d - 2.0 * d1 * d1 / (d * d))
    return -(log_deriv + last2 / (2.0 * last1))


def tridiagonal_bulk_inverse_sums(diag, off):
    """Extremal eigenvalues and bulk inverse sums of a tridiagonal matrix.

    Exact (to rounding) in ``O(N)`` operations: the extremal eigenvalues
    come from bisection and the sums from a pivot recurrence, so the full
    spectrum is never computed.  Intended for the beta-ensemble models,
    whose extremal eigenvectors are concentrated at the start of the
    matrix; a non-finite or non-positive result falls back to a full
    eigenvalue computation.

    Returns
    -------
    e_min, e_max : float
    sum_low : float
        ``sum_{alpha > 0} 1/(E_alpha - e_min)``.
    sum_high : float
        ``sum_{alpha < N-1} 1/(e_max - E_alpha)``.
    """
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    n = diag.size
    e_min = float(sla.eigvalsh_tridiagonal(diag, off, select="i",
                                           select_range=(0, 0))[0])
    e_max = float(sla.eigvalsh_tridiagonal(diag, off, select="i",
                                           select_range=(n - 1, n - 1))[0])
    with np.errstate(all="ignore"):
        low = _pivot_log_derivative(diag, off, e_min)
        high = _pivot_log_derivative(-diag, off, -e_max)
    if not (math.isfinite(low) and math.isfinite(high) and low > 0
            and high > 0):
        evals = sla.eigvalsh_tridiagonal(diag, off, lapack_driver="sterf")
        low = math.fsum(1.0 / (evals[1:] - evals[0]))
        high = math.fsum(1.0 / (evals[-1] - evals[:-1]))
    return e_min, e_max, low, high


@dataclass(frozen=True)
class EnsembleStats:
    """Critical-energy statistics of a random family.

    Attributes
    ----------
    sizes : ndarray
        Site counts ``V``.
    mean, std : ndarray
        Mean and standard deviation of ``eps_c-`` across seeds, per size.
    eps_c : dict
        ``{V: ndarray}`` of per-seed ``eps_c-`` (shifted units).
    eps_gs : dict
        ``{V: ndarray}`` of per-seed unshifted ground energy densities.
    """

    sizes: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    eps_c: dict
    eps_gs: dict

    def slope(self):
        """Log-log slope of ``std`` against ``N = 2**V``."""
        n = 2.0 ** self.sizes
        return float(np.polyfit(np.log(n), np.log(self.std), 1)[0])


def critical_energy_ensemble_stats(family, seeds, sizes):
    """Exact ``eps_c-`` for many random-matrix samples.

    Sample ``seed`` is the same matrix that
    :func:`~eigencond.models.build_gaussian_ensemble` builds for that seed;
    only the extremal eigenvalues and bulk inverse sums are computed
    (:func:`tridiagonal_bulk_inverse_sums`).  Give distinct seeds per size if the
    sizes should be statistically independent.

    Parameters
    ----------
    family : {"GOE", "GUE"}
    seeds : sequence of int, or mapping ``{V: sequence of int}``
    sizes : sequence of int
        Site counts ``V``.

    Returns
    -------
    EnsembleStats
    """
    beta = {"GOE": 1, "GUE": 2}[family]
    sizes = np.asarray(sorted(sizes))
    mean, std, eps_c, eps_gs = [], [], {}, {}
    for v in sizes:
        v = int(v)
        these = seeds[v] if isinstance(seeds, dict) else seeds
        ec = np.empty(len(these))
        gs = np.empty(len(these))
        for j, seed in enumerate(these):
            rng = np.random.default_rng(seed)
            diag, off = gaussian_ensemble_tridiagonal(v, beta, rng)
            e_min, _, low, _ = tridiagonal_bulk_inverse_sums(diag, off)
            gs[j] = e_min / v
            ec[j] = (diag.size - 1) / low / v
        eps_c[v] = ec
        eps_gs[v] = gs
        mean.append(float(np.mean(ec)))
        std.append(float(np.std(ec, ddof=1)))
    return EnsembleStats(sizes, np.array(mean), np.array(std), eps_c, eps_gs)
