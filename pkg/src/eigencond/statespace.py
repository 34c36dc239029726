"""
State vectors, Hermitian operators and spectral diagnostics.

States are plain complex ``numpy`` vectors of length ``N = 2**V``.  Operators
are wrapped in :class:`Hamiltonian`, which carries one of four storage
layouts together with the constant shift that places the ground energy at
zero and the resolved (anti-)ground spaces.

Sampling is cheapest in the energy eigenbasis, so conversion between the
computational and the eigenbasis layouts is explicit
(:meth:`Hamiltonian.diagonalize`) rather than implicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "HERMITIAN_TOL",
    "NORM_TOL",
    "GRADIENT_TOL",
    "InvalidDimensionError",
    "NonHermitianError",
    "DegenerateGradientError",
    "GroundSpace",
    "Hamiltonian",
    "SpectralMoments",
    "haar_random_state",
    "energy_expectation",
    "energy_gradient_tangent",
    "spectral_moments",
    "pauli_s2",
    "degeneracy_tolerance",
    "group_extremal",
]

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12
# Relative size of (H - E)psi below which the isosurface normal is
# numerically undefined.
GRADIENT_TOL = 1e-14
_IMAG_TOL = 1e-10

REPRESENTATIONS = ("sparse", "dense", "diagonal", "tridiagonal")


class InvalidDimensionError(ValueError):
    """Raised for Hilbert-space dimensions that cannot host a state."""


class NonHermitianError(ValueError):
    """Raised when an operator or an expectation value is not Hermitian."""


class DegenerateGradientError(ArithmeticError):
    """The state is (numerically) an eigenstate, so it has no energy gradient.

    Callers that move along the constraint surface should draw a new
    direction when they see this.
    """


@dataclass(frozen=True)
class GroundSpace:
    """An extremal eigenspace of an operator.

    Attributes
    ----------
    energy : float
        Eigenvalue of the space, in shifted units.
    basis : ndarray, shape (N, d)
        Orthonormal columns spanning the space, expressed in the coordinates
        of the operator that owns it.
    gap : float
        Distance to the next distinct eigenvalue (``inf`` if unknown).
    indices : ndarray of int or None
        For eigenbasis operators, the positions of the space inside the
        spectrum.  Lets weights be read off without a matrix product.
    """

    energy: float
    basis: np.ndarray
    gap: float = np.inf
    indices: np.ndarray | None = None

    @property
    def degeneracy(self) -> int:
        return int(self.basis.shape[1])

    def weight(self, psi):
        """Total probability ``<psi|P|psi>`` on the space.

        ``psi`` may be a single vector or a stack of column vectors.
        """
        psi = np.asarray(psi)
        if self.indices is not None:
            amp = psi[self.indices]
            return np.sum(np.abs(amp) ** 2, axis=0)
        overlaps = self.basis.conj().T @ psi
        return np.sum(np.abs(overlaps) ** 2, axis=0)

    def project_out(self, x):
        """Return ``(1 - P) x`` for a vector or a stack of columns."""
        x = np.asarray(x)
        if self.indices is not None:
            out = np.array(x, copy=True)
            out[self.indices] = 0.0
            return out
        return x - self.basis @ (self.basis.conj().T @ x)


def degeneracy_tolerance(norm):
    """Grouping tolerance for nearly degenerate extremal eigenvalues."""
    return max(1e-9 * norm, 1e-12)


def group_extremal(evals, tol, *, top=False):
    """Indices of eigenvalues within ``tol`` of the minimum (or maximum).

    Parameters
    ----------
    evals : array_like
        Eigenvalues in any order.
    tol : float
        Absolute grouping tolerance.
    top : bool
        Group around the maximum instead of the minimum.

    Returns
    -------
    idx : ndarray of int
        Positions of the grouped eigenvalues, sorted by position.
    gap : float
        Distance from the extremal value to the nearest eigenvalue outside
        the group (``inf`` if every eigenvalue is grouped).
    """
    evals = np.asarray(evals, dtype=float)
    if top:
        dist = evals.max() - evals
    else:
        dist = evals - evals.min()
    inside = dist <= tol
    idx = np.flatnonzero(inside)
    rest = dist[~inside]
    gap = float(rest.min()) if rest.size else np.inf
    return idx, gap


class Hamiltonian:
    """Immutable Hermitian operator with an explicit storage layout.

    Parameters
    ----------
    data
        Layout-dependent payload:

        * ``"sparse"`` -- a ``scipy.sparse`` matrix in the computational basis;
        * ``"dense"`` -- a 2-D ``ndarray``;
        * ``"diagonal"`` -- the 1-D array of eigenvalues (eigenbasis layout);
        * ``"tridiagonal"`` -- a pair ``(diag, offdiag)`` of real arrays.
    representation : str
        One of the layouts above.
    n_sites : int
        Number of sites ``V``.  The dimension must equal ``2**V`` unless
        ``check_dimension`` is false (useful for toy spectra).
    shift : float
        Constant added to ``data`` so that the shifted ground energy is 0.
        ``None`` means "compute it" (requires the ground energy).
    ground, anti_ground : GroundSpace, optional
        Extremal eigenspaces in shifted units.
    eigenvectors : ndarray, optional
        For the diagonal layout, columns mapping eigenbasis coordinates back
        to the computational basis.
    pauli_terms : list of (float, str), optional
        Pauli-string decomposition ``sum_a h_a P_a`` (identity excluded), used
        for moment cross-checks.
    meta : dict, optional
        Free-form description of where the operator came from.
    """

    def __init__(self, data, representation, n_sites, *, shift=0.0,
                 ground=None, anti_ground=None, eigenvectors=None,
                 pauli_terms=None, meta=None, check_dimension=True,
                 check_hermitian=True):
        if representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {representation!r}")
        self.representation = representation
        self.n_sites = int(n_sites)
        if representation == "tridiagonal":
            diag, off = data
            diag = np.asarray(diag, dtype=float)
            off = np.asarray(off, dtype=float)
            if off.shape != (diag.size - 1,):
                raise InvalidDimensionError(
                    "off-diagonal must have one element fewer than diagonal")
            self._data = (diag, off)
            dim = diag.size
        elif representation == "diagonal":
            evals = np.asarray(data, dtype=float)
            if evals.ndim != 1:
                raise InvalidDimensionError("eigenvalues must be a 1-D array")
            self._data = evals
            dim = evals.size
        elif representation == "sparse":
            mat = sp.csr_matrix(data)
            self._data = mat
            dim = mat.shape[0]
            if mat.shape[0] != mat.shape[1]:
                raise InvalidDimensionError("operator must be square")
        else:
            mat = np.asarray(data)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise InvalidDimensionError("operator must be square")
            self._data = mat
            dim = mat.shape[0]
        self.dim = int(dim)
        if check_dimension and self.dim != 2 ** self.n_sites:
            raise InvalidDimensionError(
                f"dimension {self.dim} is not 2**{self.n_sites}")
        if check_hermitian and representation in ("sparse", "dense"):
            self._check_hermitian()
        self.shift = float(shift)
        self.ground = ground
        self.anti_ground = anti_ground
        self.eigenvectors = eigenvectors
        self.pauli_terms = list(pauli_terms) if pauli_terms is not None else None
        self.meta = dict(meta or {})

    def _check_hermitian(self):
        if self.representation == "sparse":
            diff = self._data - self._data.conj().T
            err = abs(diff).max() if diff.nnz else 0.0
        else:
            err = np.max(np.abs(self._data - self._data.conj().T))
        if err > HERMITIAN_TOL:
            raise NonHermitianError(
                f"max |H - H^dagger| = {err:.3e} exceeds {HERMITIAN_TOL:g}")

    # -- basic algebra -------------------------------------------------

    @property
    def data(self):
        """Raw (unshifted) payload of the layout."""
        return self._data

    @property
    def is_real(self):
        if self.representation in ("diagonal", "tridiagonal"):
            return True
        return not np.iscomplexobj(self._data)

    def matvec(self, x):
        """Apply the shifted operator to a vector or to a stack of columns."""
        x = np.asarray(x)
        rep = self.representation
        if rep == "diagonal":
            d = self._data if x.ndim == 1 else self._data[:, None]
            y = d * x
        elif rep == "tridiagonal":
            diag, off = self._data
            if x.ndim == 1:
                y = diag * x
                y[:-1] += off * x[1:]
                y[1:] += off * x[:-1]
            else:
                y = diag[:, None] * x
                y[:-1] += off[:, None] * x[1:]
                y[1:] += off[:, None] * x[:-1]
        else:
            y = self._data @ x
        return y + self.shift * x

    def to_dense(self):
        """Dense matrix of the shifted operator in its own coordinates."""
        rep = self.representation
        if rep == "diagonal":
            mat = np.diag(self._data)
        elif rep == "tridiagonal":
            diag, off = self._data
            mat = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        elif rep == "sparse":
            mat = self._data.toarray()
        else:
            mat = np.array(self._data, copy=True)
        return mat + self.shift * np.eye(self.dim)

    def to_sparse(self):
        """Sparse matrix of the shifted operator in its own coordinates."""
        rep = self.representation
        if rep == "diagonal":
            mat = sp.diags(self._data)
        elif rep == "tridiagonal":
            diag, off = self._data
            mat = sp.diags([off, diag, off], [-1, 0, 1])
        elif rep == "sparse":
            mat = self._data
        else:
            mat = sp.csr_matrix(self._data)
        return sp.csr_matrix(mat + self.shift * sp.identity(self.dim))

    @property
    def spectrum(self):
        """Shifted eigenvalues (eigenbasis layout only), ascending order not
        guaranteed."""
        if self.representation != "diagonal":
            raise ValueError("spectrum requires the diagonal representation")
        return self._data + self.shift

    def eigenvalues(self):
        """Sorted shifted eigenvalues, computing them if necessary."""
        rep = self.representation
        if rep == "diagonal":
            return np.sort(self.spectrum)
        if rep == "tridiagonal":
            diag, off = self._data
            evals = sla.eigvalsh_tridiagonal(diag, off, lapack_driver="sterf")
        elif rep == "sparse":
            evals = np.linalg.eigvalsh(self._data.toarray())
        else:
            evals = np.linalg.eigvalsh(self._data)
        return np.sort(evals) + self.shift

    @property
    def norm(self):
        """Spectral norm of the shifted operator (or a cheap upper bound)."""
        if self.anti_ground is not None and self.ground is not None:
            return max(abs(self.anti_ground.energy), abs(self.ground.energy))
        if self.representation == "diagonal":
            return float(np.max(np.abs(self.spectrum)))
        # Frobenius norm bounds the spectral norm from above.
        if self.representation == "tridiagonal":
            diag, off = self._data
            fro2 = np.sum((diag + self.shift) ** 2) + 2 * np.sum(off ** 2)
        else:
            mat = self.to_sparse()
            fro2 = float(np.sum(np.abs(mat.data) ** 2))
        return float(np.sqrt(fro2))

    @property
    def n_bulk(self):
        """Number of states outside the ground space."""
        return self.dim - self.ground.degeneracy

    @property
    def e_max(self):
        """Shifted energy of the anti-ground space."""
        return self.anti_ground.energy

    # -- conversions ---------------------------------------------------

    def with_shift(self, shift):
        return _copy_with(self, shift=float(shift))

    def diagonalize(self, *, exact_degeneracy_only=False):
        """Return the same operator in its eigenbasis.

        The eigenvectors are kept so that states can be mapped back to the
        computational basis.  Ground and anti-ground spaces are re-resolved
        from the full spectrum and stored as index sets.
        """
        if self.representation == "diagonal":
            return self
        if self.representation == "tridiagonal":
            diag, off = self._data
            evals, vecs = sla.eigh_tridiagonal(diag, off)
        else:
            mat = self._data.toarray() if self.representation == "sparse" \
                else self._data
            evals, vecs = np.linalg.eigh(mat)
        out = Hamiltonian(evals, "diagonal", self.n_sites, shift=self.shift,
                          eigenvectors=vecs, pauli_terms=self.pauli_terms,
                          meta=self.meta, check_dimension=False)
        return out.resolve_ground_spaces(
            exact_degeneracy_only=exact_degeneracy_only, reshift=True)

    def resolve_ground_spaces(self, *, exact_degeneracy_only=False,
                              reshift=True, n_extremal=8):
        """Find ground and anti-ground spaces and (optionally) re-shift.

        For the eigenbasis layout the full spectrum is used.  Other layouts use
        dense diagonalization for ``N <= 256`` and Lanczos otherwise; the number
        of extremal pairs requested grows until the group is bracketed.

        Parameters
        ----------
        exact_degeneracy_only : bool
            Group only eigenvalues equal up to roundoff instead of using the
            default ``max(1e-9 ||H||, 1e-12)`` window.
        reshift : bool
            Choose the shift so that the ground energy is exactly zero.
        """
        if self.representation == "diagonal":
            raw = self._data
            scale = float(np.max(np.abs(raw - raw.mean()))) or 1.0
            tol = _tolerance(scale, exact_degeneracy_only)
            lo, gap_lo = group_extremal(raw, tol)
            hi, gap_hi = group_extremal(raw, tol, top=True)
            e_lo = float(np.min(raw))
            e_hi = float(np.max(raw))
            shift = -e_lo if reshift else self.shift
            eye_lo = _unit_columns(self.dim, lo)
            eye_hi = _unit_columns(self.dim, hi)
            ground = GroundSpace(e_lo + shift, eye_lo, gap_lo, indices=lo)
            anti = GroundSpace(e_hi + shift, eye_hi, gap_hi, indices=hi)
            return _copy_with(self, shift=shift, ground=ground,
                              anti_ground=anti)

        lo_vals, lo_vecs = _extremal_pairs(self, "SA", n_extremal)
        hi_vals, hi_vecs = _extremal_pairs(self, "LA", n_extremal)
        scale = max(abs(hi_vals[-1] - lo_vals[0]), 1e-300)
        tol = _tolerance(scale, exact_degeneracy_only)
        ground = _space_from_pairs(lo_vals, lo_vecs, tol, top=False)
        anti = _space_from_pairs(hi_vals, hi_vecs, tol, top=True)
        shift = self.shift - ground.energy if reshift else self.shift
        delta = shift - self.shift
        ground = replace(ground, energy=ground.energy + delta)
        anti = replace(anti, energy=anti.energy + delta)
        return _copy_with(self, shift=shift, ground=ground, anti_ground=anti)

    def reflected(self):
        """The operator ``E_max - H``, re-shifted so its ground energy is 0.

        Ground and anti-ground spaces swap roles.  The storage layout and
        coordinates are unchanged, so states can be shared between the two.
        """
        if self.anti_ground is None or self.ground is None:
            raise ValueError("reflection needs resolved extremal spaces")
        e_max = self.anti_ground.energy
        if self.representation == "tridiagonal":
            diag, off = self._data
            data = (-diag, -off)
        else:
            data = -self._data
        ground = replace(self.anti_ground, energy=0.0)
        anti = replace(self.ground, energy=e_max - self.ground.energy)
        pauli = None
        if self.pauli_terms is not None:
            pauli = [(-c, s) for c, s in self.pauli_terms]
        meta = dict(self.meta, reflected=not self.meta.get("reflected", False))
        return Hamiltonian(data, self.representation, self.n_sites,
                           shift=e_max - self.shift, ground=ground,
                           anti_ground=anti, eigenvectors=self.eigenvectors,
                           pauli_terms=pauli, meta=meta,
                           check_dimension=False, check_hermitian=False)

    def __repr__(self):
        name = self.meta.get("family", "operator")
        return (f"Hamiltonian({name}, V={self.n_sites}, N={self.dim}, "
                f"{self.representation}, shift={self.shift:.6g})")


def _tolerance(scale, exact_only):
    if exact_only:
        return 64 * np.finfo(float).eps * max(scale, 1.0)
    return degeneracy_tolerance(scale)


def _unit_columns(n, idx):
    cols = np.zeros((n, len(idx)))
    cols[idx, np.arange(len(idx))] = 1.0
    return cols


def _copy_with(op, **changes):
    data = op._data
    new = Hamiltonian.__new__(Hamiltonian)
    new.__dict__.update(op.__dict__)
    new._data = data
    for key, value in changes.items():
        setattr(new, key, value)
    return new


def _extremal_pairs(op, which, k0):
    """Eigenpairs at one end of the spectrum, with enough of them to bracket
    the extremal group (ascending for "SA", descending for "LA")."""
    n = op.dim
    if n <= 256:
        evals, vecs = np.linalg.eigh(op.to_dense() - op.shift * np.eye(n))
        if which == "LA":
            evals, vecs = evals[::-1], vecs[:, ::-1]
        return evals + op.shift, vecs
    mat = op.to_sparse()
    k = min(k0, n - 2)
    while True:
        evals, vecs = spla.eigsh(mat, k=k, which=which, tol=0.0)
        order = np.argsort(evals)
        if which == "LA":
            order = order[::-1]
        evals, vecs = evals[order], vecs[:, order]
        span = abs(evals[-1] - evals[0])
        scale = max(abs(evals[0]), span, 1.0)
        if span > degeneracy_tolerance(scale) or k >= n - 2:
            return evals, vecs
        k = min(2 * k, n - 2)


def _space_from_pairs(evals, vecs, tol, *, top):
    dist = np.abs(evals - evals[0])
    inside = dist <= tol
    basis = vecs[:, inside]
    # Re-orthonormalize: Lanczos vectors within a degenerate group can drift.
    basis, _ = np.linalg.qr(basis)
    rest = dist[~inside]
    gap = float(rest.min()) if rest.size else np.inf
    energy = float(np.mean(evals[inside]))
    return GroundSpace(energy, basis, gap)


@dataclass(frozen=True)
class SpectralMoments:
    """Moments of the energy density ``eps = E / V`` over the full spectrum.

    Attributes
    ----------
    eps_inf : float
        Mean energy density (shifted units).
    s2 : float
        Volume-scaled variance ``V * mu_2(eps)``.
    central : dict
        ``{n: mu_n(eps)}`` for ``n = 2 .. n_max``.
    n_sites : int
    s2_pauli : float or None
        ``V^-1 sum_a h_a^2`` when a Pauli decomposition is known.
    """

    eps_inf: float
    s2: float
    central: dict = field(default_factory=dict)
    n_sites: int = 1
    s2_pauli: float | None = None

    @property
    def s(self):
        return float(np.sqrt(self.s2))


def haar_random_state(n, rng):
    """Draw a Haar-random unit vector in ``C^n``.

    Parameters
    ----------
    n : int
        Hilbert-space dimension, at least 2.
    rng : numpy.random.Generator

    Returns
    -------
    ndarray of complex128
    """
    n = int(n)
    if n < 2:
        raise InvalidDimensionError(f"dimension must be at least 2, got {n}")
    psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return psi / np.linalg.norm(psi)


def energy_expectation(op, psi):
    """Real expectation value ``<psi|H|psi>`` of a normalized state."""
    psi = np.asarray(psi)
    if psi.shape != (op.dim,):
        raise InvalidDimensionError(
            f"state of length {psi.shape} does not match dimension {op.dim}")
    if op.representation == "diagonal":
        return float(np.dot(op.spectrum, np.abs(psi) ** 2))
    val = np.vdot(psi, op.matvec(psi))
    scale = max(op.norm, 1.0)
    if abs(val.imag) > _IMAG_TOL * scale:
        raise NonHermitianError(
            f"imaginary expectation value {val.imag:.3e}")
    return float(val.real)


def energy_gradient_tangent(op, psi, energy=None):
    """Unit normal to the energy isosurface through ``psi``.

    The direction ``(H - E)|psi>`` is automatically orthogonal to ``psi``
    and to ``i psi`` under the real inner product ``Re<a|b>``; it is
    re-projected once to remove roundoff and then normalized.

    Raises
    ------
    DegenerateGradientError
        If ``||(H - E) psi|| < 1e-14 ||H||``.
    """
    if energy is None:
        energy = energy_expectation(op, psi)
    n = op.matvec(psi) - energy * psi
    n = n - np.vdot(psi, n) * psi
    size = np.linalg.norm(n)
    if size < GRADIENT_TOL * max(op.norm, 1e-300):
        raise DegenerateGradientError(
            f"gradient norm {size:.3e} below resolution")
    return n / size


def pauli_s2(terms, n_sites):
    """``V^-1 sum_a h_a^2`` for a Pauli-string decomposition."""
    coeffs = np.array([c for c, _ in terms], dtype=float)
    return float(np.sum(coeffs ** 2) / n_sites)


def spectral_moments(op, n_max=4):
    """Central moments of the energy-density spectrum.

    For the eigenbasis layout all moments up to ``n_max`` are computed from
    the spectrum.  Otherwise only ``eps_inf`` and ``s2`` are available and are
    obtained from traces of ``H`` and ``H^2``.  When the operator carries a
    Pauli decomposition, ``s2`` is cross-checked against it.

    Parameters
    ----------
    op : Hamiltonian
    n_max : int
        Highest central moment to report.

    Returns
    -------
    SpectralMoments
    """
    v = op.n_sites
    n = op.dim
    if op.representation == "diagonal":
        eps = op.spectrum / v
        eps_inf = float(np.mean(eps))
        dev = eps - eps_inf
        central = {k: float(np.mean(dev ** k)) for k in range(2, n_max + 1)}
        s2 = v * central[2]
    else:
        mat = op.to_sparse()
        tr1 = float(np.real(mat.diagonal().sum()))
        tr2 = float(np.sum(np.abs(mat.data) ** 2))
        mean_e = tr1 / n
        var_e = tr2 / n - mean_e ** 2
        eps_inf = mean_e / v
        s2 = var_e / v
        central = {2: s2 / v}
    s2_pauli = None
    if op.pauli_terms is not None:
        s2_pauli = pauli_s2(op.pauli_terms, v)
        if not np.isclose(s2, s2_pauli, rtol=1e-8, atol=1e-12):
            raise ValueError(
                f"spectral s2 = {s2!r} disagrees with Pauli s2 = {s2_pauli!r}")
    return SpectralMoments(eps_inf, s2, central, v, s2_pauli)
