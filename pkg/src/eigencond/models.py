"""
Hamiltonian catalog: Ising chains and lattices, the Heisenberg ring and
Gaussian beta-ensembles.

Spin operators are built as sparse Pauli sums in the computational basis.
Site ``j`` is tensor factor ``j`` counted from the left, i.e. bit
``V - 1 - j`` of the basis index, so a Pauli string ``"XZI"`` is
``kron(X, Z, I)``.  Bit value 0 is spin up (``sigma^z = +1``).

Every builder returns a :class:`~eigencond.statespace.Hamiltonian` shifted so
that its ground energy is zero, with ground and anti-ground spaces resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .statespace import GroundSpace, Hamiltonian, InvalidDimensionError

__all__ = [
    "FAMILIES",
    "InvalidLatticeError",
    "ModelSpec",
    "pauli_sum",
    "tfim_terms",
    "build",
    "build_tfim",
    "build_mfim",
    "build_heisenberg",
    "build_gaussian_ensemble",
    "gaussian_ensemble_tridiagonal",
    "heisenberg_ground_basis",
    "total_raising",
    "model_s2",
]

FAMILIES = ("TFIM1D", "TFIM2D", "MFIM1D", "Heisenberg1D", "GOE", "GUE")

_DEFAULT_PARAMS = {
    "TFIM1D": {"J": 1.0, "h_x": None},
    "TFIM2D": {"J": 1.0, "h_x": None, "Lx": None, "Ly": None},
    "MFIM1D": {"J": 1.0, "h_x": 1.4, "h_z": 0.9045},
    "Heisenberg1D": {"J": 1.0},
    "GOE": {},
    "GUE": {},
}

_DEFAULT_BOUNDARY = {
    "TFIM1D": "open",
    "TFIM2D": "open",
    "MFIM1D": "open",
    "Heisenberg1D": "periodic",
    "GOE": "open",
    "GUE": "open",
}


class InvalidLatticeError(ValueError):
    """Raised when a lattice shape is incompatible with the site count."""


@dataclass(frozen=True)
class ModelSpec:
    """Description of one catalog Hamiltonian.

    Attributes
    ----------
    family : str
        One of :data:`FAMILIES`.
    n_sites : int
        Number of sites ``V``; the Hilbert-space dimension is ``2**V``.
    params : dict
        Family parameters.  Ising families use ``J`` (bond coupling, default
        1), ``h_x`` and (mixed field) ``h_z``; the 2-D lattice needs ``Lx`` and
        ``Ly`` with ``Lx * Ly == V``.
    boundary : str or None
        ``"open"`` or ``"periodic"``; ``None`` selects the family default
        (periodic for the Heisenberg ring, open otherwise).
    seed : int or None
        Seed for the random families.
    """

    family: str
    n_sites: int
    params: dict = field(default_factory=dict)
    boundary: str | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; "
                             f"expected one of {', '.join(FAMILIES)}")
        if int(self.n_sites) < 1:
            raise InvalidDimensionError("n_sites must be positive")
        allowed = _DEFAULT_PARAMS[self.family]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ValueError(f"unknown parameter(s) for {self.family}: "
                             f"{', '.join(sorted(unknown))}")
        if self.boundary not in (None, "open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', "
                             f"got {self.boundary!r}")

    @property
    def resolved_boundary(self):
        return self.boundary or _DEFAULT_BOUNDARY[self.family]

    def param(self, name):
        value = self.params.get(name, _DEFAULT_PARAMS[self.family].get(name))
        if value is None:
            raise ValueError(f"{self.family} requires parameter {name!r}")
        return value

    def to_dict(self):
        return {"family": self.family, "V": int(self.n_sites),
                "params": dict(self.params),
                "boundary": self.resolved_boundary, "seed": self.seed}

    @classmethod
    def from_dict(cls, block):
        """Parse a ``{family, V, params, boundary, seed}`` mapping.

        Raises ``KeyError`` naming the first missing required field and
        ``ValueError`` for unknown keys.
        """
        allowed = {"family", "V", "params", "boundary", "seed"}
        unknown = set(block) - allowed
        if unknown:
            raise ValueError(f"unknown model key(s): "
                             f"{', '.join(sorted(unknown))}")
        for key in ("family", "V"):
            if key not in block:
                raise KeyError(key)
        return cls(block["family"], int(block["V"]),
                   dict(block.get("params", {})), block.get("boundary"),
                   block.get("seed"))


# -- Pauli sums --------------------------------------------------------

def pauli_sum(terms, n_sites):
    """Sparse matrix of ``sum_a c_a P_a`` in the computational basis.

    Parameters
    ----------
    terms : iterable of (float, str)
        Coefficients and Pauli strings over ``IXYZ`` of length ``V``.
    n_sites : int

    Returns
    -------
    scipy.sparse.csr_matrix
        Real when no string contains an odd number of ``Y``.
    """
    n = 2 ** n_sites
    idx = np.arange(n, dtype=np.int64)
    rows, cols, vals = [], [], []
    diagonal = np.zeros(n)
    for coef, label in terms:
        if len(label) != n_sites:
            raise ValueError(f"Pauli string {label!r} has wrong length")
        flip = 0
        zmask = 0
        n_y = 0
        for site, ch in enumerate(label):
            bit = 1 << (n_sites - 1 - site)
            if ch == "X":
                flip |= bit
            elif ch == "Y":
                flip |= bit
                zmask |= bit
                n_y += 1
            elif ch == "Z":
                zmask |= bit
            elif ch != "I":
                raise ValueError(f"bad Pauli character {ch!r}")
        parity = _popcount(idx & zmask) & 1
        phase = (1.0 - 2.0 * parity) * (1j ** n_y)
        if n_y % 2 == 0:
            phase = phase.real
        if flip == 0:
            diagonal = diagonal + coef * phase
        else:
            rows.append(idx ^ flip)
            cols.append(idx)
            vals.append(coef * phase)
    mats = [sp.diags(diagonal)]
    if rows:
        data = np.concatenate(vals)
        mats.append(sp.coo_matrix(
            (data, (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)))
    return sp.csr_matrix(sum(mats[1:], mats[0]))


def _popcount(x):
    x = np.asarray(x, dtype=np.uint64)
    count = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        count += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return count


def _string(n_sites, ops):
    chars = ["I"] * n_sites
    for site, ch in ops:
        chars[site] = ch
    return "".join(chars)


def _chain_bonds(n_sites, boundary):
    bonds = [(j, j + 1) for j in range(n_sites - 1)]
    if boundary == "periodic" and n_sites > 2:
        bonds.append((n_sites - 1, 0))
    return bonds


def lattice_bonds(lx, ly, boundary="open"):
    """Nearest-neighbour bonds of an ``Lx x Ly`` square lattice.

    Sites are numbered row-major, ``site = row * Lx + col`` with ``Ly``
    rows of ``Lx`` sites.
    """
    bonds = []
    periodic = boundary == "periodic"
    for row in range(ly):
        for col in range(lx):
            s = row * lx + col
            if col + 1 < lx:
                bonds.append((s, s + 1))
            elif periodic and lx > 2:
                bonds.append((s, row * lx))
            if row + 1 < ly:
                bonds.append((s, s + lx))
            elif periodic and ly > 2:
                bonds.append((s, col))
    return bonds


def tfim_terms(n_sites, bonds, J, h_x, h_z=0.0):
    """Pauli terms of ``J sum_b Z Z + h_x sum_j X + h_z sum_j Z``."""
    terms = []
    if J != 0.0:
        terms += [(J, _string(n_sites, [(a, "Z"), (b, "Z")]))
                  for a, b in bonds]
    if h_x != 0.0:
        terms += [(h_x, _string(n_sites, [(j, "X")])) for j in range(n_sites)]
    if h_z != 0.0:
        terms += [(h_z, _string(n_sites, [(j, "Z")])) for j in range(n_sites)]
    return terms


def _finish(mat, n_sites, terms, meta, *, ground=None,
            exact_degeneracy_only=False):
    op = Hamiltonian(mat, "sparse", n_sites, pauli_terms=terms, meta=meta)
    op = op.resolve_ground_spaces(exact_degeneracy_only=exact_degeneracy_only)
    if ground is not None:
        # Replace the numerically resolved ground space by a constructed one,
        # keeping the shift consistent with its energy.
        energy = float(np.real(np.vdot(ground[:, 0], op.matvec(ground[:, 0]))))
        op = op.with_shift(op.shift - energy)
        op.anti_ground = replace(op.anti_ground,
                                 energy=op.anti_ground.energy - energy)
        op.ground = GroundSpace(0.0, ground, op.ground.gap)
    return op


# -- builders ------------------------------------------------------------

def build_tfim(spec, *, exact_degeneracy_only=False):
    """Transverse-field Ising model on an open chain or a square lattice.

    ``H = J sum_<ij> Z_i Z_j + h_x sum_j X_j + E0``.
    """
    v = spec.n_sites
    boundary = spec.resolved_boundary
    if spec.family == "TFIM1D":
        bonds = _chain_bonds(v, boundary)
    elif spec.family == "TFIM2D":
        lx, ly = int(spec.param("Lx")), int(spec.param("Ly"))
        if lx * ly != v or lx < 1 or ly < 1:
            raise InvalidLatticeError(
                f"lattice {lx}x{ly} does not have {v} sites")
        bonds = lattice_bonds(lx, ly, boundary)
    else:
        raise ValueError(f"build_tfim cannot build {spec.family}")
    terms = tfim_terms(v, bonds, float(spec.param("J")),
                       float(spec.param("h_x")))
    meta = {**spec.to_dict(), "n_bonds": len(bonds)}
    return _finish(pauli_sum(terms, v), v, terms, meta,
                   exact_degeneracy_only=exact_degeneracy_only)


def build_mfim(spec, *, exact_degeneracy_only=False):
    """Mixed-field Ising chain ``J ZZ + h_x X + h_z Z`` (open by default).

    With ``J = h_z = 0`` this is the pure-field paramagnet.
    """
    v = spec.n_sites
    bonds = _chain_bonds(v, spec.resolved_boundary)
    terms = tfim_terms(v, bonds, float(spec.param("J")),
                       float(spec.param("h_x")), float(spec.param("h_z")))
    meta = {**spec.to_dict(), "n_bonds": len(bonds)}
    return _finish(pauli_sum(terms, v), v, terms, meta,
                   exact_degeneracy_only=exact_degeneracy_only)


def total_raising(n_sites):
    """Sparse total raising operator ``S^+ = sum_j sigma^+_j``.

    With bit 0 meaning spin up, ``sigma^+`` maps bit 1 to bit 0.
    """
    n = 2 ** n_sites
    idx = np.arange(n, dtype=np.int64)
    rows, cols = [], []
    for site in range(n_sites):
        bit = 1 << (n_sites - 1 - site)
        down = (idx & bit) != 0
        cols.append(idx[down])
        rows.append(idx[down] ^ bit)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))


def heisenberg_ground_basis(n_sites):
    """Orthonormal basis of the ferromagnetic multiplet.

    Applies ``(S^+)^n`` for ``n = 0..V`` to the all-down state and
    normalizes; distinct ``n`` land in distinct magnetization sectors, so the
    vectors are already orthogonal and the QR step only fixes roundoff.
    """
    n = 2 ** n_sites
    raise_op = total_raising(n_sites)
    vec = np.zeros(n)
    vec[-1] = 1.0
    cols = []
    for _ in range(n_sites + 1):
        cols.append(vec / np.linalg.norm(vec))
        vec = raise_op @ vec
    basis, _ = np.linalg.qr(np.column_stack(cols))
    return basis


def build_heisenberg(spec, *, exact_degeneracy_only=False):
    """Ferromagnetic Heisenberg ring ``-J sum_j (XX + YY + ZZ)``."""
    v = spec.n_sites
    if v < 3:
        raise InvalidLatticeError("the Heisenberg ring needs V >= 3")
    J = float(spec.param("J"))
    terms = []
    for a, b in _chain_bonds(v, spec.resolved_boundary):
        for ch in "XYZ":
            terms.append((-J, _string(v, [(a, ch), (b, ch)])))
    mat = pauli_sum(terms, v)
    ground = heisenberg_ground_basis(v) if J > 0 else None
    return _finish(mat, v, terms, spec.to_dict(), ground=ground,
                   exact_degeneracy_only=exact_degeneracy_only)


def gaussian_ensemble_tridiagonal(n_sites, beta, rng):
    """Tridiagonal beta-ensemble matrix with semicircle radius ``V``.

    Diagonal entries ``a_j ~ Normal(0, 2)`` (variance 2), off-diagonal
    ``b_j ~ chi_{beta j}`` for ``j = 1..N-1``, and an overall factor
    ``V / (2 sqrt(N beta))``.  The diagonal and the off-diagonal are laid out
    from ``j = N`` (top-left) down to ``j = 1``.

    Returns
    -------
    diag, offdiag : ndarray
    """
    n = 2 ** n_sites
    scale = n_sites / (2.0 * np.sqrt(n * beta))
    a = rng.normal(0.0, np.sqrt(2.0), size=n)
    dof = beta * np.arange(1, n)
    b = np.sqrt(rng.chisquare(dof))
    return scale * a[::-1], scale * b[::-1]


def build_gaussian_ensemble(spec, *, diagonalize=True,
                            exact_degeneracy_only=False):
    """GOE (``beta = 1``) or GUE (``beta = 2``) sample in tridiagonal form.

    The spectrum is computed from the tridiagonal matrix directly.  With
    ``diagonalize`` true the result is in the eigenbasis (eigenvectors kept),
    which is what sampling needs; otherwise only the extremal spaces are
    resolved and the tridiagonal layout is returned.
    """
    beta = 1 if spec.family == "GOE" else 2
    rng = np.random.default_rng(spec.seed)
    diag, off = gaussian_ensemble_tridiagonal(spec.n_sites, beta, rng)
    op = Hamiltonian((diag, off), "tridiagonal", spec.n_sites,
                     meta=spec.to_dict())
    if diagonalize:
        return op.diagonalize(exact_degeneracy_only=exact_degeneracy_only)
    evals = sla.eigvalsh_tridiagonal(diag, off, select="i",
                                     select_range=(0, 0))
    top = sla.eigvalsh_tridiagonal(diag, off, select="i",
                                   select_range=(op.dim - 1, op.dim - 1))
    lo_vec = sla.eigh_tridiagonal(diag, off, select="i",
                                  select_range=(0, 0))[1]
    hi_vec = sla.eigh_tridiagonal(diag, off, select="i",
                                  select_range=(op.dim - 1, op.dim - 1))[1]
    shift = -float(evals[0])
    ground = GroundSpace(0.0, lo_vec)
    anti = GroundSpace(float(top[0]) + shift, hi_vec)
    return Hamiltonian((diag, off), "tridiagonal", spec.n_sites, shift=shift,
                       ground=ground, anti_ground=anti, meta=spec.to_dict())


_BUILDERS = {
    "TFIM1D": build_tfim,
    "TFIM2D": build_tfim,
    "MFIM1D": build_mfim,
    "Heisenberg1D": build_heisenberg,
    "GOE": build_gaussian_ensemble,
    "GUE": build_gaussian_ensemble,
}


def build(spec, **kwargs):
    """Build any catalog model from its :class:`ModelSpec`."""
    return _BUILDERS[spec.family](spec, **kwargs)


def model_s2(spec):
    """Closed-form ``s^2`` for the spin families, ``None`` for random ones.

    ``s^2 = V^-1 sum_a h_a^2`` summed over the Pauli coefficients of the
    model, i.e. ``J^2 n_bonds / V + h_x^2 + h_z^2`` for Ising models and
    ``3 J^2 n_bonds / V`` for the Heisenberg ring.
    """
    v = spec.n_sites
    boundary = spec.resolved_boundary
    if spec.family in ("TFIM1D", "MFIM1D"):
        n_bonds = len(_chain_bonds(v, boundary))
    elif spec.family == "TFIM2D":
        n_bonds = len(lattice_bonds(int(spec.param("Lx")),
                                    int(spec.param("Ly")), boundary))
    elif spec.family == "Heisenberg1D":
        J = float(spec.param("J"))
        return 3.0 * J ** 2 * len(_chain_bonds(v, boundary)) / v
    else:
        return None
    J = float(spec.param("J"))
    h_x = float(spec.param("h_x"))
    h_z = float(spec.param("h_z")) if spec.family == "MFIM1D" else 0.0
    return J ** 2 * n_bonds / v + h_x ** 2 + h_z ** 2
