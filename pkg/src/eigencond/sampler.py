"""
Nested sampling of energy-constrained Haar-random states.

The live points are unit vectors in ``C^N``.  Each iteration removes the
highest-energy live point, records it, clones a survivor and decorrelates the
clone with Galilean Monte Carlo (GMC) moves confined to ``E(psi) < E*``.

A GMC move draws a Haar-uniform tangent direction ``v`` (``<psi|v> = 0``)
and advances along the great circle

    psi(theta) = cos(theta) psi - i sin(theta) v,
    v(theta)   = cos(theta) v   - i sin(theta) psi,

which is ``exp(-i F theta)`` with ``F = |psi><v| + |v><psi|``.  Micro-steps of
size ``step`` that land outside the constraint trigger a specular reflection
of the velocity ``-i v`` about the energy gradient.  After ``path_length`` of
arc length the end point is accepted if it is inside the constraint.

Two implementations of a trajectory are provided: a segment-wise one that
jumps straight to the next boundary crossing (compiled with numba in the
eigenbasis), and a literal micro-step loop used as a reference.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .statespace import (GRADIENT_TOL, DegenerateGradientError,
                         energy_expectation, haar_random_state)

__all__ = [
    "SamplerConfig",
    "SampleRecord",
    "BinnedObservable",
    "StuckSamplerError",
    "DegenerateSpectrumError",
    "EmptyObservableError",
    "random_tangent",
    "rotate",
    "reflect_velocity",
    "gmc_advance",
    "gmc_advance_stepwise",
    "gmc_trajectory",
    "nested_sampling",
    "sample_both_tails",
    "haar_quadrature",
    "bin_weights",
    "estimate_steps_to_energy",
]

log = logging.getLogger(__name__)


class StuckSamplerError(RuntimeError):
    """No accepted trajectory within the retry cap.

    Attributes
    ----------
    e_star : float
        Constraint energy at which the sampler got stuck.
    records : list of SampleRecord
        Records emitted before the failure.
    """

    def __init__(self, e_star, records=()):
        super().__init__(f"sampler stuck at E* = {e_star!r}")
        self.e_star = e_star
        self.records = list(records)


class DegenerateSpectrumError(ValueError):
    """The constraint cannot be tightened because the spectrum is flat."""


class EmptyObservableError(ValueError):
    """Binning was asked for an empty record list."""


@dataclass(frozen=True)
class SamplerConfig:
    """Parameters of a nested-sampling run.

    Attributes
    ----------
    n_live : int
        Number of live points (at least 2).
    path_length : float
        Arc length ``L`` of one GMC trajectory.
    step : float
        Micro-step ``delta theta`` in radians.
    n_moves : int
        Accepted GMC trajectories per iteration.
    max_iterations : int
        Iteration budget.
    target_energy : float or None
        Stop once the recorded constraint energy drops to this value.
    seed : int or None
        Seed of the run's random stream.
    retry_cap : int
        Rejected trajectories tolerated per move before giving up.
    """

    n_live: int = 2
    path_length: float = 32.0
    step: float = 2.0 ** -10
    n_moves: int = 16
    max_iterations: int = 1000
    target_energy: float | None = None
    seed: int | None = None
    retry_cap: int = 100

    def __post_init__(self):
        if self.n_live < 2:
            raise ValueError("n_live must be at least 2")
        if not 0.0 < self.step < self.path_length:
            raise ValueError("need 0 < step < path_length")
        if self.n_moves < 1 or self.max_iterations < 1 or self.retry_cap < 1:
            raise ValueError("n_moves, max_iterations and retry_cap must be "
                             "positive")

    @property
    def n_steps(self):
        return max(1, int(round(self.path_length / self.step)))

    @property
    def log_t(self):
        return math.log1p(-1.0 / self.n_live)


@dataclass
class SampleRecord:
    """One removed live point.

    ``log_measure`` is ``i ln(1 - 1/n_live)``, the log of the expected
    fraction of Haar measure with ``E < E*_i``.
    """

    iteration: int
    e_star: float
    state: np.ndarray | None
    log_measure: float
    accepts: int = 0
    rejects: int = 0
    p_gs: float = math.nan
    p_anti_gs: float = math.nan

    def to_json(self):
        return {"i": self.iteration, "e_star": self.e_star,
                "log_measure": self.log_measure, "p_gs": self.p_gs,
                "p_anti_gs": self.p_anti_gs, "accepts": self.accepts,
                "rejects": self.rejects}


@dataclass(frozen=True)
class BinnedObservable:
    """Bin averages of ``p_gs + p_anti_gs`` over energy density.

    ``mixed`` flags bins that pool records from both the ground and the
    anti-ground run.
    """

    centers: np.ndarray
    means: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    mixed: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    width: float = 0.01


# -- geometry -----------------------------------------------------------

def random_tangent(psi, rng):
    """Haar-uniform unit vector orthogonal to ``psi``."""
    g = rng.standard_normal(psi.size) + 1j * rng.standard_normal(psi.size)
    g -= np.vdot(psi, g) * psi
    return g / np.linalg.norm(g)


def rotate(psi, v, theta):
    """Closed-form rotation by ``exp(-i F theta)`` in the ``(psi, v)`` plane."""
    c, s = math.cos(theta), math.sin(theta)
    return c * psi - 1j * s * v, c * v - 1j * s * psi


def reflect_velocity(op, psi, v, energy=None):
    """Reflect the tangent ``v`` off the energy isosurface through ``psi``.

    The normal in ``v``-coordinates is ``m = i n`` with ``n`` the unit energy
    gradient, because the state moves with velocity ``-i v``.  Under the real
    inner product ``Re<a|b>`` this is a Householder reflection about ``m``.

    Raises
    ------
    DegenerateGradientError
        If ``psi`` is an eigenstate.
    """
    hpsi = op.matvec(psi)
    if energy is None:
        energy = float(np.real(np.vdot(psi, hpsi)))
    n = hpsi - energy * psi
    size = np.linalg.norm(n)
    if size < GRADIENT_TOL * max(op.norm, 1e-300):
        raise DegenerateGradientError(f"gradient norm {size:.3e}")
    m = 1j * n / size
    return v - 2.0 * np.real(np.vdot(m, v)) * m


def _reorthonormalize(psi, v):
    psi = psi / np.linalg.norm(psi)
    v = v - np.vdot(psi, v) * psi
    return psi, v / np.linalg.norm(v)


def _segment_coefficients(op, psi, v):
    hpsi = op.matvec(psi)
    hv = op.matvec(v)
    a = float(np.real(np.vdot(psi, hpsi)))
    b = float(np.real(np.vdot(v, hv)))
    c = float(np.imag(np.vdot(psi, hv)))
    return a, b, c


def gmc_advance(op, psi, v, e_star, n_steps, step):
    """Advance ``(psi, v)`` by ``n_steps`` micro-steps with reflections.

    Segment-wise implementation: each straight segment is jumped over in
    one rotation up to the first micro-step that lands outside.  Uses the
    compiled kernel for eigenbasis operators.

    Returns
    -------
    psi, v : ndarray
        Final position and direction (new arrays).
    n_reflections : int
    """
    psi = np.array(psi, dtype=complex)
    v = np.array(v, dtype=complex)
    grad_tol = GRADIENT_TOL * max(op.norm, 1e-300)
    if op.representation == "diagonal" and _kernels.HAVE_NUMBA:
        status, n_ref = _kernels.diagonal_trajectory(
            op.spectrum, psi, v, float(e_star), float(step), int(n_steps),
            grad_tol)
        if status == _kernels.DEGENERATE_GRADIENT:
            raise DegenerateGradientError("trajectory hit an eigenstate")
        return psi, v, int(n_ref)
    remaining = int(n_steps)
    n_ref = 0
    while remaining > 0:
        psi, v = _reorthonormalize(psi, v)
        a, b, c = _segment_coefficients(op, psi, v)
        k = _kernels.first_exit(0.5 * (a + b), 0.5 * (a - b), c,
                                float(e_star), float(step), remaining)
        if k > remaining:
            psi, v = rotate(psi, v, remaining * step)
            break
        psi, v = rotate(psi, v, k * step)
        remaining -= k
        v = reflect_velocity(op, psi, v)
        n_ref += 1
    return psi, v, n_ref


def gmc_advance_stepwise(op, psi, v, e_star, n_steps, step, *,
                         reorthogonalize_every=256):
    """Reference trajectory: one micro-step at a time.

    Follows the loop literally: rotate by ``step``; if the new point is
    outside the constraint, reflect ``v`` there.  Slow; used to validate
    :func:`gmc_advance`.
    """
    psi = np.array(psi, dtype=complex)
    v = np.array(v, dtype=complex)
    c, s = math.cos(step), math.sin(step)
    n_ref = 0
    for i in range(1, int(n_steps) + 1):
        psi, v = c * psi - 1j * s * v, c * v - 1j * s * psi
        if i % reorthogonalize_every == 0:
            psi, v = _reorthonormalize(psi, v)
        if energy_expectation(op, psi) >= e_star:
            v = reflect_velocity(op, psi, v)
            n_ref += 1
    return psi, v, n_ref


def gmc_trajectory(op, psi, e_star, cfg, rng, *, method="segments"):
    """One GMC trajectory from ``psi`` under ``E < e_star``.

    Parameters
    ----------
    op : Hamiltonian
    psi : ndarray
        Starting point, strictly inside the constraint.
    e_star : float
    cfg : SamplerConfig
        Supplies ``path_length`` and ``step``.
    rng : numpy.random.Generator
    method : {"segments", "steps"}
        Segment-jumping implementation or the literal micro-step loop.

    Returns
    -------
    ndarray or None
        The end point, or ``None`` if it lies outside the constraint
        (rejection).
    """
    v = random_tangent(psi, rng)
    advance = gmc_advance if method == "segments" else gmc_advance_stepwise
    out, _, _ = advance(op, psi, v, e_star, cfg.n_steps, cfg.step)
    if energy_expectation(op, out) < e_star:
        return out / np.linalg.norm(out)
    return None


# -- nested sampling ------------------------------------------------------

def _spectral_width(op):
    if op.ground is not None and op.anti_ground is not None:
        return op.anti_ground.energy - op.ground.energy
    if op.representation == "diagonal":
        return float(np.ptp(op.spectrum))
    return np.inf


def _weights(op, psi):
    p_gs = float(op.ground.weight(psi)) if op.ground is not None else math.nan
    p_anti = float(op.anti_ground.weight(psi)) \
        if op.anti_ground is not None else math.nan
    return p_gs, p_anti


def nested_sampling(op, cfg, rng=None, *, store_states=True, callback=None):
    """Run nested sampling under a shrinking energy constraint.

    Parameters
    ----------
    op : Hamiltonian
        Shifted operator; eigenbasis layout is by far the fastest.
    cfg : SamplerConfig
    rng : numpy.random.Generator, optional
        Defaults to ``default_rng(cfg.seed)``.
    store_states : bool
        Keep the recorded state vectors (ground/anti-ground weights are
        always stored on the records).
    callback : callable, optional
        Called with each new record.

    Returns
    -------
    list of SampleRecord
        Constraint energies strictly decrease along the list.

    Raises
    ------
    DegenerateSpectrumError
        If the spectrum has zero width or a clone cannot satisfy the strict
        constraint.
    StuckSamplerError
        If a move exceeds ``cfg.retry_cap`` rejected trajectories.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    width = _spectral_width(op)
    if width <= 1e-12 * max(op.norm, 1.0):
        raise DegenerateSpectrumError("operator is proportional to identity")
    if op.representation == "diagonal":
        _kernels.warm_up()
    live = [haar_random_state(op.dim, rng) for _ in range(cfg.n_live)]
    energies = np.array([energy_expectation(op, p) for p in live])
    records = []
    log_t = cfg.log_t
    for i in range(1, cfg.max_iterations + 1):
        worst = int(np.argmax(energies))
        e_star = float(energies[worst])
        removed = live[worst]
        survivors = [j for j in range(cfg.n_live) if j != worst]
        pick = survivors[0] if len(survivors) == 1 else \
            survivors[int(rng.integers(len(survivors)))]
        psi = live[pick].copy()
        if not energies[pick] < e_star:
            raise DegenerateSpectrumError(
                f"clone energy {energies[pick]!r} not below E* = {e_star!r}")
        accepts = rejects = 0
        for _ in range(cfg.n_moves):
            tries = 0
            while True:
                out = gmc_trajectory(op, psi, e_star, cfg, rng)
                if out is not None:
                    psi = out
                    accepts += 1
                    break
                rejects += 1
                tries += 1
                if tries >= cfg.retry_cap:
                    raise StuckSamplerError(e_star, records)
        p_gs, p_anti = _weights(op, removed)
        rec = SampleRecord(i, e_star, removed if store_states else None,
                           i * log_t, accepts, rejects, p_gs, p_anti)
        records.append(rec)
        if callback is not None:
            callback(rec)
        live[worst] = psi
        energies[worst] = energy_expectation(op, psi)
        if cfg.target_energy is not None and e_star <= cfg.target_energy:
            break
        if i % 100 == 0:
            log.debug("iteration %d  E* = %.6g  accept %d/%d", i, e_star,
                      accepts, accepts + rejects)
    return records


def sample_both_tails(op, cfg, anti_cfg=None, *, rng=None, anti_rng=None,
                      store_states=True):
    """Run nested sampling on ``H`` and on ``E_max - H``.

    The second run explores the high-energy tail.  Its records are converted
    back to the units of ``H``: ``e_star -> E_max - e_star`` and the two
    weights swap roles.

    Parameters
    ----------
    op : Hamiltonian
    cfg : SamplerConfig
        Configuration of the low-energy run.
    anti_cfg : SamplerConfig, optional
        Configuration of the high-energy run; ``target_energy`` is given in
        the units of ``H``.  Defaults to ``cfg`` with a seed offset and no
        target.

    Returns
    -------
    ground_records, anti_records : list of SampleRecord
    """
    if anti_cfg is None:
        seed = None if cfg.seed is None else cfg.seed + 1
        anti_cfg = SamplerConfig(cfg.n_live, cfg.path_length, cfg.step,
                                 cfg.n_moves, cfg.max_iterations, None, seed,
                                 cfg.retry_cap)
    ground = nested_sampling(op, cfg, rng, store_states=store_states)
    e_max = op.anti_ground.energy
    flipped = op.reflected()
    target = anti_cfg.target_energy
    flip_cfg = SamplerConfig(
        anti_cfg.n_live, anti_cfg.path_length, anti_cfg.step,
        anti_cfg.n_moves, anti_cfg.max_iterations,
        None if target is None else e_max - target, anti_cfg.seed,
        anti_cfg.retry_cap)
    raw = nested_sampling(flipped, flip_cfg, anti_rng,
                          store_states=store_states)
    anti = [SampleRecord(r.iteration, e_max - r.e_star, r.state,
                         r.log_measure, r.accepts, r.rejects,
                         r.p_anti_gs, r.p_gs) for r in raw]
    return ground, anti


def haar_quadrature(records, beta, g=None, *, n_live=None):
    """Estimate ``int dmu exp(-beta E(psi)) g(psi)`` over the Haar measure.

    Uses the trapezoid-style weights ``(t^{i-1} - t^{i+1}) / 2`` with
    ``t = 1 - 1/n_live``.

    Parameters
    ----------
    records : sequence of SampleRecord
        Records of one run, in iteration order.
    beta : float
        Boltzmann-like weight parameter (any real value).
    g : callable, optional
        State functional; defaults to 1.
    n_live : int, optional
        Inferred from the first record's ``log_measure`` if omitted.
    """
    if not records:
        return 0.0
    if n_live is None:
        first = records[0]
        log_t = first.log_measure / first.iteration
    else:
        log_t = math.log1p(-1.0 / n_live)
    t = math.exp(log_t)
    idx = np.array([r.iteration for r in records], dtype=float)
    e = np.array([r.e_star for r in records])
    w = 0.5 * np.exp((idx - 1) * log_t) * (1.0 - t * t)
    gv = np.ones_like(e) if g is None else np.array(
        [g(r.state) for r in records], dtype=float)
    # Shift exponents to avoid overflow for large |beta|.
    expo = -beta * e
    top = float(np.max(expo))
    return float(np.exp(top) * np.sum(w * gv * np.exp(expo - top)))


def bin_weights(records, op, delta=0.01, *, anti_records=()):
    """Average ``p_gs + p_anti_gs`` in energy-density bins of width ``delta``.

    Weights are recomputed from stored states when available (the operator's
    extremal spaces must be resolved) and taken from the records otherwise.
    Records from an anti-ground run passed through ``anti_records`` are
    pooled; bins receiving records from both runs are flagged as mixed.
    """
    rows = []
    for source, recs in ((0, records), (1, anti_records)):
        for r in recs:
            if r.state is not None:
                p_gs, p_anti = _weights(op, r.state)
            else:
                p_gs, p_anti = r.p_gs, r.p_anti_gs
            rows.append((r.e_star / op.n_sites, p_gs + p_anti, source))
    if not rows:
        raise EmptyObservableError("no records to bin")
    eps, val, src = (np.array(c) for c in zip(*rows))
    keys = np.floor(eps / delta).astype(np.int64)
    uniq = np.unique(keys)
    centers, means, errs, counts, mixed = [], [], [], [], []
    for k in uniq:
        sel = keys == k
        x = val[sel]
        n = x.size
        centers.append((k + 0.5) * delta)
        means.append(float(np.mean(x)))
        errs.append(float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1
                    else math.nan)
        counts.append(n)
        mixed.append(bool(np.any(src[sel] == 0) and np.any(src[sel] == 1)))
    return BinnedObservable(np.array(centers), np.array(means),
                            np.array(errs), np.array(counts),
                            np.array(mixed), delta)


def estimate_steps_to_energy(moments, target_energy, n_live=2, *,
                             e_max=None):
    """Rough nested-sampling iteration count to reach ``target_energy``.

    ``n = |1/ln t| ((E - E_inf)^2 / s^2) 2^V / V`` with ``t = 1 - 1/n_live``.
    For budgeting only.

    Parameters
    ----------
    moments : SpectralMoments
    target_energy : float
        Shifted energy to reach.
    n_live : int
    e_max : float, optional
        Shifted top of the spectrum; enables the range check on the high
        side.
    """
    v = moments.n_sites
    if target_energy < 0.0 or (e_max is not None and target_energy > e_max):
        raise ValueError(f"target energy {target_energy!r} outside the "
                         f"spectrum")
    e_inf = moments.eps_inf * v
    log_t = math.log1p(-1.0 / n_live)
    return ((target_energy - e_inf) ** 2 / moments.s2) * (2.0 ** v) / v \
        / abs(log_t)
