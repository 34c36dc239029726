"""
Compiled inner loop of the Galilean Monte Carlo trajectory in the energy
eigenbasis.

Along a straight segment the pair ``(psi, v)`` rotates in a fixed complex
two-plane, so the energy is a pure harmonic in ``2 theta``:

    E(theta) = m + A cos(2 theta) + B sin(2 theta),

with ``m = (a + b)/2``, ``A = (a - b)/2``, ``B = c``, ``a = <psi|H|psi>``,
``b = <v|H|v>`` and ``c = Im <psi|H|v>``.  The first micro-step that leaves
the constraint can therefore be located in closed form, and the state is
advanced there in a single rotation instead of one micro-step at a time.

The module also holds fused update loops for the batched conjugate
gradient solver, which is memory-bound on large real probe blocks.

When numba is unavailable the same functions run as plain Python; the
vectorized fallbacks in :mod:`eigencond.sampler` and
:mod:`eigencond.critical` are then used instead.
"""

import math

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f

# Status codes returned by the compiled trajectory.
OK = 0
DEGENERATE_GRADIENT = 1


@njit(cache=True)
def harmonic_value(mid, amp_c, amp_s, theta):
    return mid + amp_c * math.cos(2.0 * theta) + amp_s * math.sin(2.0 * theta)


@njit(cache=True)
def first_exit(mid, amp_c, amp_s, e_star, step, k_max):
    """Smallest ``k`` in ``1..k_max`` with ``E(k step) >= e_star``.

    Returns ``k_max + 1`` when the segment stays inside.
    """
    radius = math.hypot(amp_c, amp_s)
    if radius == 0.0:
        if mid >= e_star:
            return 1
        return k_max + 1
    level = (e_star - mid) / radius
    if level > 1.0:
        return k_max + 1
    if level <= -1.0:
        return 1
    alpha = math.acos(level)
    phi = math.atan2(amp_s, amp_c)
    two_pi = 2.0 * math.pi
    # Outside set: 2 theta - phi in [2 pi j - alpha, 2 pi j + alpha].
    j = math.floor((2.0 * step - alpha - phi) / two_pi) - 1
    while True:
        lo = (two_pi * j - alpha + phi) / (2.0 * step)
        hi = (two_pi * j + alpha + phi) / (2.0 * step)
        if lo > k_max + 1:
            return k_max + 1
        klo = max(int(math.ceil(lo)), 1)
        khi = int(math.floor(hi))
        # Guard the window edges against roundoff in the inverse map.
        cand = max(klo - 1, 1)
        stop = min(khi + 1, k_max)
        k = cand
        while k <= stop:
            if harmonic_value(mid, amp_c, amp_s, k * step) >= e_star:
                return k
            k += 1
        j += 1


@njit(cache=True)
def _rotate(psi, v, theta):
    c = math.cos(theta)
    s = math.sin(theta)
    for j in range(psi.size):
        p = psi[j]
        w = v[j]
        psi[j] = c * p - 1j * s * w
        v[j] = c * w - 1j * s * p


@njit(cache=True)
def _reorthonormalize(psi, v):
    pp = 0.0
    for j in range(psi.size):
        pp += psi[j].real ** 2 + psi[j].imag ** 2
    inv = 1.0 / math.sqrt(pp)
    for j in range(psi.size):
        psi[j] *= inv
    ov = 0.0 + 0.0j
    for j in range(psi.size):
        ov += psi[j].conjugate() * v[j]
    vv = 0.0
    for j in range(psi.size):
        v[j] -= ov * psi[j]
        vv += v[j].real ** 2 + v[j].imag ** 2
    inv = 1.0 / math.sqrt(vv)
    for j in range(psi.size):
        v[j] *= inv


@njit(cache=True)
def _coefficients(evals, psi, v):
    a = 0.0
    b = 0.0
    c = 0.0
    for j in range(psi.size):
        e = evals[j]
        pr = psi[j].real
        pi = psi[j].imag
        wr = v[j].real
        wi = v[j].imag
        a += e * (pr * pr + pi * pi)
        b += e * (wr * wr + wi * wi)
        c += e * (pr * wi - pi * wr)
    return a, b, c


@njit(cache=True)
def _reflect(evals, psi, v, grad_tol):
    """Reflect ``v`` so that the rate of change of the energy flips sign.

    The velocity of the motion is ``-i v``; its component along the energy
    gradient ``n = (H - E) psi`` is ``Im <n|v>``.  Reflecting the velocity
    about ``n`` is the same as ``v <- v - 2 Im<n|v> (i n)`` for unit ``n``.
    """
    energy = 0.0
    for j in range(psi.size):
        energy += evals[j] * (psi[j].real ** 2 + psi[j].imag ** 2)
    nn = 0.0
    rate = 0.0
    for j in range(psi.size):
        d = evals[j] - energy
        nr = d * psi[j].real
        ni = d * psi[j].imag
        nn += nr * nr + ni * ni
        # Im(conj(n) v) = nr * wi - ni * wr
        rate += nr * v[j].imag - ni * v[j].real
    if math.sqrt(nn) < grad_tol:
        return DEGENERATE_GRADIENT
    coef = 2.0 * rate / nn
    for j in range(psi.size):
        d = evals[j] - energy
        v[j] -= coef * 1j * d * psi[j]
    return OK


@njit(cache=True, nogil=True)
def diagonal_trajectory(evals, psi, v, e_star, step, n_steps, grad_tol):
    """Advance ``(psi, v)`` in place by ``n_steps`` micro-steps.

    Returns ``(status, n_reflections)``.
    """
    remaining = n_steps
    n_reflect = 0
    while remaining > 0:
        _reorthonormalize(psi, v)
        a, b, c = _coefficients(evals, psi, v)
        mid = 0.5 * (a + b)
        amp_c = 0.5 * (a - b)
        k = first_exit(mid, amp_c, c, e_star, step, remaining)
        if k > remaining:
            _rotate(psi, v, remaining * step)
            remaining = 0
            break
        _rotate(psi, v, k * step)
        remaining -= k
        status = _reflect(evals, psi, v, grad_tol)
        if status != OK:
            return status, n_reflect
        n_reflect += 1
    return OK, n_reflect


@njit(cache=True)
def diagonal_energy(evals, psi):
    total = 0.0
    for j in range(psi.size):
        total += evals[j] * (psi[j].real ** 2 + psi[j].imag ** 2)
    return total


@njit(cache=True, nogil=True)
def cg_update(x, r, p, ap, alpha):
    """``x += alpha p``, ``r -= alpha ap`` column-wise; return ``||r_j||^2``."""
    n, k = x.shape
    rr = np.zeros(k)
    for i in range(n):
        for j in range(k):
            x[i, j] += alpha[j] * p[i, j]
            rij = r[i, j] - alpha[j] * ap[i, j]
            r[i, j] = rij
            rr[j] += rij * rij
    return rr


@njit(cache=True, nogil=True)
def cg_direction(p, r, beta):
    """``p = r + beta p`` column-wise, in place."""
    n, k = p.shape
    for i in range(n):
        for j in range(k):
            p[i, j] = r[i, j] + beta[j] * p[i, j]


@njit(cache=True, nogil=True)
def column_dots(a, b):
    """Column-wise ``sum_i a_ij b_ij`` for real arrays."""
    n, k = a.shape
    out = np.zeros(k)
    for i in range(n):
        for j in range(k):
            out[j] += a[i, j] * b[i, j]
    return out


def warm_up():
    """Trigger compilation on a tiny problem (no-op without numba)."""
    evals = np.array([0.0, 1.0, 2.0, 3.0])
    psi = np.full(4, 0.5 + 0.0j)
    v = np.array([0.5, -0.5, 0.5, -0.5], dtype=complex)
    diagonal_trajectory(evals, psi, v, 2.0, 0.01, 10, 1e-14)
