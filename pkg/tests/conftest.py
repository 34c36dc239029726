"""Shared fixtures: small catalog models and a deterministic generator."""

import numpy as np
import pytest

from eigencond.models import ModelSpec, build


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tfim8():
    """Paramagnetic open chain, V = 8, h_x = 5, computational basis."""
    return build(ModelSpec("TFIM1D", 8, {"h_x": 5.0}))


@pytest.fixture(scope="session")
def tfim8_eig(tfim8):
    return tfim8.diagonalize()


@pytest.fixture(scope="session")
def tfim10():
    return build(ModelSpec("TFIM1D", 10, {"h_x": 5.0}))


def dense_pauli(label):
    """Tensor product of single-site Pauli matrices, leftmost factor first."""
    mats = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]),
            "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1.0, -1.0])}
    out = np.array([[1.0]])
    for ch in label:
        out = np.kron(out, mats[ch])
    return out
