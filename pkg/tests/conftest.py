import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (A + A.conj().T)


def gapped_hermitian(rng: np.random.Generator, n: int, n_low: int, gap: float = 1.0):
    """Random hermitian matrix with ``n_low`` eigenvalues in [-2, -gap/2] and the rest in [gap/2, 2]."""
    lo = rng.uniform(-2.0, -gap / 2, n_low)
    hi = rng.uniform(gap / 2, 2.0, n - n_low)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return (Q * np.r_[lo, hi]) @ Q.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
