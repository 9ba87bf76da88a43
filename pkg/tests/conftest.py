import numpy as np
import pytest

from spadscan.core import GridShape


def dense_blur_matrix(kernel: np.ndarray) -> np.ndarray:
    """Reference dense matrix of the circulant blur: H[k, j] = h[(j-k) mod n]."""
    n = kernel.shape[0]
    out = np.empty((n, n))
    for k in range(n):
        for j in range(n):
            out[k, j] = kernel[(j - k) % n]
    return out


def dense_pulse_matrix(waveform: np.ndarray) -> np.ndarray:
    """Reference dense pulse matrix: row k is the waveform shifted right by k."""
    m = waveform.shape[0]
    out = np.empty((m, m))
    for k in range(m):
        for j in range(m):
            out[k, j] = waveform[(j - k) % m]
    return out


def dense_derivative_matrix(stack, mode: str = "full") -> np.ndarray:
    """Materialize the derivative stack column by column."""
    n = stack.n
    cols = [stack.apply(np.eye(n)[:, i], mode) for i in range(n)]
    return np.column_stack(cols)


@pytest.fixture
def rng():
    return np.random.default_rng(20240800)


@pytest.fixture
def small_grid():
    return GridShape(4, 3)
