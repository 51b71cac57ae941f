"""Dense matrix kernels and the seeded random source.

Matrices are plain ``float64`` numpy arrays. ``matmul`` accumulates the inner
dimension in a fixed sequential order without fused multiply-add, so results
are bit-identical to a textbook triple loop and independent of BLAS threading.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericalAbort

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

SeededRng = np.random.Generator


def make_rng(seed: int) -> SeededRng:
    """PCG64 generator; equal seeds give equal streams on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def check_finite(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericalAbort(f"{what} contains NaN or Inf")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return check_finite(_matmul_kernel(np.ascontiguousarray(a), np.ascontiguousarray(b)), "matmul result")


def _matmul_rank1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]))
    # one rank-1 update per inner index keeps the summation order fixed
    for k in range(a.shape[1]):
        out += np.multiply(a[:, k : k + 1], b[k : k + 1, :])
    return out


if numba is not None:

    @numba.njit(cache=True, nogil=True)
    def _matmul_kernel(a, b):
        m, inner = a.shape
        n = b.shape[1]
        out = np.zeros((m, n))
        for i in range(m):
            for k in range(inner):
                aik = a[i, k]
                for j in range(n):
                    out[i, j] += aik * b[k, j]
        return out

else:  # pragma: no cover
    _matmul_kernel = _matmul_rank1


def hadamard(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    return check_finite(a * b, "hadamard result")


def tanh_elem(a) -> np.ndarray:
    return np.tanh(as_matrix(a))


def column_topk_indices(a, col: int, k: int) -> np.ndarray:
    """Row indices of the ``k`` largest entries of column ``col``, descending.

    Ties go to the smaller row index.
    """
    a = as_matrix(a)
    if not 0 <= col < a.shape[1]:
        raise IndexError(f"column {col} out of range for {a.shape[1]} columns")
    if not 0 <= k <= a.shape[0]:
        raise ValueError(f"k={k} out of range for {a.shape[0]} rows")
    order = np.argsort(-a[:, col], kind="stable")
    return order[:k]
