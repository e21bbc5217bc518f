"""Dense double-precision matrix primitives.

Matrices are plain ``numpy.ndarray`` objects in numpy's default (row-major)
storage order. Samples are stored column-wise throughout the package, so a
data matrix ``X`` has shape ``(dim, n_samples)``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class NumericError(RuntimeError):
    """Raised when a factorization or decomposition fails."""


class DimensionError(ValueError):
    """Raised on inconsistent array shapes or empty inputs."""


def default_rtol(shape: tuple[int, ...]) -> float:
    return np.finfo(np.float64).eps * max(shape)


def pinv(A: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of ``A`` via the SVD.

    Singular values ``s_i <= rtol * s_max`` are treated as zero. The default
    ``rtol`` is machine epsilon times ``max(A.shape)``.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError(f"pinv expects a 2-D array, got shape {A.shape}")
    if rtol is None:
        rtol = default_rtol(A.shape)
    if rtol < 0:
        raise ValueError("rtol must be nonnegative")
    if A.size == 0:
        return np.zeros((A.shape[1], A.shape[0]))
    if not np.all(np.isfinite(A)):
        raise NumericError("pinv: input contains non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"pinv: SVD did not converge for a {A.shape[0]}x{A.shape[1]} matrix "
            f"(LAPACK gesdd: {exc})"
        ) from exc
    smax = s[0] if s.size else 0.0
    keep = s > rtol * smax
    if smax == 0.0:
        keep[:] = False
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def center(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column mean and column-centered copy of ``X``.

    Returns ``(xbar, Xbar)`` with ``xbar = X @ 1 / n_t`` and
    ``Xbar = X - xbar 1^T``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise DimensionError(f"center needs a 2-D array with >= 1 column, got {X.shape}")
    xbar = X.mean(axis=1)
    return xbar, X - xbar[:, None]


def solve_spd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive definite ``A`` by Cholesky."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"solve_spd needs a square matrix, got {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"solve_spd: rhs has {B.shape[0]} rows, expected {A.shape[0]}")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise NumericError("solve_spd: matrix is not symmetric to 1e-12 relative")
    # scipy reports the failing leading minor through a positive LAPACK info code
    c, info = scipy.linalg.lapack.dpotrf(A, lower=0, clean=1)
    if info > 0:
        raise NumericError(
            f"solve_spd: matrix is not positive definite (pivot {info - 1} failed)"
        )
    if info < 0:
        raise NumericError(f"solve_spd: illegal argument {-info} to dpotrf")
    return scipy.linalg.cho_solve((c, False), B)


def frob(A: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(A), ord=None))
