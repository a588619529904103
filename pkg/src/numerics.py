"""
Numerics Module
Dense matrix helpers and the symmetric positive-definite solves behind the closed forms
"""

import logging

import numpy as np
from scipy import linalg

from src.errors import NotPositiveDefinite

logger = logging.getLogger(__name__)

SPECTRAL_INFLATION = 1.01

# cho_factor output: (triangular factor, lower flag)
SPDFactor = tuple[np.ndarray, bool]


def gram(X: np.ndarray) -> np.ndarray:
    """Return X^T X, symmetric bit for bit across the diagonal."""
    X = np.asarray(X, dtype=float)
    G = X.T @ X
    upper = np.triu(G)
    return upper + np.triu(G, 1).T


def spd_factor(A: np.ndarray) -> SPDFactor:
    """Cholesky-factor a symmetric positive-definite matrix.

    Raises NotPositiveDefinite when LAPACK meets a non-positive pivot, or when a
    pivot is so small relative to the diagonal that the matrix is numerically
    rank deficient.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {A.shape}")
    scale = 1.0 + float(np.max(np.abs(A))) if A.size else 1.0
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-10 * scale):
        raise ValueError("Matrix is not symmetric")
    if A.shape[0] == 0:
        return np.zeros((0, 0)), True

    try:
        factor, lower = linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"Matrix is not positive definite: {e}") from e

    pivots = np.diag(factor) ** 2
    floor = np.finfo(float).eps * A.shape[0] * float(np.max(np.diag(A)))
    if np.min(pivots) <= floor:
        raise NotPositiveDefinite(
            f"Matrix is numerically singular (smallest pivot {np.min(pivots):.3e})"
        )
    return factor, lower


def spd_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Return A^{-1} B through a Cholesky factorization, never an explicit inverse."""
    return factor_solve(spd_factor(A), B)


def factor_solve(factor: SPDFactor, B: np.ndarray) -> np.ndarray:
    """Solve with a factor obtained from spd_factor."""
    B = np.asarray(B, dtype=float)
    if factor[0].shape[0] == 0:
        return np.zeros_like(B)
    return linalg.cho_solve(factor, B, check_finite=False)


def spectral_bound(H: np.ndarray) -> float:
    """Upper bound on the largest eigenvalue of a symmetric PSD matrix.

    The top eigenvalue from LAPACK, inflated by 1% plus a rounding margin.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if n == 0 or not np.any(H):
        return 0.0

    top = float(linalg.eigvalsh(H, subset_by_index=[n - 1, n - 1], check_finite=True)[0])
    margin = np.finfo(float).eps * n * float(np.max(np.abs(H)))
    return SPECTRAL_INFLATION * max(top, 0.0) + margin


def min_norm_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution of A x = b; A may be rank deficient."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.size == 0:
        return np.zeros(A.shape[1])
    return linalg.lstsq(A, b, check_finite=False)[0]
