"""Dense Cholesky helpers shared by the exact oracle and the Vecchia blocks."""

from typing import Optional

import numpy as np
from scipy.linalg import lapack, solve_triangular

from ..core.exceptions import NumericalError


def cholesky_lower(
    matrix: np.ndarray,
    what: str = "covariance",
    block: Optional[int] = None,
    stage: Optional[str] = None,
) -> np.ndarray:
    """Lower Cholesky factor; failure raises NumericalError with the pivot."""
    if matrix.shape[0] == 0:
        return np.zeros((0, 0))
    factor, info = lapack.dpotrf(matrix, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NumericalError(
            f"Cholesky factorization of the {what} matrix failed: leading minor "
            f"of order {info} is not positive definite",
            pivot=int(info) - 1,
            block=block,
            stage=stage,
        )
    if info < 0:
        raise NumericalError(f"Invalid argument {-info} passed to dpotrf")
    return np.asarray(factor)


def forward_solve(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve L x = rhs for lower-triangular L."""
    if lower.shape[0] == 0:
        return np.zeros_like(rhs, dtype=float)
    return solve_triangular(lower, rhs, lower=True, check_finite=False)


def stacked_forward_solve(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """forward_solve over a stack: ``lower`` is (k, m, m), ``rhs`` (k, m, ...)."""
    out = np.empty(rhs.shape, dtype=float)
    for k in range(lower.shape[0]):
        out[k] = solve_triangular(lower[k], rhs[k], lower=True, check_finite=False)
    return out


def logdet_from_cholesky(lower: np.ndarray) -> float:
    """log|A| = 2 sum log L_ii."""
    return 2.0 * float(np.sum(np.log(np.diagonal(lower))))


def gaussian_loglik(lower: np.ndarray, residual: np.ndarray) -> float:
    """Log density of N(0, L L^T) at ``residual``."""
    n = residual.size
    if n == 0:
        return 0.0
    v = forward_solve(lower, residual)
    return -0.5 * (
        float(np.dot(v, v)) + logdet_from_cholesky(lower) + n * np.log(2.0 * np.pi)
    )
