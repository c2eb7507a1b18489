"""Dense exact Gaussian process: log-likelihood, prediction and simulation.

This is the O(n^3) oracle the Vecchia approximations are validated against.
"""

from typing import Tuple

import numpy as np

from ..core.config import settings
from ..core.exceptions import NumericalError, UsageError
from ..core.logging import get_logger
from ..models.kernel import KernelParams
from .kernel import cov_matrix
from .linalg import cholesky_lower, forward_solve, logdet_from_cholesky
from .sampling import design_points, make_rng, standard_normals

logger = get_logger(__name__)


def _check_size(n: int) -> None:
    if n < 1:
        raise UsageError("Exact GP needs at least one point")
    if n > settings.exact_max_n:
        raise UsageError(
            f"Exact GP limited to n <= {settings.exact_max_n} points, got {n}"
        )


def _points(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def exact_loglik(X: np.ndarray, y: np.ndarray, params: KernelParams) -> float:
    """-(n/2) log 2pi - (1/2) log|Sigma| - (1/2) y^T Sigma^-1 y."""
    X = _points(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    _check_size(n)
    if y.size != n:
        raise UsageError(f"Got {n} points but {y.size} responses")
    lower = cholesky_lower(cov_matrix(X, X, params), what="exact covariance")
    v = forward_solve(lower, y)
    return -0.5 * (
        n * np.log(2.0 * np.pi) + logdet_from_cholesky(lower) + float(np.dot(v, v))
    )


def clamp_variances(var: np.ndarray, tolerance: float) -> np.ndarray:
    """Clamp round-off negatives in (-tolerance, 0) to 0; reject worse."""
    worst = float(np.min(var)) if var.size else 0.0
    if worst < -tolerance:
        raise NumericalError(
            f"Predictive variance {worst:.3e} is below -{tolerance:.0e}"
        )
    if worst < 0:
        logger.debug(f"Clamped {int(np.sum(var < 0))} round-off negative variances")
    return np.maximum(var, 0.0)


def exact_predict(
    X: np.ndarray, y: np.ndarray, Xstar: np.ndarray, params: KernelParams
) -> Tuple[np.ndarray, np.ndarray]:
    """Conditional mean and marginal variance of y* given y."""
    X = _points(X)
    Xstar = _points(Xstar)
    y = np.asarray(y, dtype=float).ravel()
    _check_size(X.shape[0])
    lower = cholesky_lower(cov_matrix(X, X, params), what="exact covariance")
    cross = cov_matrix(X, Xstar, params)
    v = forward_solve(lower, cross)
    w = forward_solve(lower, y)
    mean = v.T @ w
    prior = np.full(Xstar.shape[0], params.sigma2 + params.tau2)
    var = prior - np.sum(v * v, axis=0)
    return mean, clamp_variances(var, settings.variance_clamp)


def gp_simulate(X: np.ndarray, params: KernelParams, seed: int) -> np.ndarray:
    """Draw y = L z from the zero-mean GP on X.

    Duplicate rows are simulated once and copied, so a nugget-free
    covariance with repeated points stays factorizable. A tiny relative
    jitter (``settings.simulation_jitter``) is added to the diagonal of the
    unique-point covariance.
    """
    X = _points(X)
    _check_size(X.shape[0])
    unique, inverse = np.unique(X, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    if unique.shape[0] == X.shape[0]:
        unique, inverse = X, np.arange(X.shape[0])

    cov = cov_matrix(unique, unique, params)
    cov[np.diag_indices_from(cov)] += settings.simulation_jitter * params.sigma2
    lower = cholesky_lower(cov, what="simulation covariance")
    z = standard_normals(make_rng(seed), unique.shape[0])
    y_unique = lower @ z
    logger.debug(f"Simulated {X.shape[0]} responses ({unique.shape[0]} unique points)")
    return y_unique[inverse]


def simulate_dataset(
    n: int, d: int, params: KernelParams, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform design on the unit cube and exact GP responses."""
    if params.dim != d:
        raise UsageError(f"beta has {params.dim} entries for d={d}")
    if n > settings.exact_max_n:
        raise UsageError(
            f"Exact simulation is limited to n <= {settings.exact_max_n} points; "
            "sequential Vecchia-based simulation of larger designs is not supported"
        )
    X = design_points(n, d, seed)
    return X, gp_simulate(X, params, seed)
