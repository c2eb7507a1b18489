"""Scaled anisotropic distances and Matérn covariance matrices.

The Matérn family is written as

    f(r) = sigma2 * 2**(1 - nu) / Gamma(nu) * r**nu * K_nu(r)

without the usual sqrt(2 nu) rescaling; ranges enter only through the scaled
distance r = ||(x - x') / beta||. For half-integer nu = p + 1/2 the Bessel
factor reduces to exp(-r) times a degree-p polynomial.
"""

from typing import Dict, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from ..core.exceptions import UsageError
from ..models.kernel import KernelParams

ArrayLike = Union[Sequence[float], np.ndarray]

# polynomial coefficients (ascending powers of r) of the normalized
# half-integer Matérn correlation, each multiplied by exp(-r)
_HALF_INTEGER_POLYNOMIALS: Dict[float, Tuple[float, ...]] = {
    0.5: (1.0,),
    1.5: (1.0, 1.0),
    2.5: (1.0, 1.0, 1.0 / 3.0),
    3.5: (1.0, 1.0, 2.0 / 5.0, 1.0 / 15.0),
}


def _as_points(points: ArrayLike, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if dim > 1 or arr.size == 1 else arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise UsageError(
            f"{name} has dimension {arr.shape[-1]}, expected {dim} (length of beta)"
        )
    return arr


def scaled_distance(x: ArrayLike, x2: ArrayLike, beta: ArrayLike) -> float:
    """Anisotropic distance sqrt(sum_i (x_i - x2_i)**2 / beta_i**2)."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    if not x.size == x2.size == beta.size:
        raise UsageError(
            f"Dimension mismatch: x has {x.size}, x2 has {x2.size}, "
            f"beta has {beta.size} entries"
        )
    if np.any(beta <= 0):
        raise UsageError("Every beta must be > 0")
    return float(np.sqrt(np.sum(((x - x2) / beta) ** 2)))


def matern_correlation(r: ArrayLike, nu: float) -> np.ndarray:
    """Unit-variance Matérn correlation for a supported half-integer nu."""
    try:
        coeffs = _HALF_INTEGER_POLYNOMIALS[nu]
    except KeyError:
        raise UsageError(f"Unsupported smoothness nu={nu}") from None
    r = np.asarray(r, dtype=float)
    poly = np.zeros_like(r)
    for c in reversed(coeffs):
        poly = poly * r + c
    return poly * np.exp(-r)


def matern(r: ArrayLike, params: KernelParams) -> Union[float, np.ndarray]:
    """Matérn covariance at scaled distance r; the nugget is added at r == 0."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(np.isnan(r_arr)):
        raise UsageError("Distance r must be >= 0")
    value = params.sigma2 * matern_correlation(r_arr, params.nu)
    value = value + np.where(r_arr == 0.0, params.tau2, 0.0)
    if value.ndim == 0:
        return float(value)
    return value


def cov_matrix(
    A: ArrayLike, B: ArrayLike, params: KernelParams, same: bool = False
) -> np.ndarray:
    """Covariance matrix with entries matern(scaled_distance(A_i, B_j)).

    The nugget goes on the diagonal only when B is A (same object) or
    ``same`` is set; cross-covariances never include it. Same-set matrices
    are mirrored from their upper triangle so they are exactly symmetric.
    """
    same = same or A is B
    beta = params.beta_array
    a = _as_points(A, beta.size, "A") / beta
    if same:
        b = a
    else:
        b = _as_points(B, beta.size, "B") / beta
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))

    cov = params.sigma2 * matern_correlation(cdist(a, b), params.nu)
    if same:
        if a.shape[0] != b.shape[0]:
            raise UsageError("Same-set covariance requires equal point counts")
        cov = np.triu(cov) + np.triu(cov, 1).T
        cov[np.diag_indices_from(cov)] = params.sigma2 + params.tau2
    return cov
