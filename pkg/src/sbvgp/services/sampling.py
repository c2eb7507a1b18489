"""Seeded, portable random streams.

Uniforms come from numpy's PCG64 bit generator (platform independent); normal
variates are produced by inverse-CDF transformation of those uniforms with
``scipy.special.ndtri``, so a seed reproduces the same normal stream on
every platform.
"""

from typing import Union

import numpy as np
from scipy.special import ndtri

_EPS = 2.0**-53


def make_rng(*keys: int) -> np.random.Generator:
    """Generator keyed by a tuple of integers, e.g. (seed, worker, block)."""
    seq = np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys] or [0])
    return np.random.Generator(np.random.PCG64(seq))


def standard_normals(
    rng: Union[np.random.Generator, int], size: Union[int, tuple]
) -> np.ndarray:
    """Inverse-CDF standard normal draws."""
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    u = rng.random(size)
    return ndtri(np.clip(u, _EPS, 1.0 - _EPS))


def normal_quantile(p: float) -> float:
    """Standard normal quantile, e.g. 0.975 -> 1.959964."""
    return float(ndtri(p))


def design_points(n: int, d: int, seed: int) -> np.ndarray:
    """Uniform design on [0, 1]^d."""
    return make_rng(seed, 0).random((n, d))
