"""Pytest configuration and fixtures for SBVGP tests."""

import os
import tempfile
from pathlib import Path
from typing import Generator

import numpy as np
import pytest

from sbvgp.core.config import Settings
from sbvgp.models.data import Dataset
from sbvgp.models.kernel import KernelParams
from sbvgp.services.exact_gp import simulate_dataset


@pytest.fixture(scope="session")
def test_settings() -> Generator[Settings, None, None]:
    """Create test settings with a temporary output directory."""
    with tempfile.TemporaryDirectory() as temp_dir:
        test_env = {
            "SBVGP_OUTPUT_DIR": str(Path(temp_dir) / "output"),
            "SBVGP_LOG_LEVEL": "DEBUG",
        }

        # Set environment variables
        for key, value in test_env.items():
            os.environ[key] = value

        settings = Settings()
        yield settings

        # Clean up environment variables
        for key in test_env:
            os.environ.pop(key, None)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for random test instances."""
    return np.random.default_rng(20240611)


@pytest.fixture
def iso_params() -> KernelParams:
    """Isotropic 2-d Matern 3/2 parameters with a small nugget."""
    return KernelParams(sigma2=1.0, beta=[0.2, 0.2], nu=1.5, tau2=1e-3)


@pytest.fixture
def aniso_params() -> KernelParams:
    """Anisotropic 3-d Matern 5/2 parameters, first input most relevant."""
    return KernelParams(sigma2=1.5, beta=[0.1, 0.4, 2.0], nu=2.5, tau2=1e-3)


@pytest.fixture
def small_dataset(iso_params: KernelParams) -> Dataset:
    """120 simulated points on the unit square."""
    X, y = simulate_dataset(120, 2, iso_params, seed=3)
    return Dataset(points=X, responses=y)


@pytest.fixture
def aniso_dataset(aniso_params: KernelParams) -> Dataset:
    """300 simulated points on the unit cube with anisotropic ranges."""
    X, y = simulate_dataset(300, 3, aniso_params, seed=5)
    return Dataset(points=X, responses=y)


@pytest.fixture
def synthetic_params() -> KernelParams:
    """Ten inputs, only the first two relevant."""
    return KernelParams(
        sigma2=1.0, beta=[0.05, 0.05] + [5.0] * 8, nu=3.5, tau2=1e-4
    )
