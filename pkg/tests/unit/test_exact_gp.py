"""Tests for the dense exact GP oracle."""

import math

import numpy as np
import pytest

from sbvgp.core.exceptions import NumericalError, UsageError
from sbvgp.models.kernel import KernelParams
from sbvgp.services.exact_gp import (
    clamp_variances,
    exact_loglik,
    exact_predict,
    gp_simulate,
    simulate_dataset,
)
from sbvgp.services.kernel import cov_matrix
from sbvgp.services.linalg import cholesky_lower


@pytest.fixture
def unit_params() -> KernelParams:
    return KernelParams(sigma2=1.0, beta=[0.3], nu=1.5, tau2=0.0)


class TestExactLoglik:
    """Test cases for exact_loglik."""

    def test_scalar_at_zero(self, unit_params):
        value = exact_loglik(np.array([[0.5]]), np.array([0.0]), unit_params)
        assert value == pytest.approx(-0.5 * math.log(2 * math.pi))

    def test_scalar_at_one(self, unit_params):
        value = exact_loglik(np.array([[0.5]]), np.array([1.0]), unit_params)
        assert value == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5)

    def test_matches_explicit_inverse(self, rng, aniso_params):
        X = rng.random((50, 3))
        y = rng.standard_normal(50)
        cov = cov_matrix(X, X, aniso_params)
        _, logdet = np.linalg.slogdet(cov)
        expected = -0.5 * (
            50 * math.log(2 * math.pi) + logdet + y @ np.linalg.inv(cov) @ y
        )
        assert exact_loglik(X, y, aniso_params) == pytest.approx(expected, rel=1e-8)

    def test_duplicate_points_without_nugget_fail(self, unit_params):
        X = np.array([[0.2], [0.2], [0.7]])
        with pytest.raises(NumericalError) as info:
            exact_loglik(X, np.zeros(3), unit_params)
        assert info.value.pivot == 1

    def test_invariant_under_joint_permutation(self, rng, aniso_params):
        X = rng.random((60, 3))
        y = rng.standard_normal(60)
        perm = rng.permutation(60)
        assert exact_loglik(X[perm], y[perm], aniso_params) == pytest.approx(
            exact_loglik(X, y, aniso_params), rel=1e-10
        )

    def test_size_mismatch(self, unit_params):
        with pytest.raises(UsageError):
            exact_loglik(np.zeros((3, 1)), np.zeros(2), unit_params)


class TestExactPredict:
    """Test cases for exact_predict."""

    def test_interpolates_training_point(self, rng):
        params = KernelParams(sigma2=1.0, beta=[0.1, 0.1], nu=1.5, tau2=0.0)
        X = rng.random((20, 2))
        y = rng.standard_normal(20)
        mean, var = exact_predict(X, y, X[[4]], params)
        assert mean[0] == pytest.approx(y[4], abs=1e-6)
        assert var[0] == pytest.approx(0.0, abs=1e-6)

    def test_far_point_reverts_to_prior(self, rng, iso_params):
        X = rng.random((20, 2))
        y = rng.standard_normal(20)
        mean, var = exact_predict(X, y, np.array([[100.0, 100.0]]), iso_params)
        assert mean[0] == pytest.approx(0.0, abs=1e-12)
        assert var[0] == pytest.approx(iso_params.sigma2 + iso_params.tau2)

    def test_matches_explicit_inverse(self, rng, aniso_params):
        X, Xs = rng.random((30, 3)), rng.random((5, 3))
        y = rng.standard_normal(30)
        inv = np.linalg.inv(cov_matrix(X, X, aniso_params))
        cross = cov_matrix(X, Xs, aniso_params)
        prior = cov_matrix(Xs, Xs, aniso_params)
        mean, var = exact_predict(X, y, Xs, aniso_params)
        np.testing.assert_allclose(mean, cross.T @ inv @ y, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(
            var, np.diag(prior - cross.T @ inv @ cross), rtol=1e-8, atol=1e-10
        )


    def test_variance_shrinks_for_nested_designs(self, rng, aniso_params):
        """Adding training points never raises a predictive variance."""
        X = rng.random((80, 3))
        y = rng.standard_normal(80)
        Xs = rng.random((25, 3))
        previous = np.full(25, np.inf)
        for n in (5, 20, 40, 80):
            _, var = exact_predict(X[:n], y[:n], Xs, aniso_params)
            assert np.all(var <= previous + 1e-12)
            previous = var

class TestClampVariances:
    """Test cases for variance clamping."""

    def test_round_off_clamped(self):
        np.testing.assert_array_equal(
            clamp_variances(np.array([-1e-12, 0.5]), 1e-10), [0.0, 0.5]
        )

    def test_negative_rejected(self):
        with pytest.raises(NumericalError):
            clamp_variances(np.array([-1e-6]), 1e-10)


class TestSimulation:
    """Test cases for exact GP sampling."""

    def test_deterministic(self, rng, iso_params):
        X = rng.random((30, 2))
        np.testing.assert_array_equal(
            gp_simulate(X, iso_params, 7), gp_simulate(X, iso_params, 7)
        )

    def test_duplicates_share_values(self, unit_params):
        X = np.array([[0.1], [0.4], [0.1]])
        y = gp_simulate(X, unit_params, 1)
        assert y[0] == y[2]

    def test_moments(self, iso_params):
        """Sample variance of many single-point draws matches sigma2 + tau2."""
        point = np.array([[0.5, 0.5]])
        draws = [gp_simulate(point, iso_params, s)[0] for s in range(2000)]
        assert np.mean(draws) == pytest.approx(0.0, abs=0.1)
        assert np.var(draws) == pytest.approx(1.0, rel=0.1)

    def test_oversize_rejected(self, iso_params, test_settings):
        with pytest.raises(UsageError, match="not supported"):
            simulate_dataset(test_settings.exact_max_n + 1, 2, iso_params, 0)


class TestCholesky:
    """Test cases for the factorization helper."""

    def test_reports_pivot(self):
        matrix = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
        with pytest.raises(NumericalError) as info:
            cholesky_lower(matrix, block=4, stage="block")
        assert info.value.pivot == 2
        assert "block 4" in str(info.value)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("nu", [0.5, 3.5])
    def test_random_covariances_factor(self, seed, nu):
        """Kernel matrices with a nugget of at least 1e-8 are positive definite."""
        gen = np.random.default_rng(seed)
        n = int(gen.integers(2, 201))
        d = int(gen.integers(1, 6))
        params = KernelParams(
            sigma2=float(gen.uniform(0.1, 5.0)),
            beta=gen.uniform(0.05, 2.0, d).tolist(),
            nu=nu,
            tau2=1e-8,
        )
        X = gen.random((n, d))
        lower = cholesky_lower(cov_matrix(X, X, params))
        assert np.all(np.diagonal(lower) > 0)
