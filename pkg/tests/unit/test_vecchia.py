"""Tests for the blockwise Vecchia likelihood, prediction and simulation."""

import math
from typing import List

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from sbvgp.core.config import settings
from sbvgp.core.exceptions import NumericalError, UsageError
from sbvgp.models.data import Dataset, NeighborSets
from sbvgp.models.kernel import KernelParams
from sbvgp.models.vecchia import BlockBatchEntry, Variant, VecchiaConfig
from sbvgp.services.distsim import WorkerGroup
from sbvgp.services.exact_gp import exact_loglik, exact_predict, simulate_dataset
from sbvgp.services.kernel import cov_matrix
from sbvgp.services.linalg import stacked_forward_solve
from sbvgp.services.vecchia import (
    Preprocessing,
    assemble_batches,
    batched_condition,
    batched_loglik,
    block_condition,
    block_loglik,
    budget_slices,
    conditional_simulate,
    cost_estimate,
    preprocess,
    vecchia_loglik,
    vecchia_predict,
)

pytestmark = pytest.mark.unit


def scalar_entry(y: float, cov: float = 1.0) -> BlockBatchEntry:
    return BlockBatchEntry(
        block=0,
        cov_block=np.array([[cov]]),
        cov_cond=np.zeros((0, 0)),
        cov_cross=np.zeros((0, 1)),
        y_block=np.array([y]),
        y_cond=np.zeros(0),
    )


def random_entries(rng: np.random.Generator, count: int) -> List[BlockBatchEntry]:
    """Entries of two shapes, (bs, m) = (3, 0) and (2, 3), interleaved."""
    params = KernelParams(sigma2=1.0, beta=[0.3, 0.3], nu=2.5, tau2=1e-3)
    entries = []
    for i in range(count):
        bs, m = (2, 3) if i % 2 else (3, 0)
        X = rng.random((bs + m, 2))
        K = cov_matrix(X, X, params, same=True)
        y = rng.standard_normal(bs + m)
        entries.append(
            BlockBatchEntry(
                block=i,
                cov_block=K[:bs, :bs],
                cov_cond=K[bs:, bs:],
                cov_cross=K[bs:, :bs],
                y_block=y[:bs],
                y_cond=y[bs:],
            )
        )
    return entries


class TestBlockLoglik:
    """Test cases for single-block terms."""

    def test_empty_neighbors_standard_normal(self):
        assert block_loglik(scalar_entry(0.0)) == pytest.approx(
            -0.5 * math.log(2 * math.pi)
        )

    def test_batched_matches_single(self, rng):
        entries = random_entries(rng, 12)
        batched = batched_loglik(entries)
        single = [block_loglik(e) for e in entries]
        np.testing.assert_allclose(batched, single, rtol=1e-10)

    def test_batched_condition_matches_single(self, rng):
        entries = random_entries(rng, 9)
        for entry, (mean, var) in zip(entries, batched_condition(entries)):
            mu, cov = block_condition(entry)
            np.testing.assert_allclose(mean, mu, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(var, np.diagonal(cov), rtol=1e-10, atol=1e-12)

    def test_stacked_solve_is_triangular(self, rng):
        lower = np.tril(rng.random((4, 5, 5))) + 2.0 * np.eye(5)
        rhs = rng.standard_normal((4, 5, 3))
        solved = stacked_forward_solve(lower, rhs)
        np.testing.assert_allclose(lower @ solved, rhs, atol=1e-12)
        np.testing.assert_allclose(
            solved[..., 0], stacked_forward_solve(lower, rhs[..., 0]), atol=1e-12
        )

    def test_failure_names_block_and_stage(self):
        entry = BlockBatchEntry(
            block=7,
            cov_block=np.eye(1),
            cov_cond=np.ones((2, 2)),
            cov_cross=np.ones((2, 1)),
            y_block=np.zeros(1),
            y_cond=np.zeros(2),
        )
        with pytest.raises(NumericalError) as info:
            batched_loglik([entry])
        assert info.value.block == 7
        assert info.value.stage == "conditioning"


class TestAssembleBatches:
    """Test cases for covariance triplet assembly."""

    def test_matches_submatrices(self, small_dataset, iso_params):
        prep = preprocess(
            small_dataset, VecchiaConfig(bs_est=4, m_est=6), iso_params
        )
        entries = assemble_batches(
            small_dataset, prep.partition, prep.neighbors, iso_params
        )
        full = cov_matrix(small_dataset.points, small_dataset.points, iso_params)
        for entry in entries:
            rows = prep.partition.blocks[entry.block]
            nb = prep.neighbors.neighbors[entry.block]
            assert entry.cov_cross.shape == (nb.size, rows.size)
            np.testing.assert_allclose(entry.cov_block, full[np.ix_(rows, rows)])
            np.testing.assert_allclose(entry.cov_cond, full[np.ix_(nb, nb)])
            np.testing.assert_allclose(entry.cov_cross, full[np.ix_(nb, rows)])

    def test_first_block_has_marginal_term_only(self, small_dataset, iso_params):
        prep = preprocess(
            small_dataset, VecchiaConfig(bs_est=4, m_est=6), iso_params
        )
        first = int(prep.partition.order[0])
        (entry,) = assemble_batches(
            small_dataset, prep.partition, prep.neighbors, iso_params, [first]
        )
        assert entry.m == 0
        assert entry.cov_cross.shape == (0, entry.bs)


class TestVecchiaLoglik:
    """Test cases for the approximate log-likelihood."""

    def test_dense_conditional_oracle(self, rng):
        """Every block term equals an explicit-inverse Gaussian conditional."""
        params = KernelParams(sigma2=1.0, beta=[0.2, 0.5], nu=2.5, tau2=1e-3)
        X, y = simulate_dataset(40, 2, params, seed=11)
        data = Dataset(points=X, responses=y)
        config = VecchiaConfig(bs_est=5, m_est=10)
        prep = preprocess(data, config, params)
        expected = 0.0
        for rows, nb in zip(prep.partition.blocks, prep.neighbors.neighbors):
            kbb = cov_matrix(X[rows], X[rows], params, same=True)
            if nb.size:
                inv = np.linalg.inv(cov_matrix(X[nb], X[nb], params, same=True))
                kbn = cov_matrix(X[rows], X[nb], params)
                mean = kbn @ inv @ y[nb]
                cov = kbb - kbn @ inv @ kbn.T
            else:
                mean, cov = np.zeros(rows.size), kbb
            expected += multivariate_normal(mean, cov).logpdf(y[rows])
        value = vecchia_loglik(data, config, params, prep=prep)
        assert value == pytest.approx(expected, rel=1e-8)

    def test_single_block_is_exact(self, small_dataset, iso_params):
        config = VecchiaConfig(bs_est=small_dataset.n, m_est=5)
        value = vecchia_loglik(small_dataset, config, iso_params)
        exact = exact_loglik(
            small_dataset.points, small_dataset.responses, iso_params
        )
        assert value == pytest.approx(exact, rel=1e-8)

    @pytest.mark.parametrize("bs,seed", [(1, 0), (3, 4), (10, 9)])
    def test_full_conditioning_recovers_exact(
        self, aniso_dataset, aniso_params, bs, seed
    ):
        config = VecchiaConfig(
            bs_est=bs, m_est=aniso_dataset.n, cluster_seed=seed, order_seed=seed + 1
        )
        value = vecchia_loglik(aniso_dataset, config, aniso_params)
        exact = exact_loglik(
            aniso_dataset.points, aniso_dataset.responses, aniso_params
        )
        assert value == pytest.approx(exact, rel=1e-8)

    def test_union_of_earlier_blocks_telescopes(self, small_dataset, iso_params):
        """Conditioning on every earlier point is the Gaussian chain rule."""
        config = VecchiaConfig(bs_est=6, m_est=0)
        prep = preprocess(small_dataset, config, iso_params)
        ranks = prep.partition.point_ranks(small_dataset.n)
        union = NeighborSets(
            [np.flatnonzero(ranks < r) for r in prep.partition.rank]
        )
        chained = Preprocessing(prep.partition, prep.scaled, union, prep.beta)
        value = vecchia_loglik(small_dataset, config, iso_params, prep=chained)
        exact = exact_loglik(
            small_dataset.points, small_dataset.responses, iso_params
        )
        assert value == pytest.approx(exact, rel=1e-8)

    def test_bit_identical_across_worker_counts(self, aniso_dataset, aniso_params):
        config = VecchiaConfig(bs_est=5, m_est=20, workers=2)
        prep = preprocess(aniso_dataset, config, aniso_params)
        values = {
            vecchia_loglik(
                aniso_dataset, config, aniso_params, prep=prep, group=WorkerGroup(P)
            )
            for P in (1, 2, 4)
        }
        assert len(values) == 1

    def test_deterministic_across_runs(self, aniso_dataset, aniso_params):
        config = VecchiaConfig(bs_est=5, m_est=20, workers=3)
        first = preprocess(aniso_dataset, config, aniso_params)
        second = preprocess(aniso_dataset, config, aniso_params)
        assert first.fingerprint == second.fingerprint
        assert vecchia_loglik(
            aniso_dataset, config, aniso_params, prep=first
        ) == vecchia_loglik(aniso_dataset, config, aniso_params, prep=second)

    def test_threads_match_sequential(self, aniso_dataset, aniso_params):
        config = VecchiaConfig(bs_est=5, m_est=15, workers=3)
        prep = preprocess(aniso_dataset, config, aniso_params)
        seq = vecchia_loglik(
            aniso_dataset,
            config,
            aniso_params,
            prep=prep,
            group=WorkerGroup(3, executor="sequential"),
        )
        thr = vecchia_loglik(
            aniso_dataset,
            config,
            aniso_params,
            prep=prep,
            group=WorkerGroup(3, executor="threads"),
        )
        assert seq == thr

    def test_memory_budget_does_not_change_value(
        self, aniso_dataset, aniso_params, monkeypatch
    ):
        """Evaluating in many small runs gives the same sum as one run."""
        config = VecchiaConfig(bs_est=5, m_est=20)
        prep = preprocess(aniso_dataset, config, aniso_params)
        whole = vecchia_loglik(aniso_dataset, config, aniso_params, prep=prep)
        monkeypatch.setattr(settings, "batch_memory_mb", 0.01)
        counts = [nb.size for nb in prep.neighbors.neighbors]
        assert len(list(budget_slices(prep.partition.sizes, counts))) > 1
        sliced = vecchia_loglik(aniso_dataset, config, aniso_params, prep=prep)
        assert sliced == whole

    def test_block_size_one_equals_scaled_point_variant(
        self, aniso_dataset, aniso_params
    ):
        sbv = VecchiaConfig(variant=Variant.SBV, bs_est=1, m_est=15)
        sv = VecchiaConfig(variant=Variant.SV, m_est=15)
        assert vecchia_loglik(aniso_dataset, sbv, aniso_params) == vecchia_loglik(
            aniso_dataset, sv, aniso_params
        )

    def test_equal_ranges_equal_block_variant(self, small_dataset):
        """Uniform ranges make scaling a relabeling of the geometry."""
        params = KernelParams(sigma2=1.0, beta=[0.25, 0.25], nu=1.5, tau2=1e-3)
        sbv = VecchiaConfig(variant=Variant.SBV, bs_est=4, m_est=10)
        bv = sbv.with_updates(variant=Variant.BV)
        sbv_prep = preprocess(small_dataset, sbv, params)
        bv_prep = preprocess(small_dataset, bv, params)
        for a, b in zip(sbv_prep.neighbors.neighbors, bv_prep.neighbors.neighbors):
            np.testing.assert_array_equal(a, b)
        assert vecchia_loglik(small_dataset, sbv, params) == vecchia_loglik(
            small_dataset, bv, params
        )

    def test_preprocessing_size_mismatch(self, small_dataset, iso_params):
        prep = preprocess(small_dataset, VecchiaConfig(m_est=5), iso_params)
        with pytest.raises(UsageError):
            vecchia_loglik(
                small_dataset.subset(np.arange(50)),
                VecchiaConfig(m_est=5),
                iso_params,
                prep=prep,
            )

    def test_stats_reported(self, small_dataset, iso_params):
        prep = preprocess(
            small_dataset, VecchiaConfig(bs_est=4, m_est=6, workers=2), iso_params
        )
        assert prep.stats["n_blocks"] == prep.partition.n_blocks
        assert prep.stats["flops"] > 0
        assert prep.stats["payloads_sent"] > 0
        assert 0.0 <= prep.stats["escalation_free_share"] <= 1.0


class TestCostEstimate:
    """Test cases for the cost model."""

    def test_singleton_without_neighbors(self):
        flops, peak = cost_estimate([1], [0])
        assert flops == pytest.approx(1 / 3)
        assert peak == 8

    def test_grows_with_neighbors(self):
        assert cost_estimate([5] * 10, [30] * 10)[0] < cost_estimate(
            [5] * 10, [60] * 10
        )[0]


class TestVecchiaPredict:
    """Test cases for blockwise prediction."""

    def test_full_conditioning_matches_exact(self, rng, aniso_dataset, aniso_params):
        test = Dataset(points=rng.random((25, 3)), responses=np.zeros(25))
        config = VecchiaConfig(bs_est=5, bs_pred=4, m_pred=aniso_dataset.n)
        mean, var = vecchia_predict(aniso_dataset, test, config, aniso_params)
        exact_mean, exact_var = exact_predict(
            aniso_dataset.points, aniso_dataset.responses, test.points, aniso_params
        )
        np.testing.assert_allclose(mean, exact_mean, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(var, exact_var, rtol=1e-8, atol=1e-9)

    def test_interpolates_training_point(self):
        params = KernelParams(sigma2=1.0, beta=[0.1, 0.1], nu=1.5, tau2=0.0)
        X, y = simulate_dataset(30, 2, params, seed=2)
        train = Dataset(points=X, responses=y)
        test = Dataset(points=X[[3]], responses=np.zeros(1))
        config = VecchiaConfig(bs_est=3, bs_pred=1, m_pred=10)
        mean, var = vecchia_predict(train, test, config, params)
        assert mean[0] == pytest.approx(y[3], abs=1e-6)
        assert var[0] == pytest.approx(0.0, abs=1e-6)

    def test_reuses_preprocessing(self, rng, small_dataset, iso_params):
        test = Dataset(points=rng.random((10, 2)), responses=np.zeros(10))
        config = VecchiaConfig(bs_est=4, bs_pred=2, m_pred=8)
        prep = preprocess(small_dataset, config, iso_params)
        with_prep = vecchia_predict(small_dataset, test, config, iso_params, prep)
        without = vecchia_predict(small_dataset, test, config, iso_params)
        np.testing.assert_array_equal(with_prep[0], without[0])
        np.testing.assert_array_equal(with_prep[1], without[1])

    def test_memory_budget_does_not_change_prediction(
        self, rng, small_dataset, iso_params, monkeypatch
    ):
        test = Dataset(points=rng.random((30, 2)), responses=np.zeros(30))
        config = VecchiaConfig(bs_est=4, bs_pred=3, m_pred=10)
        whole = vecchia_predict(small_dataset, test, config, iso_params)
        monkeypatch.setattr(settings, "batch_memory_mb", 0.002)
        sliced = vecchia_predict(small_dataset, test, config, iso_params)
        np.testing.assert_array_equal(sliced[0], whole[0])
        np.testing.assert_array_equal(sliced[1], whole[1])

    def test_points_outside_training_box(self, small_dataset, iso_params):
        test = Dataset(points=np.array([[1.5, -0.2]]), responses=np.zeros(1))
        mean, var = vecchia_predict(
            small_dataset, test, VecchiaConfig(m_pred=5), iso_params
        )
        assert var[0] > 0

    def test_dimension_mismatch(self, small_dataset, iso_params):
        test = Dataset(points=np.zeros((2, 3)), responses=np.zeros(2))
        with pytest.raises(UsageError):
            vecchia_predict(small_dataset, test, VecchiaConfig(), iso_params)


class TestConditionalSimulate:
    """Test cases for simulation-based intervals."""

    def test_zero_variance_degenerate_interval(self):
        mean = np.array([0.3, -2.0])
        sim_mean, sim_sd, lo, hi = conditional_simulate(mean, np.zeros(2))
        np.testing.assert_allclose(sim_mean, mean)
        np.testing.assert_allclose(sim_sd, 0.0, atol=1e-15)
        np.testing.assert_allclose(lo, mean)
        np.testing.assert_allclose(hi, mean)

    def test_law_of_large_numbers(self):
        n_sim = 100_000
        sim_mean, sim_sd, _, _ = conditional_simulate(
            np.array([1.5]), np.array([4.0]), n_sim=n_sim, seed=3
        )
        assert abs(sim_mean[0] - 1.5) < 3 * 2.0 / math.sqrt(n_sim)
        assert abs(sim_sd[0] ** 2 - 4.0) < 3 * 4.0 * math.sqrt(2.0 / (n_sim - 1))

    def test_interval_uses_normal_quantile(self):
        _, sim_sd, lo, hi = conditional_simulate(
            np.zeros(3), np.ones(3), ci_level=0.95
        )
        np.testing.assert_allclose((hi - lo) / (2 * sim_sd), 1.959964, rtol=1e-6)

    def test_deterministic(self):
        first = conditional_simulate(np.zeros(5), np.ones(5), seed=8)
        second = conditional_simulate(np.zeros(5), np.ones(5), seed=8)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_negative_variance_rejected(self):
        with pytest.raises(UsageError):
            conditional_simulate(np.zeros(1), np.array([-1.0]))

    def test_too_few_draws(self):
        with pytest.raises(UsageError):
            conditional_simulate(np.zeros(1), np.ones(1), n_sim=1)


class TestBudgetSlices:
    """Test cases for memory-bounded block runs."""

    def test_covers_blocks_in_order(self, monkeypatch):
        monkeypatch.setattr(settings, "batch_memory_mb", 1.0)
        sizes = np.full(50, 10)
        counts = np.full(50, 100)
        parts = list(budget_slices(sizes, counts))
        per_block = 8 * (10 * 10 + 100 * 100 + 10 * 100)
        assert len(parts) > 1
        assert parts[0].start == 0 and parts[-1].stop == 50
        for a, b in zip(parts, parts[1:]):
            assert a.stop == b.start
        for part in parts:
            assert (part.stop - part.start) * per_block <= 2**20

    def test_oversize_block_runs_alone(self, monkeypatch):
        monkeypatch.setattr(settings, "batch_memory_mb", 0.001)
        parts = list(budget_slices([50, 50, 50], [200, 200, 200]))
        assert [(p.start, p.stop) for p in parts] == [(0, 1), (1, 2), (2, 3)]

    def test_empty(self):
        assert list(budget_slices([], [])) == []
