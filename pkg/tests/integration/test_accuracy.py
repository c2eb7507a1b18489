"""Statistical behavior of the approximation on simulated data.

The scenarios under ``scenarios/`` drive these checks: ten inputs of which
the first two are strongly relevant, Matern 7/2, nugget 1e-4.
"""

from pathlib import Path
from typing import Dict

import numpy as np
import pandas as pd
import pytest

from sbvgp.models.data import Dataset
from sbvgp.models.kernel import KernelParams
from sbvgp.models.run import BenchmarkScenario
from sbvgp.models.vecchia import Variant, VecchiaConfig
from sbvgp.services.benchmark import benchmark_service
from sbvgp.services.estimate import estimation_service
from sbvgp.services.exact_gp import simulate_dataset
from sbvgp.services.io import dataset_store
from sbvgp.services.sampling import design_points, make_rng, standard_normals
from sbvgp.services.vecchia import conditional_simulate, preprocess, vecchia_predict

pytestmark = [pytest.mark.integration, pytest.mark.slow]

SCENARIOS = Path(__file__).resolve().parents[2] / "scenarios"


def load_scenario(name: str) -> BenchmarkScenario:
    return dataset_store.read_config(SCENARIOS / f"{name}.conf", BenchmarkScenario)


def split(X: np.ndarray, y: np.ndarray, n: int):
    return (
        Dataset(points=X[:n], responses=y[:n]),
        Dataset(points=X[n:], responses=y[n:]),
    )


@pytest.fixture(scope="module")
def variant_table() -> pd.DataFrame:
    """KL and MSPE of every variant for m in 10..120 over five seeds."""
    scenario = load_scenario("variants")
    assert scenario.seeds == [0, 1, 2, 3, 4]
    return benchmark_service.run_variants(scenario)


def medians(table: pd.DataFrame, column: str, m: int) -> Dict[str, float]:
    cells = table[table["m"] == m]
    return cells.groupby("variant")[column].median().to_dict()


class TestVariantAccuracy:
    """Test cases for accuracy differences between the variants."""

    def test_scaled_blocks_beat_unscaled_kl(self, variant_table):
        kl = medians(variant_table, "kl", 60)
        assert kl["SBV"] < kl["CV"]
        assert kl["SBV"] < kl["BV"]

    def test_scaled_blocks_beat_classic_mspe(self, variant_table):
        mspe = medians(variant_table, "mspe", 60)
        assert mspe["SBV"] < mspe["CV"]

    def test_kl_nonnegative(self, variant_table):
        assert (variant_table["kl"] >= -1e-6).all()

    def test_kl_shrinks_with_more_neighbors(self, variant_table):
        sbv = variant_table[variant_table["variant"] == "SBV"]
        by_m = sbv.groupby("m")["kl"].median().sort_index()
        assert list(by_m.index) == [10, 30, 60, 120]
        values = by_m.to_numpy()
        assert np.all(values[1:] <= values[:-1] + 1e-6)
        assert values[-1] < values[0]


class TestPredictionIntervals:
    """Test cases for interval calibration at the true parameters."""

    def test_coverage_near_nominal(self):
        scenario = load_scenario("variants")
        params = scenario.kernel_params()
        config = VecchiaConfig(bs_est=10, bs_pred=10, m_est=60, m_pred=60)
        coverage = []
        for seed in range(3):
            X, y = simulate_dataset(4000, scenario.d, params, seed=seed)
            train, test = split(X, y, 2000)
            mean, variance = vecchia_predict(train, test, config, params)
            _, _, lo, hi = conditional_simulate(mean, variance, 1000, seed=seed)
            inside = (test.responses >= lo) & (test.responses <= hi)
            coverage.append(float(inside.mean()))
        assert 0.92 <= float(np.median(coverage)) <= 0.97


class TestClustering:
    """Test cases for random anchor clustering against K-means."""

    def test_gap_shrinks_with_more_neighbors(self):
        scenario = load_scenario("clustering").model_copy(
            update={"m_values": [10, 120]}
        )
        table = benchmark_service.run_clustering(scenario)
        assert len(table) == 2 * len(scenario.anchor_seeds)
        gap = table.groupby("m")["relative_error"].median()
        assert gap[120] < gap[10]


class TestRelevanceRecovery:
    """Test cases for fitted relevance ordering."""

    def test_relevant_inputs_separate(self):
        scenario = load_scenario("relevance")
        table = benchmark_service.run_fit(scenario)
        relevance = table[[f"relevance_{j + 1}" for j in range(scenario.d)]]
        values = relevance.to_numpy()
        separated = values[:, :2].min(axis=1) >= 10.0 * values[:, 2:].max(axis=1)
        assert int(separated.sum()) >= 4


class TestOneDimensionalFit:
    """Test cases for range recovery on a single input."""

    def test_range_within_factor_two(self):
        truth = KernelParams(sigma2=1.0, beta=[0.1], nu=3.5, tau2=1e-4)
        config = VecchiaConfig(bs_est=10, m_est=60)
        fitted = []
        for seed in range(5):
            X, y = simulate_dataset(2000, 1, truth, seed=seed)
            result = estimation_service.mle_fit(
                Dataset(points=X, responses=y),
                config,
                init=KernelParams.default(1, nu=3.5),
                max_evals=300,
            )
            fitted.append(result.theta_hat.beta[0])
        assert 0.05 <= float(np.median(fitted)) <= 0.2

    def test_warm_start_isotropic_truth(self):
        truth = KernelParams(sigma2=1.0, beta=[0.3, 0.3, 0.3], nu=2.5, tau2=1e-3)
        X, y = simulate_dataset(1500, 3, truth, seed=21)
        warm = estimation_service.warm_start_beta(
            Dataset(points=X, responses=y),
            500,
            VecchiaConfig(m_est=30),
            init=KernelParams.default(3, nu=2.5),
            max_evals=300,
        )
        beta = np.asarray(warm.beta)
        assert np.all(beta >= 0.1)
        assert np.all(beta <= 0.9)


class TestComplexity:
    """Test cases for the cost model and measured run time."""

    def test_flops_linear_in_n(self):
        params = KernelParams(sigma2=1.0, beta=[0.05, 0.5, 5.0], nu=2.5, tau2=1e-4)
        config = VecchiaConfig(bs_est=8, m_est=20)
        flops = []
        for n in (1000, 2000):
            data = Dataset(points=design_points(n, 3, 16), responses=np.zeros(n))
            flops.append(preprocess(data, config, params).stats["flops"])
        assert 1.6 < flops[1] / flops[0] < 2.5

    def test_evaluation_time(self):
        """SBV beats SV at equal m, and its time roughly doubles with n."""
        scenario = load_scenario("runtime")
        params = scenario.kernel_params()
        m, bs = scenario.m_values[0], scenario.bs_values[0]
        base = scenario.vecchia_config()
        small, large = scenario.n_values

        def timed(n: int, variant: Variant, block_size: int) -> float:
            data = Dataset(
                points=design_points(n, scenario.d, 0),
                responses=standard_normals(make_rng(0, 1), n),
            )
            config = base.with_updates(variant=variant, bs_est=block_size, m_est=m)
            timing = benchmark_service.time_evaluation(data, config, params, 3)
            return timing["eval_seconds"]

        sbv_small = timed(small, Variant.SBV, bs)
        sbv_large = timed(large, Variant.SBV, bs)
        sv_small = timed(small, Variant.SV, 1)
        assert sbv_small < sv_small
        assert 1.6 <= sbv_large / sbv_small <= 2.6
