"""Desk-scale accuracy and runtime sweeps over the Vecchia variants."""

import time
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd
from scipy.cluster.vq import kmeans2

from ..core.exceptions import UsageError
from ..core.logging import get_logger
from ..models.data import BlockPartition, Dataset
from ..models.kernel import KernelParams
from ..models.run import BenchmarkScenario
from ..models.vecchia import Variant, VecchiaConfig
from .distsim import WorkerGroup
from .estimate import estimation_service
from .exact_gp import simulate_dataset
from .io import dataset_store
from .nns import filtered_knn_all
from .partition import anchor_count, block_geometry, reorder_blocks, scale_inputs
from .sampling import design_points, make_rng, standard_normals
from .vecchia import Preprocessing, preprocess, vecchia_loglik, vecchia_predict

logger = get_logger(__name__)


def kmeans_partition(
    points: np.ndarray, k: int, seed: int, order_seed: int
) -> BlockPartition:
    """Reference K-means blocks on scaled points, randomly ordered.

    Empty clusters are dropped.
    """
    _, labels = kmeans2(points, k, minit="++", seed=seed)
    blocks = [np.flatnonzero(labels == c) for c in range(k)]
    blocks = [b for b in blocks if b.size]
    centers, radii = block_geometry(points, blocks)
    return reorder_blocks(
        BlockPartition(
            blocks=blocks,
            centers=centers,
            order=np.arange(len(blocks)),
            workers=np.zeros(len(blocks), dtype=np.int64),
            radii=radii,
        ),
        order_seed,
    )


class BenchmarkService:
    """Runs benchmark scenarios and emits plot-ready metric tables."""

    def simulate(
        self, scenario: BenchmarkScenario, seed: int
    ) -> Tuple[Dataset, Dataset]:
        """Train and held-out data from the scenario's generating process."""
        params = scenario.kernel_params()
        X, y = simulate_dataset(scenario.n + scenario.n_test, scenario.d, params, seed)
        train = Dataset(points=X[: scenario.n], responses=y[: scenario.n])
        test = Dataset(points=X[scenario.n :], responses=y[scenario.n :])
        return train, test

    def _accuracy_row(
        self,
        train: Dataset,
        test: Dataset,
        config: VecchiaConfig,
        params: KernelParams,
    ) -> Dict[str, Any]:
        group = WorkerGroup(config.workers)
        started = time.perf_counter()
        zeros = train.with_responses(np.zeros(train.n))
        prep = preprocess(zeros, config, params, group)
        preprocess_seconds = time.perf_counter() - started

        started = time.perf_counter()
        vecchia_loglik(zeros, config, params, prep=prep, group=group)
        eval_seconds = time.perf_counter() - started
        kl = estimation_service.kl_divergence(train.points, params, config, prep=prep)

        row: Dict[str, Any] = {
            "kl": kl,
            "mspe": np.nan,
            "preprocess_seconds": preprocess_seconds,
            "eval_seconds": eval_seconds,
            "escalations": prep.stats["escalations"],
            "flops": prep.stats["flops"],
        }
        if test.n:
            mean, _ = vecchia_predict(
                train, test, config, params, prep=prep, group=group
            )
            row["mspe"] = estimation_service.mspe(mean, test.responses)
        return row

    def run_variants(self, scenario: BenchmarkScenario) -> pd.DataFrame:
        """KL and MSPE at the true parameters for every variant, m and seed."""
        params = scenario.kernel_params()
        base = scenario.vecchia_config()
        bs = scenario.bs_values[0]
        rows = []
        for seed in scenario.seeds:
            train, test = self.simulate(scenario, seed)
            for variant in scenario.variants:
                block_size = bs if variant.is_block else 1
                for m in scenario.m_values:
                    config = base.with_updates(
                        variant=variant,
                        bs_est=block_size,
                        bs_pred=block_size,
                        m_est=m,
                        m_pred=m,
                    )
                    row = {"variant": variant.value, "m": m, "bs": block_size}
                    row["seed"] = seed
                    row.update(self._accuracy_row(train, test, config, params))
                    rows.append(row)
                    logger.info(f"variants cell {row}")
        return pd.DataFrame(rows)

    def run_block_size(self, scenario: BenchmarkScenario) -> pd.DataFrame:
        """SBV accuracy across block sizes and neighbor counts."""
        params = scenario.kernel_params()
        base = scenario.vecchia_config().with_updates(variant=Variant.SBV)
        rows = []
        for seed in scenario.seeds:
            train, test = self.simulate(scenario, seed)
            for bs in scenario.bs_values:
                for m in scenario.m_values:
                    config = base.with_updates(bs_est=bs, bs_pred=bs, m_est=m, m_pred=m)
                    row = {"variant": "SBV", "m": m, "bs": bs, "seed": seed}
                    row.update(self._accuracy_row(train, test, config, params))
                    rows.append(row)
        return pd.DataFrame(rows)

    def run_clustering(self, scenario: BenchmarkScenario) -> pd.DataFrame:
        """Relative log-likelihood gap between RAC and K-means blocks."""
        params = scenario.kernel_params()
        base = scenario.vecchia_config().with_updates(variant=Variant.SBV)
        bs = scenario.bs_values[0]
        rows = []
        for seed in scenario.seeds:
            train, _ = self.simulate(scenario, seed)
            scaled = scale_inputs(train, params.beta)
            k = anchor_count(train.n, bs)
            km_part = kmeans_partition(scaled.points, k, seed, base.order_seed)
            for m in scenario.m_values:
                km_neighbors = filtered_knn_all(
                    scaled, km_part, m, base.alpha, WorkerGroup(1)
                )
                km_prep = Preprocessing(
                    km_part, scaled, km_neighbors, params.beta_array
                )
                config = base.with_updates(bs_est=bs, m_est=m)
                km_loglik = vecchia_loglik(train, config, params, prep=km_prep)
                for anchor_seed in scenario.anchor_seeds:
                    rac = config.with_updates(cluster_seed=anchor_seed)
                    rac_loglik = vecchia_loglik(train, rac, params)
                    rows.append(
                        {
                            "m": m,
                            "bs": bs,
                            "seed": seed,
                            "anchor_seed": anchor_seed,
                            "loglik_rac": rac_loglik,
                            "loglik_kmeans": km_loglik,
                            "relative_error": abs(rac_loglik - km_loglik)
                            / abs(km_loglik),
                        }
                    )
        return pd.DataFrame(rows)

    def run_fit(self, scenario: BenchmarkScenario) -> pd.DataFrame:
        """Fitted relevance of SBV per seed."""
        config = scenario.vecchia_config().with_updates(variant=Variant.SBV)
        init = KernelParams.default(scenario.d, nu=scenario.nu)
        rows = []
        for seed in scenario.seeds:
            train, _ = self.simulate(scenario, seed)
            result = estimation_service.mle_fit(
                train,
                config,
                scenario.bounds(),
                init,
                scenario.max_evals,
                scenario.refit_preprocess,
            )
            row: Dict[str, Any] = {"seed": seed, "loglik": result.loglik}
            row.update(
                {f"relevance_{j + 1}": r for j, r in enumerate(result.relevance)}
            )
            row["iterations"] = result.iterations
            row["wall_time"] = result.wall_time
            rows.append(row)
        return pd.DataFrame(rows)

    def time_evaluation(
        self,
        dataset: Dataset,
        config: VecchiaConfig,
        params: KernelParams,
        repeats: int = 1,
    ) -> Dict[str, Any]:
        """Seconds for preprocessing and for one likelihood evaluation.

        The evaluation time is the fastest of ``repeats`` runs.
        """
        group = WorkerGroup(config.workers)
        started = time.perf_counter()
        prep = preprocess(dataset, config, params, group)
        preprocess_seconds = time.perf_counter() - started
        timings = []
        for _ in range(max(1, repeats)):
            started = time.perf_counter()
            vecchia_loglik(dataset, config, params, prep=prep, group=group)
            timings.append(time.perf_counter() - started)
        return {
            "preprocess_seconds": preprocess_seconds,
            "eval_seconds": min(timings),
            "flops": prep.stats["flops"],
            "escalations": prep.stats["escalations"],
        }

    def run_runtime(self, scenario: BenchmarkScenario) -> pd.DataFrame:
        """Wall time per variant as n grows.

        Designs are uniform with standard normal responses, so sizes beyond
        the exact simulator's limit are allowed.
        """
        params = scenario.kernel_params()
        base = scenario.vecchia_config()
        bs = scenario.bs_values[0]
        rows = []
        for seed in scenario.seeds:
            for n in scenario.n_values or [scenario.n]:
                data = Dataset(
                    points=design_points(n, scenario.d, seed),
                    responses=standard_normals(make_rng(seed, 1), n),
                )
                for variant in scenario.variants:
                    block_size = bs if variant.is_block else 1
                    for m in scenario.m_values:
                        config = base.with_updates(
                            variant=variant, bs_est=block_size, m_est=m
                        )
                        row: Dict[str, Any] = {
                            "variant": variant.value,
                            "n": n,
                            "m": m,
                            "bs": block_size,
                            "seed": seed,
                        }
                        row.update(self.time_evaluation(data, config, params))
                        rows.append(row)
                        logger.info(f"runtime cell {row}")
        return pd.DataFrame(rows)

    def run(self, scenario: BenchmarkScenario, output_dir: Path) -> Path:
        """Run a scenario and write ``<kind>.csv`` under ``output_dir``."""
        runners = {
            "variants": self.run_variants,
            "block_size": self.run_block_size,
            "clustering": self.run_clustering,
            "fit": self.run_fit,
            "runtime": self.run_runtime,
        }
        if scenario.kind not in runners:
            raise UsageError(f"Unknown scenario kind {scenario.kind!r}")
        logger.info(f"Running {scenario.kind} benchmark")
        frame = runners[scenario.kind](scenario)
        path = Path(output_dir) / f"{scenario.kind}.csv"
        return dataset_store.write_frame(path, frame)


# Global benchmark service instance
benchmark_service = BenchmarkService()
