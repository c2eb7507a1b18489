"""``sbvgp fit``: maximum-likelihood fit of a CSV dataset."""

import argparse
from pathlib import Path

import numpy as np

from ...core.logging import get_logger
from ...models.run import RunConfig
from ...services.estimate import estimation_service
from ...services.io import dataset_store
from ..common import fit_report, load_config

logger = get_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("fit", help="Fit kernel hyperparameters")
    parser.add_argument("data", type=Path, help="Training CSV")
    parser.add_argument("config", type=Path, help="Run configuration file")
    parser.add_argument("output", type=Path, help="Fit report to write")
    parser.add_argument(
        "--refit-preprocess",
        type=int,
        default=None,
        help="Outer rounds that redo preprocessing (overrides the config)",
    )
    parser.set_defaults(handler=run)


def trace_path(report: Path) -> Path:
    """Trace CSV written next to a fit report."""
    return report.with_name(f"{report.stem}_trace.csv")


def run(args: argparse.Namespace) -> None:
    config = load_config(args.config, args.workers, RunConfig)
    dataset, normalization = dataset_store.read_dataset(
        args.data,
        input_bounds=config.input_bounds,
        normalize_response=config.normalize_response,
    )
    vecchia = config.vecchia_config()
    bounds = config.bounds()
    init = config.kernel_params(dataset.d)
    if config.warm_start_subsample:
        warm = estimation_service.warm_start_beta(
            dataset,
            min(config.warm_start_subsample, dataset.n),
            vecchia,
            bounds,
            init,
            config.max_evals,
        )
        init = init.with_beta(warm.beta)
        logger.info(f"Warm-start ranges {list(init.beta)}")

    refit = args.refit_preprocess or config.refit_preprocess
    result = estimation_service.mle_fit(
        dataset, vecchia, bounds, init, config.max_evals, refit
    )
    dataset_store.write_report(args.output, fit_report(result, vecchia, normalization))
    trace = np.array(result.loglik_trace)
    dataset_store.write_table(
        trace_path(args.output),
        ["evaluation", "loglik"],
        np.column_stack([np.arange(1, trace.size + 1), trace]),
    )
