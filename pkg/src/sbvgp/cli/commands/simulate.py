"""``sbvgp simulate``: draw a synthetic dataset from the exact GP."""

import argparse
from pathlib import Path

from ...core.logging import get_logger
from ...models.run import RunConfig
from ...services.exact_gp import simulate_dataset
from ...services.io import dataset_store
from ..common import load_config

logger = get_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("simulate", help="Simulate a GP dataset")
    parser.add_argument("config", type=Path, help="Run configuration file")
    parser.add_argument("output", type=Path, help="Output CSV")
    parser.add_argument(
        "--test-output",
        type=Path,
        default=None,
        help="CSV for the n_test held-out points (default: <output>_test.csv)",
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> None:
    config = load_config(args.config, args.workers, RunConfig)
    params = config.kernel_params()
    X, y = simulate_dataset(config.n + config.n_test, config.d, params, config.seed)
    dataset_store.write_dataset(args.output, X[: config.n], y[: config.n])
    if config.n_test:
        test_path = args.test_output or args.output.with_name(
            f"{args.output.stem}_test{args.output.suffix}"
        )
        dataset_store.write_dataset(test_path, X[config.n :], y[config.n :])
    logger.info(f"Simulated {config.n} + {config.n_test} points with d={config.d}")
