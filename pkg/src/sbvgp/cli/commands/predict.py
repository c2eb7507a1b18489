"""``sbvgp predict``: blockwise prediction with simulated intervals."""

import argparse
from pathlib import Path

import numpy as np

from ...core.exceptions import UsageError
from ...core.logging import get_logger
from ...models.data import Dataset
from ...services.io import dataset_store
from ...services.vecchia import conditional_simulate, vecchia_predict
from ..common import parse_fit_report

logger = get_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("predict", help="Predict at test inputs")
    parser.add_argument("train", type=Path, help="Training CSV")
    parser.add_argument("test", type=Path, help="Test CSV (response column optional)")
    parser.add_argument("report", type=Path, help="Fit report")
    parser.add_argument("output", type=Path, help="Prediction CSV to write")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> None:
    params, config, normalization = parse_fit_report(
        dataset_store.read_report(args.report)
    )
    if args.workers is not None:
        config = config.with_updates(workers=args.workers)
    train, _ = dataset_store.read_dataset(args.train, normalization=normalization)

    _, values = dataset_store.read_table(args.test)
    d = train.d
    if values.shape[1] == d + 1:
        values = values[:, :d]
    elif values.shape[1] != d:
        raise UsageError(
            f"Test data has {values.shape[1]} columns; training data has d={d} "
            "inputs (expected d or d + 1 columns)"
        )
    points = normalization.apply(values)
    test = Dataset(points=points, responses=np.zeros(points.shape[0]))

    mean, variance = vecchia_predict(train, test, config, params)
    sim_mean, sim_sd, ci_lo, ci_hi = conditional_simulate(
        mean, variance, config.n_sim, config.sim_seed, config.ci_level
    )
    scale = normalization.response_scale
    lo, hi = np.sort(np.column_stack([ci_lo, ci_hi]) * scale, axis=1).T
    dataset_store.write_table(
        args.output,
        ["mean", "sd", "ci_lo", "ci_hi"],
        np.column_stack([sim_mean * scale, sim_sd * abs(scale), lo, hi]),
    )
