"""``sbvgp split``: seeded train/test split of a CSV."""

import argparse
from pathlib import Path

from ...services.io import dataset_store


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("split", help="Split a CSV into train and test")
    parser.add_argument("data", type=Path, help="Input CSV")
    parser.add_argument("train", type=Path, help="Training CSV to write")
    parser.add_argument("test", type=Path, help="Test CSV to write")
    parser.add_argument("--fraction", type=float, default=0.9, help="Train share")
    parser.add_argument("--seed", type=int, default=0, help="Split seed")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> None:
    n_train, n_test = dataset_store.split(
        args.data, args.train, args.test, args.fraction, args.seed
    )
    print(f"train = {n_train}")
    print(f"test = {n_test}")
