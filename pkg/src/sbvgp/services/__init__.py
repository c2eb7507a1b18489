"""Services package for SBVGP."""

from .benchmark import benchmark_service
from .estimate import estimation_service
from .io import dataset_store

__all__ = [
    "benchmark_service",
    "dataset_store",
    "estimation_service",
]
