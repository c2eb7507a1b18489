"""Models package for SBVGP."""

from .data import BlockPartition, Dataset, InputNormalization, NeighborSets
from .fit import FitResult, ParamBounds
from .kernel import SUPPORTED_NU, KernelParams
from .run import BenchmarkScenario, RunConfig
from .vecchia import BlockBatchEntry, Variant, VecchiaConfig

__all__ = [
    "BlockPartition",
    "Dataset",
    "InputNormalization",
    "NeighborSets",
    "FitResult",
    "ParamBounds",
    "SUPPORTED_NU",
    "KernelParams",
    "BenchmarkScenario",
    "RunConfig",
    "BlockBatchEntry",
    "Variant",
    "VecchiaConfig",
]
