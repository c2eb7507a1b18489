"""Helpers shared by the subcommands: config loading and fit reports."""

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, TypeVar

import numpy as np

from ..core.exceptions import DataFormatError
from ..models.data import InputNormalization
from ..models.fit import FitResult
from ..models.kernel import KernelParams
from ..models.run import RunConfig
from ..models.vecchia import VecchiaConfig
from ..services.io import dataset_store, parse_floats

RunT = TypeVar("RunT", bound=RunConfig)

# VecchiaConfig fields carried in a fit report
_CONFIG_KEYS = (
    "variant",
    "bs_est",
    "bs_pred",
    "m_est",
    "m_pred",
    "alpha",
    "cluster_seed",
    "order_seed",
    "sim_seed",
    "n_sim",
    "ci_level",
    "workers",
)


def load_config(path: Path, workers: Optional[int], model: Type[RunT]) -> RunT:
    """Read a run config; ``--workers`` overrides the file."""
    config = dataset_store.read_config(path, model)
    if workers is not None:
        config = model(**{**config.model_dump(), "workers": workers})
    return config


def fit_report(
    result: FitResult, config: VecchiaConfig, normalization: InputNormalization
) -> Dict[str, Any]:
    """Entries of a fit report."""
    theta = result.theta_hat
    entries: Dict[str, Any] = {
        "sigma2": theta.sigma2,
        "beta": list(theta.beta),
        "nu": theta.nu,
        "tau2": theta.tau2,
        "relevance": result.relevance,
        "loglik": result.loglik,
        "iterations": result.iterations,
        "converged": result.converged,
        "wall_time": result.wall_time,
        "preprocess_fingerprint": result.preprocess_fingerprint,
    }
    dumped = config.model_dump()
    for key in _CONFIG_KEYS:
        value = dumped[key]
        entries[key] = value.value if key == "variant" else value
    entries["input_lower"] = normalization.lower
    entries["input_upper"] = normalization.upper
    entries["response_scale"] = normalization.response_scale
    for key, value in sorted(result.stats.items()):
        entries[f"stat_{key}"] = float(value)
    return entries


def parse_fit_report(
    entries: Dict[str, str]
) -> Tuple[KernelParams, VecchiaConfig, InputNormalization]:
    """Fitted parameters, approximation settings and normalization."""
    try:
        params = KernelParams(
            sigma2=float(entries["sigma2"]),
            beta=parse_floats(entries["beta"]),
            nu=float(entries["nu"]),
            tau2=float(entries["tau2"]),
        )
        config = VecchiaConfig(**{key: entries[key] for key in _CONFIG_KEYS})
        normalization = InputNormalization(
            np.array(parse_floats(entries["input_lower"])),
            np.array(parse_floats(entries["input_upper"])),
            float(entries["response_scale"]),
        )
    except KeyError as e:
        raise DataFormatError(f"Fit report lacks key {e}")
    except ValueError as e:
        raise DataFormatError(f"Fit report has an invalid value: {e}")
    return params, config, normalization
