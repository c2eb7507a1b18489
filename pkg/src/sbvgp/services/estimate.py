"""Maximum-likelihood fitting and accuracy metrics."""

import time
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from ..core.exceptions import NumericalError, SBVError, UsageError
from ..core.logging import get_logger
from ..models.data import Dataset
from ..models.fit import FitResult, ParamBounds
from ..models.kernel import KernelParams
from ..models.vecchia import Variant, VecchiaConfig
from .distsim import WorkerGroup
from .exact_gp import exact_loglik
from .sampling import make_rng
from .vecchia import Preprocessing, preprocess, vecchia_loglik

logger = get_logger(__name__)

# initial simplex step in log-parameter space
_SIMPLEX_STEP = 0.5


class EstimationService:
    """Fits kernel hyperparameters by maximizing the Vecchia likelihood."""

    def _pack(
        self, params: KernelParams, bounds: ParamBounds, tied: bool
    ) -> np.ndarray:
        beta = [params.isotropic().beta[0]] if tied else list(params.beta)
        tau2 = max(params.tau2, bounds.tau2[0])
        return np.log(np.array([params.sigma2, *beta, tau2], dtype=float))

    def _unpack(
        self, x: np.ndarray, template: KernelParams, tied: bool
    ) -> KernelParams:
        values = np.exp(x)
        beta = [values[1]] * template.dim if tied else values[1:-1]
        return KernelParams(
            sigma2=float(values[0]),
            beta=[float(b) for b in beta],
            nu=template.nu,
            tau2=float(values[-1]),
        )

    def _log_bounds(
        self, bounds: ParamBounds, n_beta: int
    ) -> List[Tuple[float, float]]:
        pairs = [bounds.sigma2] + [bounds.beta] * n_beta + [bounds.tau2]
        return [(float(np.log(lo)), float(np.log(hi))) for lo, hi in pairs]

    def _initial_simplex(
        self, x0: np.ndarray, log_bounds: List[Tuple[float, float]]
    ) -> np.ndarray:
        simplex = [x0]
        for i, (lo, hi) in enumerate(log_bounds):
            vertex = x0.copy()
            step = _SIMPLEX_STEP if x0[i] + _SIMPLEX_STEP <= hi else -_SIMPLEX_STEP
            vertex[i] = min(max(x0[i] + step, lo), hi)
            if vertex[i] == x0[i]:
                vertex[i] = lo if x0[i] > lo else hi
            simplex.append(vertex)
        return np.array(simplex)

    def _fit_round(
        self,
        dataset: Dataset,
        config: VecchiaConfig,
        bounds: ParamBounds,
        init: KernelParams,
        max_evals: int,
        group: WorkerGroup,
        trace: List[float],
    ) -> Tuple[KernelParams, float, bool, Preprocessing]:
        tied = config.isotropic_kernel
        prep = preprocess(dataset, config, init, group)
        fingerprint = prep.fingerprint
        x0 = self._pack(init, bounds, tied)
        log_bounds = self._log_bounds(bounds, 1 if tied else init.dim)
        best_x, best_loglik = x0, -np.inf
        start = len(trace)

        def objective(x: np.ndarray) -> float:
            nonlocal best_x, best_loglik
            if len(trace) - start >= max_evals:
                return np.inf
            params = self._unpack(x, init, tied)
            try:
                value = vecchia_loglik(dataset, config, params, prep=prep, group=group)
            except NumericalError as e:
                logger.debug(f"Rejected trial point {params.model_dump()}: {e}")
                value = -np.inf
            if not np.isfinite(value):
                value = -np.inf
            trace.append(float(value))
            if value > best_loglik:
                best_x, best_loglik = np.array(x, copy=True), value
            return -value if np.isfinite(value) else np.inf

        f0 = objective(x0)
        if not np.isfinite(f0):
            raise NumericalError(
                "Vecchia likelihood is not finite at the initial parameters"
            )
        result = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=log_bounds,
            options={
                "maxfev": max(max_evals - 1, 1),
                "initial_simplex": self._initial_simplex(x0, log_bounds),
                "fatol": 1e-8 * max(1.0, abs(f0)),
                "xatol": np.inf,
            },
        )
        if prep.fingerprint != fingerprint:
            raise SBVError("Preprocessing changed during a fit round")
        converged = bool(result.success) and len(trace) - start < max_evals
        theta = self._unpack(best_x, init, tied)
        logger.debug(
            f"Fit round done after {result.nfev} evaluations: "
            f"loglik {best_loglik:.6f}, {result.message}"
        )
        return theta, float(best_loglik), converged, prep

    def mle_fit(
        self,
        dataset: Dataset,
        config: VecchiaConfig,
        bounds: Optional[ParamBounds] = None,
        init: Optional[KernelParams] = None,
        max_evals: int = 500,
        refit_preprocess: int = 1,
        group: Optional[WorkerGroup] = None,
    ) -> FitResult:
        """Maximize the Vecchia log-likelihood over log(sigma2, beta, tau2).

        Preprocessing is computed once per round from the round's starting
        parameters and reused for every evaluation; ``refit_preprocess``
        rounds restart from the previous round's estimate. CV and BV fit a
        single shared range. A trial point whose likelihood fails counts as
        -inf.
        """
        bounds = bounds or ParamBounds()
        init = init or KernelParams.default(dataset.d)
        if init.dim != dataset.d:
            raise UsageError(f"Initial beta has {init.dim} entries for d={dataset.d}")
        if config.isotropic_kernel:
            init = init.isotropic()
        if not bounds.contains(init):
            raise UsageError(f"Initial parameters {init.model_dump()} outside bounds")
        if max_evals < 1 or refit_preprocess < 1:
            raise UsageError("max_evals and refit_preprocess must be >= 1")
        group = group or WorkerGroup(config.workers)

        logger.info(
            f"Fitting {config.variant.value} on {dataset.n} points "
            f"(d={dataset.d}, m={config.m_est}, bs={config.bs_est})"
        )
        start = time.perf_counter()
        trace: List[float] = []
        theta, loglik, converged = init, -np.inf, False
        prep: Optional[Preprocessing] = None
        for round_no in range(refit_preprocess):
            theta, loglik, converged, prep = self._fit_round(
                dataset, config, bounds, theta, max_evals, group, trace
            )
            logger.info(
                f"Round {round_no + 1}/{refit_preprocess}: loglik {loglik:.6f}"
            )
        assert prep is not None
        wall = time.perf_counter() - start
        logger.info(f"Fit finished in {wall:.2f}s after {len(trace)} evaluations")
        return FitResult(
            theta_hat=theta,
            loglik_trace=trace,
            iterations=len(trace),
            converged=converged,
            relevance=theta.relevance,
            loglik=loglik,
            preprocess_fingerprint=prep.fingerprint,
            wall_time=wall,
            stats=dict(prep.stats),
        )

    def warm_start_beta(
        self,
        dataset: Dataset,
        subsample_size: int,
        config: VecchiaConfig,
        bounds: Optional[ParamBounds] = None,
        init: Optional[KernelParams] = None,
        max_evals: int = 500,
    ) -> KernelParams:
        """Fit SV on a uniform random subsample to seed SBV preprocessing."""
        if not 1 <= subsample_size <= dataset.n:
            raise UsageError(
                f"Subsample size {subsample_size} outside [1, {dataset.n}]"
            )
        if subsample_size < dataset.n:
            rng = make_rng(config.cluster_seed, subsample_size)
            rows = np.sort(rng.choice(dataset.n, size=subsample_size, replace=False))
            dataset = dataset.subset(rows)
        sv = config.with_updates(variant=Variant.SV, bs_est=1, bs_pred=1)
        logger.info(f"Warm start: SV fit on {dataset.n} points")
        result = self.mle_fit(dataset, sv, bounds, init, max_evals)
        return result.theta_hat

    def kl_divergence(
        self,
        X: np.ndarray,
        params: KernelParams,
        config: VecchiaConfig,
        prep: Optional[Preprocessing] = None,
    ) -> float:
        """exact_loglik(X, 0) - vecchia_loglik(X, 0)."""
        X = np.asarray(X, dtype=float)
        zeros = Dataset(points=X, responses=np.zeros(X.shape[0]))
        exact = exact_loglik(zeros.points, zeros.responses, params)
        approx = vecchia_loglik(zeros, config, params, prep=prep)
        return exact - approx

    def _check_pair(
        self, predictions: np.ndarray, truth: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        pred = np.asarray(predictions, dtype=float).ravel()
        true = np.asarray(truth, dtype=float).ravel()
        if pred.size != true.size or pred.size == 0:
            raise UsageError(
                f"Need equal, non-empty lengths: got {pred.size} and {true.size}"
            )
        return pred, true

    def mspe(self, predictions: np.ndarray, truth: np.ndarray) -> float:
        """Mean squared prediction error."""
        pred, true = self._check_pair(predictions, truth)
        return float(np.mean((pred - true) ** 2))

    def rmspe(self, predictions: np.ndarray, truth: np.ndarray) -> float:
        """Root mean squared percentage error, in percent."""
        pred, true = self._check_pair(predictions, truth)
        if np.any(true == 0):
            raise UsageError(
                "RMSPE is undefined for zero truth values; "
                "normalize the response to mean 1"
            )
        return float(100.0 * np.sqrt(np.mean(((pred - true) / true) ** 2)))


# Global estimation service instance
estimation_service = EstimationService()
