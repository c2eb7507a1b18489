"""Maximum-likelihood fitting records."""

from typing import Dict, List, Tuple

from pydantic import BaseModel, Field, field_validator

from .kernel import KernelParams


def _check_range(v: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = float(v[0]), float(v[1])
    if lo <= 0 or hi <= 0:
        raise ValueError("Bounds must be positive")
    if lo > hi:
        raise ValueError(f"Lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


class ParamBounds(BaseModel):
    """Box constraints for the optimized hyperparameters.

    One range applies to every beta component.
    """

    sigma2: Tuple[float, float] = Field((1e-3, 1e2), description="sigma2 range")
    beta: Tuple[float, float] = Field((1e-3, 1e2), description="beta range")
    tau2: Tuple[float, float] = Field((1e-8, 1.0), description="tau2 range")

    @field_validator("sigma2", "beta", "tau2")
    @classmethod
    def validate_range(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        """Validate each range is positive and ordered."""
        return _check_range(v)

    def contains(self, params: KernelParams) -> bool:
        tau2 = max(params.tau2, self.tau2[0])
        return (
            self.sigma2[0] <= params.sigma2 <= self.sigma2[1]
            and all(self.beta[0] <= b <= self.beta[1] for b in params.beta)
            and self.tau2[0] <= tau2 <= self.tau2[1]
        )


class FitResult(BaseModel):
    """Outcome of one maximum-likelihood fit."""

    theta_hat: KernelParams = Field(..., description="Fitted hyperparameters")
    loglik_trace: List[float] = Field(
        default_factory=list, description="Objective value of every evaluation"
    )
    iterations: int = Field(0, description="Objective evaluations performed")
    converged: bool = Field(False, description="Stopped on tolerance, not budget")
    relevance: List[float] = Field(
        default_factory=list, description="Per-dimension 1/beta_hat"
    )
    loglik: float = Field(float("-inf"), description="Best objective value")
    preprocess_fingerprint: str = Field("", description="Preprocessing hash")
    wall_time: float = Field(0.0, description="Seconds spent fitting")
    stats: Dict[str, float] = Field(
        default_factory=dict, description="Preprocessing and cost statistics"
    )
