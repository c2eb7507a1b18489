"""Covariance hyperparameter models."""

from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

SUPPORTED_NU: Tuple[float, ...] = (0.5, 1.5, 2.5, 3.5)


class KernelParams(BaseModel):
    """Matérn covariance hyperparameters theta = (sigma2, beta, nu, tau2)."""

    model_config = ConfigDict(frozen=True)

    sigma2: float = Field(..., gt=0, description="Process variance")
    beta: Tuple[float, ...] = Field(
        ..., min_length=1, description="Per-dimension range parameters"
    )
    nu: float = Field(3.5, description="Smoothness, fixed by configuration")
    tau2: float = Field(0.0, ge=0, description="Nugget variance")

    @field_validator("beta", mode="before")
    @classmethod
    def coerce_beta(cls, v: Sequence[float]) -> Tuple[float, ...]:
        """Accept any sequence or array of ranges."""
        return tuple(float(b) for b in np.asarray(v, dtype=float).ravel())

    @field_validator("beta")
    @classmethod
    def validate_beta(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        """Validate that every range is positive and finite."""
        if any(not np.isfinite(b) or b <= 0 for b in v):
            raise ValueError("Every beta must be a finite value > 0")
        return v

    @field_validator("nu")
    @classmethod
    def validate_nu(cls, v: float) -> float:
        """Validate smoothness against the closed-form half-integers."""
        if v not in SUPPORTED_NU:
            raise ValueError(f"nu must be one of {SUPPORTED_NU}")
        return v

    @property
    def dim(self) -> int:
        """Input dimension the parameters apply to."""
        return len(self.beta)

    @property
    def beta_array(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=float)

    @property
    def relevance(self) -> List[float]:
        """Per-dimension relevance 1/beta_i."""
        return [1.0 / b for b in self.beta]

    @property
    def is_isotropic(self) -> bool:
        return len(set(self.beta)) == 1

    def with_beta(self, beta: Sequence[float]) -> "KernelParams":
        return self.model_copy(update={"beta": tuple(float(b) for b in beta)})

    def isotropic(self) -> "KernelParams":
        """Collapse the ranges to one shared value (geometric mean)."""
        shared = float(np.exp(np.mean(np.log(self.beta_array))))
        return self.with_beta([shared] * self.dim)

    @classmethod
    def default(cls, dim: int, sigma2: float = 1.0, nu: float = 3.5) -> "KernelParams":
        """Neutral starting point on the unit cube."""
        return cls(sigma2=sigma2, beta=[0.5] * dim, nu=nu, tau2=1e-4 * sigma2)
