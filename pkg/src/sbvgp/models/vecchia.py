"""Vecchia approximation configuration and batch records."""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


class Variant(str, Enum):
    """Vecchia variants: classic, block, scaled, scaled block."""

    CV = "CV"
    BV = "BV"
    SV = "SV"
    SBV = "SBV"

    @property
    def is_block(self) -> bool:
        return self in (Variant.BV, Variant.SBV)

    @property
    def is_scaled(self) -> bool:
        return self in (Variant.SV, Variant.SBV)


class VecchiaConfig(BaseModel):
    """Settings of one Vecchia approximation (estimation and prediction)."""

    variant: Variant = Field(Variant.SBV, description="Approximation variant")
    bs_est: int = Field(10, ge=1, description="Mean block size for estimation")
    bs_pred: int = Field(10, ge=1, description="Mean block size for prediction")
    m_est: int = Field(60, ge=0, description="Neighbors per estimation block")
    m_pred: int = Field(60, ge=0, description="Neighbors per prediction block")
    alpha: float = Field(100.0, gt=0, description="NNS expansion factor")
    cluster_seed: int = Field(0, description="Random anchor clustering seed")
    order_seed: int = Field(1, description="Block ordering seed")
    sim_seed: int = Field(2, description="Conditional simulation seed")
    n_sim: int = Field(1000, ge=2, description="Conditional simulation draws")
    ci_level: float = Field(0.95, description="Confidence level")
    workers: int = Field(1, ge=1, description="Simulated worker count P")

    @model_validator(mode="before")
    @classmethod
    def point_variants_use_singletons(cls, data: Any) -> Any:
        """CV and SV condition single points: block sizes default to 1."""
        if not isinstance(data, dict):
            return data
        variant = data.get("variant", Variant.SBV)
        if Variant(variant) in (Variant.CV, Variant.SV):
            data = dict(data)
            if data.get("bs_est", 1) not in (1, "1"):
                raise ValueError(
                    f"Variant {Variant(variant).value} requires bs_est = 1, "
                    f"got {data['bs_est']}"
                )
            data["bs_est"] = 1
            data.setdefault("bs_pred", 1)
        return data

    @field_validator("ci_level")
    @classmethod
    def validate_ci_level(cls, v: float) -> float:
        """Validate the confidence level lies in (0, 1)."""
        if not 0.0 < v < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")
        return v

    @property
    def isotropic_kernel(self) -> bool:
        """CV and BV fit a single shared range."""
        return not self.variant.is_scaled

    def with_updates(self, **changes: Any) -> "VecchiaConfig":
        data: Dict[str, Any] = self.model_dump()
        data.update(changes)
        return VecchiaConfig(**data)


@dataclass
class BlockBatchEntry:
    """Covariance triplet and response slices of one block.

    ``cov_cross`` is oriented neighbors x block (m_i x bs_i).
    """

    block: int
    cov_block: np.ndarray
    cov_cond: np.ndarray
    cov_cross: np.ndarray
    y_block: np.ndarray
    y_cond: np.ndarray

    @property
    def bs(self) -> int:
        return int(self.cov_block.shape[0])

    @property
    def m(self) -> int:
        return int(self.cov_cond.shape[0])

    @property
    def nbytes(self) -> int:
        return int(
            self.cov_block.nbytes + self.cov_cond.nbytes + self.cov_cross.nbytes
        )
