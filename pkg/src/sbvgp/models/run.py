"""Run configuration parsed from flat ``key = value`` files."""

from typing import Any, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .fit import ParamBounds
from .kernel import KernelParams
from .vecchia import Variant, VecchiaConfig


def parse_float_list(v: Any) -> Any:
    """Parse ``"0.05,0.05,5*8"`` style lists; ``v*k`` repeats v k times."""
    if not isinstance(v, str):
        return v
    values: List[float] = []
    for item in v.split(","):
        item = item.strip()
        if not item:
            continue
        if "*" in item:
            value, count = item.split("*", 1)
            values.extend([float(value)] * int(count))
        else:
            values.append(float(item))
    return values


def parse_int_list(v: Any) -> Any:
    if not isinstance(v, str):
        return v
    return [int(item) for item in v.split(",") if item.strip()]


def parse_range(v: Any) -> Any:
    """Parse ``"lo:hi"``."""
    if not isinstance(v, str):
        return v
    lo, hi = v.split(":", 1)
    return float(lo), float(hi)


class RunConfig(BaseModel):
    """One configuration file fully determines a run."""

    model_config = ConfigDict(extra="forbid")

    # data
    n: int = Field(1000, ge=1, description="Points to simulate")
    d: int = Field(2, ge=1, description="Input dimension")
    seed: int = Field(0, description="Design and response seed")
    design: str = Field("uniform", description="Input design")
    n_test: int = Field(0, ge=0, description="Held-out points to simulate")

    # kernel
    sigma2: float = Field(1.0, gt=0)
    beta: Optional[List[float]] = Field(None, description="Ranges, one per input")
    nu: float = Field(3.5)
    tau2: float = Field(0.0, ge=0)

    # vecchia
    variant: Variant = Field(Variant.SBV)
    bs_est: Optional[int] = Field(None, ge=1)
    bs_pred: Optional[int] = Field(None, ge=1)
    m_est: int = Field(60, ge=0)
    m_pred: int = Field(60, ge=0)
    alpha: float = Field(100.0, gt=0)
    cluster_seed: int = Field(0)
    order_seed: int = Field(1)
    sim_seed: int = Field(2)
    n_sim: int = Field(1000, ge=2)
    ci_level: float = Field(0.95)
    workers: int = Field(1, ge=1)

    # fit
    max_evals: int = Field(500, ge=1)
    refit_preprocess: int = Field(1, ge=1)
    warm_start_subsample: int = Field(0, ge=0)
    bound_sigma2: Tuple[float, float] = Field((1e-3, 1e2))
    bound_beta: Tuple[float, float] = Field((1e-3, 1e2))
    bound_tau2: Tuple[float, float] = Field((1e-8, 1.0))

    # ingestion
    input_bounds: Optional[List[Tuple[float, float]]] = Field(None)
    normalize_response: str = Field("none")

    @field_validator("variant", mode="before")
    @classmethod
    def parse_variant(cls, v: Any) -> Any:
        """Accept lower-case variant names."""
        return v.strip().upper() if isinstance(v, str) else v

    @field_validator("beta", mode="before")
    @classmethod
    def parse_beta(cls, v: Any) -> Any:
        """Parse comma-separated ranges."""
        return parse_float_list(v)

    @field_validator("bound_sigma2", "bound_beta", "bound_tau2", mode="before")
    @classmethod
    def parse_bounds(cls, v: Any) -> Any:
        """Parse ``lo:hi`` ranges."""
        return parse_range(v)

    @field_validator("input_bounds", mode="before")
    @classmethod
    def parse_input_bounds(cls, v: Any) -> Any:
        """Parse ``lo:hi,lo:hi,...`` per-column bounds."""
        if not isinstance(v, str):
            return v
        return [parse_range(item.strip()) for item in v.split(",") if item.strip()]

    @field_validator("design")
    @classmethod
    def validate_design(cls, v: str) -> str:
        """Validate the design name."""
        if v != "uniform":
            raise ValueError("Only the 'uniform' design is supported")
        return v

    @field_validator("normalize_response")
    @classmethod
    def validate_normalize_response(cls, v: str) -> str:
        """Validate the response normalization mode."""
        if v not in {"none", "mean"}:
            raise ValueError("normalize_response must be 'none' or 'mean'")
        return v

    @model_validator(mode="after")
    def point_variants_reject_blocks(self) -> "RunConfig":
        """CV and SV cannot be given an estimation block size above 1."""
        if not self.variant.is_block and self.bs_est not in (None, 1):
            raise ValueError(
                f"Variant {self.variant.value} requires bs_est = 1, got {self.bs_est}"
            )
        return self

    def kernel_params(self, dim: Optional[int] = None) -> KernelParams:
        """Kernel parameters for inputs of dimension ``dim`` (default ``d``)."""
        dim = dim or self.d
        beta = self.beta if self.beta is not None else [0.5] * dim
        return KernelParams(sigma2=self.sigma2, beta=beta, nu=self.nu, tau2=self.tau2)

    def vecchia_config(self) -> VecchiaConfig:
        data = {
            "variant": self.variant,
            "m_est": self.m_est,
            "m_pred": self.m_pred,
            "alpha": self.alpha,
            "cluster_seed": self.cluster_seed,
            "order_seed": self.order_seed,
            "sim_seed": self.sim_seed,
            "n_sim": self.n_sim,
            "ci_level": self.ci_level,
            "workers": self.workers,
        }
        if self.bs_est is not None:
            data["bs_est"] = self.bs_est
        if self.bs_pred is not None:
            data["bs_pred"] = self.bs_pred
        return VecchiaConfig(**data)

    def bounds(self) -> ParamBounds:
        return ParamBounds(
            sigma2=self.bound_sigma2, beta=self.bound_beta, tau2=self.bound_tau2
        )


class BenchmarkScenario(RunConfig):
    """A sweep over variants, neighbor counts, block sizes and seeds."""

    kind: str = Field(
        "variants", description="variants|block_size|clustering|fit|runtime"
    )
    variants: List[Variant] = Field(default_factory=lambda: list(Variant))
    m_values: List[int] = Field(default_factory=lambda: [10, 30, 60])
    bs_values: List[int] = Field(default_factory=lambda: [10])
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    anchor_seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    n_values: List[int] = Field(
        default_factory=list, description="Design sizes swept by runtime scenarios"
    )

    @field_validator("variants", mode="before")
    @classmethod
    def parse_variants(cls, v: Any) -> Any:
        """Parse a comma-separated variant list."""
        if not isinstance(v, str):
            return v
        return [item.strip().upper() for item in v.split(",") if item.strip()]

    @field_validator(
        "m_values", "bs_values", "seeds", "anchor_seeds", "n_values", mode="before"
    )
    @classmethod
    def parse_lists(cls, v: Any) -> Any:
        """Parse comma-separated integer lists."""
        return parse_int_list(v)

    @field_validator("kind")
    @classmethod
    def validate_kind(cls, v: str) -> str:
        """Validate the scenario kind."""
        allowed = {"variants", "block_size", "clustering", "fit", "runtime"}
        if v not in allowed:
            raise ValueError(f"kind must be one of {sorted(allowed)}")
        return v
