"""Configuration management for the sbvgp package."""

from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables."""

    # Logging
    log_level: str = Field("INFO", alias="SBVGP_LOG_LEVEL")
    log_format: str = Field(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        alias="SBVGP_LOG_FORMAT",
    )

    # Numerical limits
    exact_max_n: int = Field(20000, alias="SBVGP_EXACT_MAX_N")
    max_input_dim: int = Field(64, alias="SBVGP_MAX_INPUT_DIM")
    simulation_jitter: float = Field(1e-10, alias="SBVGP_SIMULATION_JITTER")
    variance_clamp: float = Field(1e-10, alias="SBVGP_VARIANCE_CLAMP")

    # Execution
    batch_memory_mb: float = Field(64.0, alias="SBVGP_BATCH_MEMORY_MB")
    executor: str = Field("sequential", alias="SBVGP_EXECUTOR")
    thread_workers: int = Field(4, alias="SBVGP_THREAD_WORKERS")

    # Output
    csv_significant_digits: int = Field(17, alias="SBVGP_CSV_DIGITS")
    output_dir: str = Field("./output", alias="SBVGP_OUTPUT_DIR")

    # Application Settings
    app_name: str = Field("sbvgp", alias="SBVGP_APP_NAME")
    app_version: str = Field("0.1.0", alias="SBVGP_APP_VERSION")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("executor")
    @classmethod
    def validate_executor(cls, v: str) -> str:
        """Validate the worker executor name."""
        allowed = {"sequential", "threads"}
        if v not in allowed:
            raise ValueError(f"Executor must be one of {allowed}")
        return v

    @field_validator("exact_max_n", "max_input_dim", "thread_workers")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        """Validate positive integer limits."""
        if v < 1:
            raise ValueError("Limit must be >= 1")
        return v

    def ensure_output_dir(self) -> Path:
        """Create the output directory if it doesn't exist."""
        out = Path(self.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return out


# Global settings instance
settings = Settings()
