import os
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings."""
    model_config = SettingsConfigDict(
        case_sensitive=True,
        env_file=".env",
        env_prefix="RHGC_",
        extra="ignore",
    )

    PROJECT_NAME: str = "RHGC"

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Execution
    DEFAULT_JOBS: int = 1
    INCLUDE_WALL_TIME: bool = False
    CSV_SIGNIFICANT_DIGITS: int = 17

    # Canonical form
    ENTRY_TOLERANCE: float = 1e-9
    PIVOT_TOLERANCE: float = 1e-9
    MAX_CONDITION: float = 1e12

    # Linear algebra
    SOLVE_RESIDUAL_TOLERANCE: float = 1e-10

    # Riccati fixed point
    DARE_TOLERANCE: float = 1e-12
    DARE_MAX_ITERATIONS: int = 100_000

    # Steady-state solve for non-quadratic costs
    STEADY_STATE_TOLERANCE: float = 1e-10
    STEADY_STATE_MAX_ITERATIONS: int = 100_000

    # Offline oracle (batch triple momentum)
    OFFLINE_TOLERANCE: float = 1e-10
    OFFLINE_MAX_ITERATIONS: int = 1_000_000

    # Regret accounting
    NEGATIVE_REGRET_TOLERANCE: float = 1e-7

    # Default experiment file used by the CLI when --config is omitted
    DEFAULT_CONFIG: Optional[str] = None


settings = Settings()
