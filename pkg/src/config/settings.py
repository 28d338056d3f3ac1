"""
Application settings and configuration management.
Defaults can be overridden through PUSH_VHGP_* environment variables or a .env file.
"""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="PUSH_VHGP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Runtime
    threads: int = Field(default=4, ge=1, description="Upper bound on concurrent worker threads")
    log_level: str = Field(default="info", description="Logging level")
    log_format: str = Field(default="json", description="Log renderer: json or console")
    default_seed: int = Field(default=0, description="Seed used when a command gets none")

    # Linear algebra
    jitter_initial: float = Field(default=1e-8, gt=0, description="First jitter, relative to the matrix scale")
    jitter_max: float = Field(default=1e-4, gt=0, description="Largest jitter before giving up")

    # Optimizer defaults
    optim_max_iterations: int = Field(default=500, ge=1, description="Iterations per restart")
    optim_gradient_tolerance: float = Field(default=1e-5, gt=0, description="Infinity-norm gradient threshold")
    optim_objective_tolerance: float = Field(default=1e-9, gt=0, description="Relative objective change threshold")
    optim_num_restarts: int = Field(default=3, ge=1, description="Optimizer restarts")

    # Pushing model
    integration_substep_s: float = Field(default=1e-3, gt=0, description="Maximum integration sub-step (s)")

    # Validation
    kl_floor_mm: float = Field(default=0.05, gt=0, description="Sensor resolution for displacements (mm)")
    kl_floor_rad: float = Field(default=0.002, gt=0, description="Sensor resolution for rotations (rad)")

    # Dataset admission
    max_travel_ratio: float = Field(
        default=3.0, ge=1.2, description="Largest planar displacement per unit of pusher travel v_p * dt"
    )
    travel_slack_mm: float = Field(default=2.0, ge=0, description="Displacement always admitted regardless of travel (mm)")

    # Artifacts
    artifact_format_version: str = Field(default="1", description="Model artifact format version")

    @property
    def uses_console_logs(self) -> bool:
        """Check if logs should be rendered for humans instead of JSON."""
        return self.log_format.lower() == "console"


# Global settings instance
settings = Settings()
