"""
Application Configuration
Process-level settings loaded from the environment using Pydantic Settings.
"""

from functools import lru_cache
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings loaded from EVAC_* environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="EVAC_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = Field(default="MultiExit-Evac", description="Application name")
    app_env: str = Field(default="development", description="Environment")
    debug: bool = Field(default=False, description="Log at DEBUG unless a level is given")

    # Logging
    log_level: str = Field(default="INFO")

    # Compute
    num_threads: Optional[int] = Field(
        default=None,
        description="Torch intra-op threads; library default when unset",
    )

    # Outputs
    output_dir: str = Field(default="./runs", description="Default run root")
    default_seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.upper()

    @field_validator("num_threads")
    @classmethod
    def _positive_threads(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError("num_threads must be >= 1")
        return value

    @property
    def is_development(self) -> bool:
        return self.app_env == "development"


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Export settings instance for convenience
settings = get_settings()
