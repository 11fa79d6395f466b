"""
Process-level configuration.
"""

from pathlib import Path
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings read from ATOMS_* environment variables or .env."""

    # Environment
    ENVIRONMENT: Literal["development", "staging", "production"] = "development"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: Literal["json", "console"] = "console"

    # Experiments
    DEFAULT_SEED: int = Field(0, ge=0, lt=2**64)
    OUTPUT_DIR: Path = Path("runs")

    model_config = SettingsConfigDict(
        env_prefix="ATOMS_",
        env_file=".env",
        extra="ignore"
    )

settings = Settings()
