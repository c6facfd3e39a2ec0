"""
Application configuration settings.
"""
from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Settings loaded from environment variables (and an optional .env file)."""

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    # Application
    APP_NAME: str = "minimax-debias"
    APP_VERSION: str = "0.1.0"
    MINIMAX_LOG_LEVEL: str = "INFO"

    # Worker pool
    MINIMAX_THREADS: int = 1

    # Numerics
    JITTER_SCALE: float = 1e-10
    MEDIAN_SUBSAMPLE: int = 2000
    MEDIAN_SEED: int = 0
    # smallest Gamma eigenvalue allowed, relative to the residual second moment
    PL_GAMMA_RELATIVE_FLOOR: float = 1e-8

    # Simulation oracle
    ORACLE_MC_N: int = 2_000_000


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


settings = get_settings()
