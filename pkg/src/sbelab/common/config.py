"""
Runtime settings (environment / .env driven)
"""
from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide knobs that never change the numbers a run produces"""
    model_config = SettingsConfigDict(
        env_prefix="SBELAB_", env_file=".env", extra="ignore"
    )

    log_level: str = "INFO"
    n_jobs: int = 1
    backend: str = "loky"
    output_root: Path = Path("runs")
    blowup_threshold: float = Field(default=1e6, gt=0)
    batch_count: int = Field(default=16, ge=2)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
