from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional
import logging
import os

from dotenv import load_dotenv
from pydantic import BaseModel, Field

from drat.core.errors import UsageError

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent

# Named env file wins over .env
ENV_FILES = [
    PROJECT_ROOT / "drat.env",
    PROJECT_ROOT / ".env",
]


class Settings(BaseModel):
    """Process-wide settings read from the environment."""

    environment: Literal["development", "production"] = "development"
    threads: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    log_format: Literal["json", "text"] = "json"
    log_file: Optional[str] = None

    @property
    def is_production(self) -> bool:
        return self.environment == "production"


def _load_env_files() -> None:
    for env_file in ENV_FILES:
        if env_file.exists():
            load_dotenv(dotenv_path=env_file)
            logger.info(f"Loaded environment from {env_file}")


def _read_threads(is_production: bool) -> int:
    default = os.cpu_count() or 1
    raw = os.getenv("DRAT_THREADS")
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
        if value < 1:
            raise ValueError(raw)
        return value
    except ValueError:
        message = f"DRAT_THREADS must be a positive integer, got {raw!r}"
        if is_production:
            raise UsageError(message)
        logger.warning(f"{message}. Using {default}.")
        return default


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    _load_env_files()
    environment = os.getenv("DRAT_ENVIRONMENT", "development")
    if environment not in ("development", "production"):
        logger.warning(f"Unknown DRAT_ENVIRONMENT {environment!r}, treating as development")
        environment = "development"
    log_format = os.getenv("DRAT_LOG_FORMAT", "json").lower()
    if log_format not in ("json", "text"):
        log_format = "json"
    return Settings(
        environment=environment,
        threads=_read_threads(environment == "production"),
        log_level=os.getenv("DRAT_LOG_LEVEL", "INFO").upper(),
        log_format=log_format,
        log_file=os.getenv("DRAT_LOG_FILE") or None,
    )
