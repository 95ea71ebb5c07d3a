"""
Runtime configuration for the command line and the tool server.
"""
import logging
from typing import Literal

from pydantic_settings import BaseSettings

from catalog import DEFAULT_CATALOG

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class Settings(BaseSettings):
    """Workbench configuration settings"""
    CATALOG_PATH: str = str(DEFAULT_CATALOG)
    ORDER: int = 50
    PARAM_DEGREE: int = 8
    JOBS: int = 1
    MAX_PERIOD: int = 32
    LOG_LEVEL: str = "INFO"
    OUTPUT_FORMAT: Literal["text", "structured"] = "text"

    class Config:
        env_prefix = "RR_IDENTITIES_"

    def merged(self, **overrides) -> "Settings":
        """Settings with explicit (non-None) overrides on top of environment and defaults."""
        updates = {key: value for key, value in overrides.items() if value is not None}
        return self.model_copy(update=updates)


def configure_logging(level: str) -> None:
    """Send log records to stderr at ``level``."""
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
    logging.getLogger().setLevel(getattr(logging, level.upper()))
