"""
Runtime settings read from the environment.
"""

import os
import logging
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

load_dotenv()

logger = logging.getLogger(__name__)


def _default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))


class Settings(BaseModel):
    """Workbench settings."""
    threads: int = Field(default_factory=_default_threads, ge=1, description="Worker pool cap")
    output_dir: Path = Field(Path("output"), description="Default report directory")
    rtol: float = Field(1e-10, gt=0, description="ODE relative tolerance")
    atol: float = Field(1e-12, gt=0, description="ODE absolute tolerance")
    seed: int = 42

    @classmethod
    def from_env(cls) -> "Settings":
        values = {
            "threads": os.getenv("ISOPROFILE_THREADS"),
            "output_dir": os.getenv("ISOPROFILE_OUTPUT_DIR"),
            "rtol": os.getenv("ISOPROFILE_RTOL"),
            "atol": os.getenv("ISOPROFILE_ATOL"),
            "seed": os.getenv("ISOPROFILE_SEED"),
        }
        settings = cls(**{k: v for k, v in values.items() if v not in (None, "")})
        logger.debug(f"Loaded settings: {settings}")
        return settings


# Singleton instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the settings singleton."""
    global _settings
    if _settings is None:
        _settings = Settings.from_env()
    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the next get_settings() rereads the environment."""
    global _settings
    _settings = None
