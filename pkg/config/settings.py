"""Process-level settings for the distortion-aware optimizer.

This module provides a singleton Settings class that loads and validates
process configuration from environment variables (optionally from a `.env`
file at the repository root). Run-specific parameters live in the JSON run
configuration instead (see `config.run_config`).

Example:
    >>> from config.settings import get_settings
    >>> settings = get_settings()
    >>> print(settings.DISTOPT_THREADS)
    1
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar, Optional

from dotenv import load_dotenv


# Load environment variables from .env file
_env_path = Path(__file__).parent.parent / ".env"
load_dotenv(dotenv_path=_env_path)


@dataclass
class Settings:
    """Application settings loaded from environment variables.

    Attributes:
        DISTOPT_THREADS: Worker cap for concurrent layer/adjoint solves (default: 1)
        DISTOPT_LOG_LEVEL: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        DISTOPT_SNAPSHOT_EVERY: Default snapshot cadence in iterations (default: 10)
    """

    DISTOPT_THREADS: int = field(
        default_factory=lambda: int(os.getenv("DISTOPT_THREADS", "1"))
    )
    DISTOPT_LOG_LEVEL: str = field(
        default_factory=lambda: os.getenv("DISTOPT_LOG_LEVEL", "INFO")
    )
    DISTOPT_SNAPSHOT_EVERY: int = field(
        default_factory=lambda: int(os.getenv("DISTOPT_SNAPSHOT_EVERY", "10"))
    )

    _instance: ClassVar[Optional["Settings"]] = None

    def __post_init__(self) -> None:
        """Validate configuration after initialization.

        Raises:
            ValueError: If a setting is out of range
        """
        if self.DISTOPT_THREADS < 1:
            raise ValueError(f"DISTOPT_THREADS must be at least 1 (got {self.DISTOPT_THREADS})")

        valid_log_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if self.DISTOPT_LOG_LEVEL.upper() not in valid_log_levels:
            raise ValueError(
                f"DISTOPT_LOG_LEVEL must be one of {valid_log_levels} "
                f"(got {self.DISTOPT_LOG_LEVEL})"
            )

        if self.DISTOPT_SNAPSHOT_EVERY < 1:
            raise ValueError(
                f"DISTOPT_SNAPSHOT_EVERY must be at least 1 (got {self.DISTOPT_SNAPSHOT_EVERY})"
            )

    @classmethod
    def get_instance(cls) -> "Settings":
        """Get the singleton Settings instance.

        Creates a new instance on first call, then returns the same instance
        on subsequent calls.
        """
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    @classmethod
    def reset_instance(cls) -> None:
        """Reset the singleton instance.

        Useful for testing when environment variables change.
        """
        cls._instance = None


def get_settings() -> Settings:
    """Convenience function to get the Settings instance."""
    return Settings.get_instance()
