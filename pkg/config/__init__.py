"""Configuration module for the distortion-aware optimizer.

This module contains process settings (environment variables) and the JSON
run configuration loader.

Files in this directory:
- settings.py: Environment settings loader and validator (DISTOPT_* variables)
- run_config.py: Run configuration presets, loading and validation

Example:
    >>> from config import get_settings, load_config
    >>> settings = get_settings()
    >>> config = load_config("runs/cantilever.json")
"""

from typing import List

from config.settings import Settings, get_settings
from config.run_config import (
    ConfigError,
    config_echo,
    deep_merge,
    load_config,
    resolve_run_config,
)

__all__: List[str] = [
    # Settings
    "Settings",
    "get_settings",
    # Run configuration
    "ConfigError",
    "config_echo",
    "deep_merge",
    "load_config",
    "resolve_run_config",
]
