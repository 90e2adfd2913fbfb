"""Run configuration loading and problem presets.

This module turns a JSON run configuration into a validated `RunConfig`.
Loading happens in three steps:

1. Read the JSON document (a single object).
2. Deep-merge it over the preset of its `problem` ("cantilever" or "mbb").
   Preset boundary regions are expressed relative to the resolved mesh
   extents, so overriding `mesh.width` moves the default spans with it.
3. Validate with Pydantic. Every error is collected and re-raised as a single
   `ConfigError` listing field paths and messages.

Example:
    >>> from config.run_config import load_config
    >>> config = load_config("runs/cantilever.json")
    >>> print(config.levelset.K)
    0.8
"""

import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

from pydantic import ValidationError

from data_models.run_config import RunConfig


# Configure logger
logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """Raised when a run configuration cannot be read or fails validation.

    Attributes:
        errors: One "field.path: message" entry per problem found
    """

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__(
            f"Invalid configuration ({len(self.errors)} error(s)): " + "; ".join(self.errors)
        )


# ============================================================================
# Problem presets
# ============================================================================

_PRESET_MESHES: Dict[str, Dict[str, Any]] = {
    "cantilever": {"width": 100.0, "height": 50.0, "nx": 100, "ny": 50, "layers": 50},
    "mbb": {"width": 150.0, "height": 50.0, "nx": 150, "ny": 50, "layers": 50},
}


def _preset(problem: str, width: float, height: float) -> Dict[str, Any]:
    """Return the preset for `problem` on a width x height domain."""
    if problem == "mbb":
        return {
            "build": {"substrate": {"kind": "bottom-span", "x0": 0.0, "x1": width}},
            "structure": {
                "traction": {
                    "selector": {"kind": "point-load-span", "edge": "top", "center": width / 2},
                    "traction": [0.0, -10.0],
                },
                # Rollers at both ends plus a horizontal pin at mid-span keep
                # the constraint set mirror symmetric.
                "supports": [
                    {"selector": {"kind": "bottom-span", "x0": 0.0, "x1": 0.0},
                     "fix_x": False, "fix_y": True},
                    {"selector": {"kind": "bottom-span", "x0": width, "x1": width},
                     "fix_x": False, "fix_y": True},
                    {"selector": {"kind": "bottom-span", "x0": width / 2, "x1": width / 2},
                     "fix_x": True, "fix_y": False},
                ],
            },
            "cutting": {"fixture": {"kind": "bottom-span", "x0": 0.0, "x1": 0.1 * width}},
        }

    # The protruding part beyond 60% of the width overhangs the substrate.
    return {
        "build": {"substrate": {"kind": "bottom-span", "x0": 0.0, "x1": 0.6 * width}},
        "structure": {
            "traction": {
                "selector": {"kind": "point-load-span", "edge": "right", "center": height / 2},
                "traction": [0.0, -10.0],
            },
            "supports": [{"selector": {"kind": "left-edge"}, "fix_x": True, "fix_y": True}],
        },
        "cutting": {"fixture": {"kind": "bottom-span", "x0": 0.0, "x1": 0.1 * width}},
    }


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge `override` into a copy of `base`.

    Nested dicts are merged key by key; any other value (lists included)
    replaces the base value.
    """
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _as_float(value: Any, fallback: float) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        return fallback


# ============================================================================
# Resolution and loading
# ============================================================================


def resolve_run_config(data: Dict[str, Any]) -> RunConfig:
    """Apply the problem preset to `data` and validate the result.

    Args:
        data: Parsed configuration document

    Returns:
        RunConfig: Fully resolved configuration

    Raises:
        ConfigError: If the document is not an object, names an unknown
            problem, or fails validation
    """
    if not isinstance(data, dict):
        raise ConfigError([f"<root>: expected a JSON object, got {type(data).__name__}"])

    problem = data.get("problem", "cantilever")
    if problem not in _PRESET_MESHES:
        raise ConfigError(
            [f"problem: must be one of {sorted(_PRESET_MESHES)} (got {problem!r})"]
        )

    user_mesh = data.get("mesh", {})
    mesh = deep_merge(_PRESET_MESHES[problem], user_mesh if isinstance(user_mesh, dict) else {})
    width = _as_float(mesh.get("width"), _PRESET_MESHES[problem]["width"])
    height = _as_float(mesh.get("height"), _PRESET_MESHES[problem]["height"])

    merged = deep_merge(_preset(problem, width, height), data)
    merged["problem"] = problem
    merged["mesh"] = mesh if isinstance(user_mesh, dict) else user_mesh

    try:
        config = RunConfig.model_validate(merged)
    except ValidationError as e:
        errors = []
        for err in e.errors():
            path = ".".join(str(part) for part in err["loc"]) or "<root>"
            errors.append(f"{path}: {err['msg']}")
        raise ConfigError(errors) from e

    logger.debug(
        f"Resolved {problem} config: {config.mesh.nx}x{config.mesh.ny} elements, "
        f"m={config.mesh.layers}, gamma={config.optimization.gamma}"
    )
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and resolve a JSON run configuration file.

    Args:
        path: Path to the JSON document

    Returns:
        RunConfig: Fully resolved configuration

    Raises:
        ConfigError: If the file is missing, is not valid JSON, or fails validation
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError([f"<file>: cannot read {path}: {e}"]) from e

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"<file>: {path} is not valid JSON: {e}"]) from e

    config = resolve_run_config(data)
    logger.info(f"[OK] Loaded configuration from {path} (problem={config.problem})")
    return config


def config_echo(config: RunConfig) -> Dict[str, Any]:
    """Return the JSON-serializable echo of a resolved configuration.

    Feeding the echo back through `resolve_run_config` reproduces `config`.
    """
    return config.model_dump(mode="json")
