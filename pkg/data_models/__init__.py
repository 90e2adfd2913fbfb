"""Pydantic data models for type-safe configuration and run records.

This module contains all Pydantic schemas used throughout the system
for validation, serialization, and type safety.

Files in this directory:
- boundaries.py: Boundary selectors, supports and tractions
- run_config.py: Nested run configuration (mesh, material, build, optimizer, ...)
- history.py: Objective values and per-iteration optimization history
- manifest.py: Run manifest written next to every command's outputs

Example:
    >>> from data_models import BoundarySelector, OptHistory
    >>> substrate = BoundarySelector(kind="bottom-span", x0=0.0, x1=60.0)
    >>> history = OptHistory()
"""

from typing import List

from data_models.boundaries import BoundarySelector, SupportSpec, TractionSpec
from data_models.run_config import (
    BuildConfig,
    CuttingConfig,
    EigenstrainTensor,
    IdentificationConfig,
    LevelSetConfig,
    MaterialConfig,
    MeshConfig,
    OptimizationConfig,
    OutputConfig,
    RunConfig,
    StructureConfig,
)
from data_models.history import HISTORY_COLUMNS, IterationRecord, ObjectiveValues, OptHistory
from data_models.manifest import RunManifest

__all__: List[str] = [
    # Boundaries
    "BoundarySelector",
    "SupportSpec",
    "TractionSpec",
    # Run configuration
    "BuildConfig",
    "CuttingConfig",
    "EigenstrainTensor",
    "IdentificationConfig",
    "LevelSetConfig",
    "MaterialConfig",
    "MeshConfig",
    "OptimizationConfig",
    "OutputConfig",
    "RunConfig",
    "StructureConfig",
    # History
    "HISTORY_COLUMNS",
    "IterationRecord",
    "ObjectiveValues",
    "OptHistory",
    # Manifest
    "RunManifest",
]
