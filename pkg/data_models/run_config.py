"""Run configuration models for distortion-aware topology optimization.

This module defines the nested Pydantic schema of a run configuration file.
Every section rejects unknown keys so that typos surface as errors instead of
being silently ignored. Problem presets (cantilever, MBB beam) and JSON
loading live in `config.run_config`; this module only validates.

Units follow the mm-MPa-N system: lengths in mm, Young's modulus in MPa,
tractions in N/mm.

Example:
    >>> from config.run_config import resolve_run_config
    >>> config = resolve_run_config({"problem": "cantilever"})
    >>> print(config.optimization.gamma, config.mesh.layers)
    0.1 50
"""

from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from data_models.boundaries import BoundarySelector, SupportSpec, TractionSpec


# ============================================================================
# Geometry and material
# ============================================================================


class MeshConfig(BaseModel):
    """Structured grid over the fixed design domain.

    Attributes:
        width: Domain width (mm)
        height: Domain height in the building direction (mm)
        nx: Element count along x
        ny: Element count along y
        layers: Number of AM layers m; ny must be a multiple of it
    """

    width: float = Field(..., gt=0, description="Domain width (mm)")
    height: float = Field(..., gt=0, description="Domain height (mm)")
    nx: int = Field(..., ge=1, description="Elements along x")
    ny: int = Field(..., ge=1, description="Elements along y")
    layers: int = Field(..., ge=1, description="AM layer count m")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def validate_layer_partition(self) -> "MeshConfig":
        """Every element row must belong to exactly one layer.

        Raises:
            ValueError: If ny is not divisible by layers
        """
        if self.ny % self.layers != 0:
            raise ValueError(
                f"ny ({self.ny}) must be an integer multiple of layers ({self.layers})"
            )
        return self


class MaterialConfig(BaseModel):
    """Isotropic linear elastic material (plane stress).

    Attributes:
        young_modulus: Young's modulus E (MPa)
        poisson_ratio: Poisson's ratio, 0 <= nu < 0.5
    """

    young_modulus: float = Field(default=75000.0, gt=0, description="E (MPa)")
    poisson_ratio: float = Field(default=0.34, ge=0, lt=0.5, description="Poisson's ratio")

    model_config = ConfigDict(extra="forbid")


class EigenstrainTensor(BaseModel):
    """In-plane inherent strain (shear fixed to zero).

    The x component is the in-layer value; y is the building direction,
    which is assumed strain free by default.

    Attributes:
        x: Normal inherent strain along x (dimensionless)
        y: Normal inherent strain along the building direction (dimensionless)
    """

    x: float = Field(default=-0.25, description="In-layer inherent strain")
    y: float = Field(default=0.0, description="Building-direction inherent strain")

    model_config = ConfigDict(extra="forbid", frozen=True)

    def as_voigt(self) -> np.ndarray:
        """Return (eps_xx, eps_yy, gamma_xy) in engineering Voigt order."""
        return np.array([self.x, self.y, 0.0])

    def scaled(self, factor: float) -> "EigenstrainTensor":
        """Return a copy with both components multiplied by `factor`."""
        return EigenstrainTensor(x=self.x * factor, y=self.y * factor)


# ============================================================================
# AM building process and cutting
# ============================================================================


class BuildConfig(BaseModel):
    """Layer-by-layer building process settings.

    Attributes:
        inherent_strain: Inherent strain applied to each freshly activated layer
        inactive_ratio: Stiffness scale of not-yet-built layers
        substrate: Build plate region Γ_u (fully clamped)
    """

    inherent_strain: EigenstrainTensor = Field(default_factory=EigenstrainTensor)
    inactive_ratio: float = Field(
        default=1e-9, gt=0, le=1e-3, description="Stiffness scale of inactive layers"
    )
    substrate: BoundarySelector

    model_config = ConfigDict(extra="forbid")


class CuttingConfig(BaseModel):
    """Springback analysis after partially separating the part from the plate.

    Attributes:
        fixture: Region that stays attached to the plate after cutting
        release_above: Elements whose centroid lies above this height release
            their stored elastic strain (0 releases the whole part)
    """

    fixture: BoundarySelector
    release_above: float = Field(default=0.0, ge=0, description="Release height (mm)")

    model_config = ConfigDict(extra="forbid")


class IdentificationConfig(BaseModel):
    """Inherent strain identification from a measured springback profile.

    Attributes:
        measured_profile: Two-column CSV (x, u_y) of the measured top surface
        reference_strain: Strain magnitude used for the unit forward solve
    """

    measured_profile: Optional[str] = Field(default=None, description="Profile CSV path")
    reference_strain: float = Field(default=1.0, description="Reference strain magnitude")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def validate_reference(self) -> "IdentificationConfig":
        """The reference strain must be nonzero."""
        if self.reference_strain == 0.0:
            raise ValueError("reference_strain must be nonzero")
        return self


# ============================================================================
# Structural problem and optimizer
# ============================================================================


class StructureConfig(BaseModel):
    """Static compliance problem: supports Γ_v and traction on Γ_t."""

    traction: TractionSpec
    supports: List[SupportSpec] = Field(..., min_length=1)

    model_config = ConfigDict(extra="forbid")


class LevelSetConfig(BaseModel):
    """Level set representation and reaction-diffusion update parameters.

    Attributes:
        width: Heaviside transition half-width w
        void_ratio: Ersatz stiffness ratio d of void material
        K: Update gain of the reaction-diffusion equation
        tau: Regularization parameter (dimensionless)
        dt: Fictitious time step
        characteristic_length: Length scaling the diffusion term; None uses
            max(width, height) of the domain
    """

    width: float = Field(default=0.5, gt=0, description="Heaviside width w")
    void_ratio: float = Field(default=1e-3, gt=0, lt=1, description="Ersatz ratio d")
    K: float = Field(default=0.8, gt=0, description="Reaction-diffusion gain")
    tau: float = Field(default=1e-4, ge=0, description="Regularization parameter")
    dt: float = Field(default=0.1, gt=0, description="Fictitious time step")
    characteristic_length: Optional[float] = Field(default=None, gt=0)

    model_config = ConfigDict(extra="forbid")


class OptimizationConfig(BaseModel):
    """Objective weighting, volume constraint and stopping rules.

    Attributes:
        gamma: Weight of the distortion objective, F = (1-gamma)F_MC + gamma F_AM
        beta: p-norm exponent of the distortion objective
        volume_max: Allowed material fraction V_max of the design domain
        max_iterations: Iteration cap
        min_iterations: Iterations required before convergence may be declared
        convergence_window: Number of trailing objective values compared
        convergence_tol: Relative spread of F over the window
        volume_shrink_rate: Per-iteration volume decrease of the target trajectory
        volume_tolerance: Bisection stopping tolerance relative to the target
    """

    gamma: float = Field(default=0.1, ge=0, le=1)
    beta: float = Field(default=5.0, ge=2)
    volume_max: float = Field(default=0.5, gt=0, le=1)
    max_iterations: int = Field(default=300, ge=1)
    min_iterations: int = Field(default=30, ge=0)
    convergence_window: int = Field(default=5, ge=2)
    convergence_tol: float = Field(default=1e-3, gt=0)
    volume_shrink_rate: float = Field(default=0.03, gt=0, lt=1)
    volume_tolerance: float = Field(default=1e-3, gt=0, le=0.01)

    model_config = ConfigDict(extra="forbid")


class OutputConfig(BaseModel):
    """Artifact settings.

    Attributes:
        snapshot_every: Snapshot cadence in iterations (None uses the
            DISTOPT_SNAPSHOT_EVERY setting)
        write_plots: Write the convergence history figure
    """

    snapshot_every: Optional[int] = Field(default=None, ge=1)
    write_plots: bool = True

    model_config = ConfigDict(extra="forbid")


# ============================================================================
# Root
# ============================================================================


class RunConfig(BaseModel):
    """Complete, resolved run configuration.

    Build it with `config.run_config.resolve_run_config` (applies problem
    presets) or `config.run_config.load_config` (reads a JSON file).
    """

    problem: Literal["cantilever", "mbb"] = "cantilever"
    mesh: MeshConfig
    material: MaterialConfig = Field(default_factory=MaterialConfig)
    build: BuildConfig
    structure: StructureConfig
    levelset: LevelSetConfig = Field(default_factory=LevelSetConfig)
    optimization: OptimizationConfig = Field(default_factory=OptimizationConfig)
    cutting: CuttingConfig
    identification: IdentificationConfig = Field(default_factory=IdentificationConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def validate_regions_inside_domain(self) -> "RunConfig":
        """Every boundary span must lie inside the domain extents.

        Raises:
            ValueError: Listing every selector that leaves the domain
        """
        width, height = self.mesh.width, self.mesh.height
        selectors = {
            "build.substrate": self.build.substrate,
            "structure.traction.selector": self.structure.traction.selector,
            "cutting.fixture": self.cutting.fixture,
        }
        for k, support in enumerate(self.structure.supports):
            selectors[f"structure.supports[{k}].selector"] = support.selector

        problems = []
        for name, sel in selectors.items():
            message = selector_extent_problem(sel, width, height)
            if message:
                problems.append(f"{name}: {message}")
        if self.cutting.release_above >= height:
            problems.append(
                f"cutting.release_above ({self.cutting.release_above}) must be below "
                f"the domain height ({height})"
            )
        if problems:
            raise ValueError("; ".join(problems))
        return self


def selector_extent_problem(
    selector: BoundarySelector, width: float, height: float
) -> Optional[str]:
    """Return a message if `selector` leaves a width x height domain, else None."""
    tol = 1e-9 * max(width, height)
    if selector.kind in ("bottom-span", "top-span"):
        if selector.x0 < -tol or selector.x1 > width + tol:
            return f"{selector.describe()} leaves [0, {width:g}]"
    if selector.kind == "point-load-span":
        length = width if selector.edge in ("bottom", "top") else height
        if not -tol <= selector.center <= length + tol:
            return f"{selector.describe()} center leaves [0, {length:g}]"
    return None
