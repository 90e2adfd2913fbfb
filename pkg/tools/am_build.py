"""Layer-by-layer AM building simulation with the inherent strain method.

The part is built bottom-up. At step i the layers 1..i are active, the
layers above are filled with a very soft ersatz material, and the inherent
strain is applied to the freshly deposited layer i only. Each step is an
independent linear elasticity problem clamped on the substrate; the
distortion and residual stress of the finished part are the sums of the
per-step fields.

The module also covers the two analyses built on top of a finished build:

- springback_cut: deformation released when the part is cut from the
  substrate except for a fixture region
- identify_inherent_strain: least-squares fit of the inherent strain
  magnitude to a measured top-surface springback profile

Example:
    >>> from tools.am_build import simulate_build, springback_cut, top_surface_profile
    >>> result = simulate_build(mesh, model, config.build)
    >>> spring = springback_cut(mesh, model, result, config.cutting.fixture)
    >>> profile = top_surface_profile(mesh, spring)
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from data_models.boundaries import BoundarySelector
from data_models.run_config import BuildConfig, CuttingConfig, EigenstrainTensor
from tools.fem import (
    ArrayLike,
    ElasticityModel,
    FEMSolverError,
    LayerSolveError,
    LinearSystem,
    assemble_stiffness,
    clamp_dofs,
    eigenstrain_load,
    element_strains,
    recover_strain_stress,
)
from tools.mesh import Mesh2D, active_node_mask, layer_mask, select_boundary


# Configure logger
logger = logging.getLogger(__name__)


class IdentificationError(Exception):
    """Raised when the inherent strain cannot be identified from a profile."""

    pass


# ============================================================================
# Build result
# ============================================================================


@dataclass(eq=False)
class BuildResult:
    """Per-layer and accumulated fields of one simulated build.

    Attributes:
        u_layers: (m, 2N) step displacements u_i, zero outside the step's active nodes
        sigma_layers: (m, E, 3) step stresses sigma_i, zero on inactive elements
        u: (2N,) accumulated distortion, sum of u_layers in layer order
        sigma: (E, 3) accumulated residual stress, sum of sigma_layers
        material_scale: (E,) design stiffness multiplier used for the build
        eps_inh: (3,) Voigt inherent strain
        inactive_ratio: Stiffness scale of not-yet-built layers
        fixed_dofs: Substrate dofs clamped at every step
        systems: Factorized step systems kept for the adjoint solves (or None)
    """

    u_layers: np.ndarray
    sigma_layers: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    material_scale: np.ndarray
    eps_inh: np.ndarray
    inactive_ratio: float
    fixed_dofs: np.ndarray
    systems: Optional[List[LinearSystem]] = None

    @property
    def m(self) -> int:
        return self.u_layers.shape[0]

    def release_systems(self) -> None:
        """Drop the cached factorizations."""
        self.systems = None


def layer_stiffness_scale(
    mesh: Mesh2D, material_scale: np.ndarray, inactive_ratio: float, i: int
) -> np.ndarray:
    """Element stiffness multiplier at step i: design scale, softened above layer i."""
    _, active = layer_mask(mesh, i)
    return material_scale * np.where(active, 1.0, inactive_ratio)


def active_dof_mask(mesh: Mesh2D, i: int) -> np.ndarray:
    """(2N,) mask of dofs on nodes of the layers 1..i."""
    _, active = layer_mask(mesh, i)
    return np.repeat(active_node_mask(mesh, active), 2)


def _material_field(mesh: Mesh2D, material_scale: Optional[ArrayLike]) -> np.ndarray:
    if material_scale is None:
        return np.ones(mesh.n_elements)
    scale = np.array(np.broadcast_to(np.asarray(material_scale, dtype=float), (mesh.n_elements,)))
    if np.any(scale <= 0) or np.any(scale > 1):
        raise ValueError("Material scale must lie in (0, 1] on every element")
    return scale


# ============================================================================
# Building process
# ============================================================================


def _solve_layer(
    mesh: Mesh2D,
    model: ElasticityModel,
    material_scale: np.ndarray,
    eps_inh: np.ndarray,
    inactive_ratio: float,
    fixed_dofs: np.ndarray,
    i: int,
    keep_system: bool,
) -> Tuple[np.ndarray, np.ndarray, Optional[LinearSystem]]:
    """Forward solve of step i; returns (u_i, sigma_i, system or None)."""
    inh, active = layer_mask(mesh, i)
    scale = layer_stiffness_scale(mesh, material_scale, inactive_ratio, i)
    try:
        system = LinearSystem(mesh, assemble_stiffness(mesh, scale, model), fixed_dofs)
        load = eigenstrain_load(mesh, eps_inh, inh, scale, model)
        u_i = system.solve(load)
    except FEMSolverError as e:
        raise LayerSolveError(i, "forward", e) from e

    # The part only exists on the active layers
    u_i[~active_dof_mask(mesh, i)] = 0.0
    _, sigma_i = recover_strain_stress(mesh, u_i, model, scale, eps_inh, inh)
    sigma_i[~active] = 0.0
    return u_i, sigma_i, system if keep_system else None


def simulate_build(
    mesh: Mesh2D,
    model: ElasticityModel,
    build: BuildConfig,
    material_scale: Optional[ArrayLike] = None,
    threads: int = 1,
    keep_systems: bool = False,
) -> BuildResult:
    """Simulate the layer-by-layer build of the part.

    Args:
        mesh: Layered mesh (m layers)
        model: Material model
        build: Inherent strain, inactive ratio and substrate region
        material_scale: Design stiffness multiplier per element in (0, 1]
            (None = solid part)
        threads: Worker count for the independent layer solves
        keep_systems: Keep the step factorizations for adjoint reuse

    Returns:
        BuildResult: Per-layer and accumulated fields

    Raises:
        LayerSolveError: If the solve of a layer fails (carries the layer index)
        MeshError: If the substrate selects no nodes
    """
    scale = _material_field(mesh, material_scale)
    eps_inh = build.inherent_strain.as_voigt()
    fixed = clamp_dofs(select_boundary(mesh, build.substrate))
    steps = range(1, mesh.m + 1)

    def run(i: int):
        return _solve_layer(
            mesh, model, scale, eps_inh, build.inactive_ratio, fixed, i, keep_systems
        )

    if threads > 1 and mesh.m > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, steps))
    else:
        results = [run(i) for i in steps]

    u_layers = np.array([r[0] for r in results])
    sigma_layers = np.array([r[1] for r in results])

    # Fixed reduction order regardless of thread count
    u = np.zeros(mesh.n_dofs)
    sigma = np.zeros((mesh.n_elements, 3))
    for u_i, sigma_i in zip(u_layers, sigma_layers):
        u += u_i
        sigma += sigma_i

    logger.debug(
        f"Build of {mesh.m} layers done: max|u|={np.abs(u).max(initial=0.0):.4e}, "
        f"max|sigma|={np.abs(sigma).max(initial=0.0):.4e}"
    )
    return BuildResult(
        u_layers=u_layers,
        sigma_layers=sigma_layers,
        u=u,
        sigma=sigma,
        material_scale=scale,
        eps_inh=eps_inh,
        inactive_ratio=build.inactive_ratio,
        fixed_dofs=fixed,
        systems=[r[2] for r in results] if keep_systems else None,
    )


def distortion_strain_derivative(
    mesh: Mesh2D,
    model: ElasticityModel,
    build_result: BuildResult,
    adjoints: np.ndarray,
) -> float:
    """Derivative of the distortion objective w.r.t. a uniform scale s on the inherent strain.

    With the adjoint fields w_i = K_i^-1 P_i dF/du (see
    `tools.sensitivity.solve_adjoints`), the derivative at s = 1 is
    sum_i int_{Omega_i} eps_inh : C~_i : eps(w_i).

    Args:
        mesh: Layered mesh
        model: Material model
        build_result: Forward build
        adjoints: (m, 2N) adjoint fields, one per step

    Returns:
        float: dF_AM/ds at s = 1
    """
    if adjoints.shape[0] != build_result.m:
        raise ValueError(f"Got {adjoints.shape[0]} adjoint fields for {build_result.m} layers")

    total = 0.0
    stress_inh = build_result.eps_inh @ model.C.T
    for i in range(1, build_result.m + 1):
        inh, _ = layer_mask(mesh, i)
        scale = layer_stiffness_scale(
            mesh, build_result.material_scale, build_result.inactive_ratio, i
        )
        eps_w = element_strains(mesh, adjoints[i - 1])
        total += float(np.sum(scale[inh] * (eps_w[inh] @ stress_inh)) * mesh.element_area)
    return total


# ============================================================================
# Cutting (springback) analysis
# ============================================================================


def release_mask(mesh: Mesh2D, release_above: float = 0.0) -> np.ndarray:
    """Elements whose centroid lies above `release_above` (0 selects every element)."""
    return mesh.centroids[:, 1] > release_above


def springback_cut(
    mesh: Mesh2D,
    model: ElasticityModel,
    build_result: BuildResult,
    new_fixture: BoundarySelector,
    release: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Deformation released when the part is cut from the substrate.

    The finished part is clamped on `new_fixture` only and loaded by the
    eigenstrain -eps_el = -C~^-1 sigma on the released elements, i.e. by
    -int B^T sigma. A stress-free build therefore gives zero springback.

    Args:
        mesh: Layered mesh
        model: Material model
        build_result: Finished build (accumulated stress is used)
        new_fixture: Region that stays attached to the plate
        release: Element mask releasing its elastic strain (None = all)

    Returns:
        np.ndarray: (2N,) springback displacement

    Raises:
        SingularSystemError: If the fixture leaves rigid body modes
    """
    scale = build_result.material_scale
    fixed = clamp_dofs(select_boundary(mesh, new_fixture))
    system = LinearSystem(mesh, assemble_stiffness(mesh, scale, model), fixed)

    elastic_strain = (build_result.sigma / scale[:, None]) @ model.compliance_matrix().T
    load = eigenstrain_load(mesh, -elastic_strain, release, scale, model)
    spring = system.solve(load)

    logger.debug(
        f"Springback on {fixed.size // 2} fixture node(s): "
        f"max|u|={np.abs(spring).max(initial=0.0):.4e}"
    )
    return spring


def top_surface_profile(mesh: Mesh2D, displacement: np.ndarray) -> np.ndarray:
    """Vertical displacement of the top surface.

    Returns:
        np.ndarray: (nx+1, 2) rows of (x, u_y) ordered by x
    """
    nodes = mesh.boundary_sets["top"]
    order = np.argsort(mesh.nodes[nodes, 0], kind="stable")
    nodes = nodes[order]
    u_y = np.asarray(displacement)[2 * nodes + 1]
    return np.column_stack([mesh.nodes[nodes, 0], u_y])


# ============================================================================
# Inherent strain identification
# ============================================================================


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    """Fitted inherent strain and fit diagnostics.

    Attributes:
        strain: Identified in-layer inherent strain (build direction 0)
        residual_norm: Euclidean norm of fitted minus measured profile
        stations: x stations of the measured profile
        measured: Measured u_y at the stations
        fitted: Simulated u_y at the identified strain
    """

    strain: float
    residual_norm: float
    stations: np.ndarray
    measured: np.ndarray
    fitted: np.ndarray


def read_profile_csv(path: Union[str, Path]) -> np.ndarray:
    """Read a two-column (x, u_y) profile.

    Columns named `x` and `u_y` are used when present, otherwise the first
    two columns of a header-less file.

    Returns:
        np.ndarray: (k, 2) profile sorted by x

    Raises:
        IdentificationError: If the file is unreadable or not numeric
    """
    try:
        frame = pd.read_csv(path)
        if not {"x", "u_y"} <= set(frame.columns):
            frame = pd.read_csv(path, header=None)
        else:
            frame = frame[["x", "u_y"]]
        if frame.shape[1] < 2 or frame.shape[0] < 1:
            raise IdentificationError(f"Profile {path} needs two columns (x, u_y) and one row")
        data = frame.iloc[:, :2].apply(pd.to_numeric).to_numpy(dtype=float)
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise IdentificationError(f"Cannot read profile {path}: {e}") from e

    if not np.all(np.isfinite(data)):
        raise IdentificationError(f"Profile {path} contains non-finite values")
    return data[np.argsort(data[:, 0], kind="stable")]


def simulate_profile(
    mesh: Mesh2D,
    model: ElasticityModel,
    build: BuildConfig,
    cutting: CuttingConfig,
    strain: float,
    threads: int = 1,
) -> np.ndarray:
    """Top-surface springback profile of a solid build with in-layer strain `strain`."""
    trial = build.model_copy(update={"inherent_strain": EigenstrainTensor(x=strain, y=0.0)})
    result = simulate_build(mesh, model, trial, threads=threads)
    spring = springback_cut(
        mesh, model, result, cutting.fixture, release_mask(mesh, cutting.release_above)
    )
    return top_surface_profile(mesh, spring)


def identify_inherent_strain(
    mesh: Mesh2D,
    model: ElasticityModel,
    build: BuildConfig,
    cutting: CuttingConfig,
    measured_profile: np.ndarray,
    reference_strain: float = 1.0,
    threads: int = 1,
) -> IdentificationResult:
    """Least-squares fit of the inherent strain to a measured springback profile.

    The springback profile is linear in the strain magnitude, so with p_ref
    simulated at `reference_strain` the fit is closed form:
        eps* = <p_ref, p_meas> / <p_ref, p_ref> * reference_strain

    Args:
        mesh: Layered mesh
        model: Material model
        build: Build settings (the inherent strain itself is ignored)
        cutting: Cutting fixture and release region
        measured_profile: (k, 2) rows of (x, u_y); stations must lie on the
            top surface, simulated values are interpolated onto them
        reference_strain: Strain of the reference forward solve
        threads: Worker count for the layer solves

    Returns:
        IdentificationResult: Identified strain and residual

    Raises:
        IdentificationError: If the stations leave the top surface or the
            reference profile vanishes
    """
    measured_profile = np.asarray(measured_profile, dtype=float)
    if measured_profile.ndim != 2 or measured_profile.shape[1] != 2 or len(measured_profile) == 0:
        raise IdentificationError(
            f"Measured profile must have shape (k, 2), got {measured_profile.shape}"
        )
    stations, measured = measured_profile[:, 0], measured_profile[:, 1]
    tol = 1e-9 * mesh.width
    if stations.min() < -tol or stations.max() > mesh.width + tol:
        raise IdentificationError(
            f"Profile stations [{stations.min():g}, {stations.max():g}] leave the "
            f"top surface [0, {mesh.width:g}]"
        )

    reference = simulate_profile(mesh, model, build, cutting, reference_strain, threads)
    p_ref = np.interp(stations, reference[:, 0], reference[:, 1])

    denominator = float(p_ref @ p_ref)
    if denominator == 0.0 or not np.isfinite(denominator):
        raise IdentificationError("Reference springback profile is identically zero")

    factor = float(p_ref @ measured) / denominator
    fitted = factor * p_ref
    strain = factor * reference_strain
    residual = float(np.linalg.norm(fitted - measured))

    logger.info(f"[OK] Identified inherent strain {strain:.6g} (residual norm {residual:.3e})")
    return IdentificationResult(
        strain=strain,
        residual_norm=residual,
        stations=stations,
        measured=measured,
        fitted=fitted,
    )
