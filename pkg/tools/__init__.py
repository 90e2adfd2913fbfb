"""Numerical tools: mesh, finite elements, AM build, level set, sensitivities, exports.

Files in this directory:
- mesh.py: Structured quad mesh, layer masks and boundary selection
- fem.py: Plane-stress elasticity, sparse assembly, loads and constrained solves
- am_build.py: Layer-by-layer build, springback cutting and strain identification
- levelset.py: Smoothed Heaviside, ersatz scaling and reaction-diffusion update
- sensitivity.py: Objectives, adjoint solves and topological derivatives
- exporters.py: VTK, PGM, CSV, PNG and atomic JSON writers

Example:
    >>> from tools import build_structured_mesh, plane_stress_model, simulate_build
    >>> mesh = build_structured_mesh(100.0, 50.0, 100, 50, 50)
    >>> model = plane_stress_model(75000.0, 0.34)
    >>> result = simulate_build(mesh, model, config.build)
"""

from typing import List

from tools.mesh import (
    BoundarySelection,
    Mesh2D,
    MeshError,
    build_structured_mesh,
    layer_mask,
    mirror_element_map,
    mirror_node_map,
    select_boundary,
)
from tools.fem import (
    ElasticityModel,
    FEMSolverError,
    LayerSolveError,
    LinearSystem,
    NumericalBreakdownError,
    SingularSystemError,
    TractionBC,
    assemble_stiffness,
    body_force_load,
    eigenstrain_load,
    plane_stress_model,
    recover_strain_stress,
    solve,
    traction_load,
)
from tools.am_build import (
    BuildResult,
    IdentificationError,
    IdentificationResult,
    identify_inherent_strain,
    read_profile_csv,
    simulate_build,
    springback_cut,
    top_surface_profile,
)
from tools.levelset import (
    LevelSetField,
    RdeOperator,
    RdeParams,
    VolumeControlError,
    characteristic,
    count_void_regions,
    ersatz_scale,
    heaviside,
    rde_step,
    volume_controlled_step,
    volume_fraction,
)
from tools.sensitivity import (
    adjoint_load_density,
    compliance,
    distortion_objective,
    normalize_combine,
    solve_adjoints,
    td_compliance,
    td_distortion,
)
from tools.exporters import ExportError, write_pgm, write_vtk

__all__: List[str] = [
    # Mesh
    "BoundarySelection",
    "Mesh2D",
    "MeshError",
    "build_structured_mesh",
    "layer_mask",
    "mirror_element_map",
    "mirror_node_map",
    "select_boundary",
    # Finite elements
    "ElasticityModel",
    "FEMSolverError",
    "LayerSolveError",
    "LinearSystem",
    "NumericalBreakdownError",
    "SingularSystemError",
    "TractionBC",
    "assemble_stiffness",
    "body_force_load",
    "eigenstrain_load",
    "plane_stress_model",
    "recover_strain_stress",
    "solve",
    "traction_load",
    # AM build
    "BuildResult",
    "IdentificationError",
    "IdentificationResult",
    "identify_inherent_strain",
    "read_profile_csv",
    "simulate_build",
    "springback_cut",
    "top_surface_profile",
    # Level set
    "LevelSetField",
    "RdeOperator",
    "RdeParams",
    "VolumeControlError",
    "characteristic",
    "count_void_regions",
    "ersatz_scale",
    "heaviside",
    "rde_step",
    "volume_controlled_step",
    "volume_fraction",
    # Sensitivities
    "adjoint_load_density",
    "compliance",
    "distortion_objective",
    "normalize_combine",
    "solve_adjoints",
    "td_compliance",
    "td_distortion",
    # Exports
    "ExportError",
    "write_pgm",
    "write_vtk",
]
