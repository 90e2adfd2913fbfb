"""Objectives, adjoint solves and topological derivatives.

Objectives:
    F_MC = int_{Gamma_t} t . v                      (mean compliance)
    F_AM = (sum_e H_e |u_e|^beta area_e)^(1/beta)   (distortion p-norm)

|u_e| is taken at the element centroid with a 1e-12 squared-length
regularizer so the beta - 2 power stays differentiable at u = 0.

Adjoint convention: the adjoint load density is
    b = -F_AM^(1-beta) |u|^(beta-2) u
and each step adjoint solves K_i w_i = -P_i int N b H dA, where P_i keeps the
dofs of the layers built at step i. This makes w_i = K_i^-1 P_i dF_AM/du, so
the derivative of F_AM with respect to a scale on the inherent strain is
sum_i int_{Omega_i} eps_inh : C~ : eps(w_i), and the topological derivative is
    F'_AM = sum_i ( -eps(u_i) : A : eps(w_i) + [Omega_i] eps_inh : A : eps(w_i) )
            + F_AM^(1-beta) |u|^beta / beta

The last term is the explicit dependence of F_AM on the material weight H:
material added at a point makes its distortion count in the objective.

Element values are projected to the nodes by area-weighted averaging
before the reaction-diffusion update.

Example:
    >>> from tools.sensitivity import distortion_objective, td_compliance
    >>> f_am = distortion_objective(mesh, build.u, 5.0, weights)
    >>> d_mc = td_compliance(mesh, model, v)
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from tools.am_build import BuildResult, active_dof_mask, layer_stiffness_scale
from tools.fem import (
    ElasticityModel,
    FEMSolverError,
    LayerSolveError,
    LinearSystem,
    TractionBC,
    assemble_stiffness,
    body_force_load,
    element_strains,
    traction_load,
)
from tools.mesh import Mesh2D


# Configure logger
logger = logging.getLogger(__name__)

# Squared-length regularizer inside |u|
EPS_REG = 1e-12
# L1 norms below this fraction of |D| are treated as zero
NORM_FLOOR = 1e-300


# ============================================================================
# Objectives
# ============================================================================


def compliance(mesh: Mesh2D, bc: TractionBC, v: np.ndarray) -> float:
    """Mean compliance, the work of the traction on the displacement v."""
    return float(traction_load(mesh, bc) @ np.asarray(v))


def element_displacements(mesh: Mesh2D, u: np.ndarray) -> np.ndarray:
    """(E, 2) displacement at element centroids."""
    return np.asarray(u).reshape(-1, 2)[mesh.elements].mean(axis=1)


def _magnitude(u_e: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(u_e**2, axis=1) + EPS_REG)


def distortion_objective(
    mesh: Mesh2D, u: np.ndarray, beta: float, weights: Optional[np.ndarray] = None
) -> float:
    """Distortion p-norm of the accumulated build displacement.

    Args:
        mesh: Structured mesh
        u: (2N,) accumulated distortion
        beta: p-norm exponent (>= 2)
        weights: (E,) material weights H (None = full material)

    Returns:
        float: F_AM >= 0

    Example:
        >>> u = np.tile([3.0, 4.0], mesh.n_nodes)  # unit-area domain
        >>> distortion_objective(mesh, u, 2.0)
        5.0
    """
    if beta < 2:
        raise ValueError(f"beta must be at least 2 (got {beta})")
    h = np.ones(mesh.n_elements) if weights is None else np.asarray(weights, dtype=float)
    magnitude = _magnitude(element_displacements(mesh, u))
    integral = float(np.sum(h * magnitude**beta) * mesh.element_area)
    return integral ** (1.0 / beta)


def adjoint_load_density(
    mesh: Mesh2D, u: np.ndarray, beta: float, f_am: float
) -> np.ndarray:
    """(E, 2) element-constant adjoint density -F_AM^(1-beta) |u|^(beta-2) u.

    Returns zeros when F_AM is not positive.
    """
    if f_am <= 0.0:
        return np.zeros((mesh.n_elements, 2))
    u_e = element_displacements(mesh, u)
    magnitude = _magnitude(u_e)
    return -(f_am ** (1.0 - beta)) * (magnitude ** (beta - 2.0))[:, None] * u_e


# ============================================================================
# Adjoint solves
# ============================================================================


def solve_adjoints(
    mesh: Mesh2D,
    model: ElasticityModel,
    build_result: BuildResult,
    density: np.ndarray,
    weights: Optional[np.ndarray] = None,
    threads: int = 1,
) -> np.ndarray:
    """Adjoint fields of the m building steps.

    Step i reuses the forward system of the same step (cached factorization
    when the build kept it, otherwise a fresh one with the same stiffness
    pattern and substrate). Its load is the adjoint body force restricted to
    the dofs of the active layers.

    Args:
        mesh: Layered mesh
        model: Material model
        build_result: Forward build
        density: (E, 2) adjoint load density
        weights: (E,) material weights H applied to the density
        threads: Worker count for the independent solves

    Returns:
        np.ndarray: (m, 2N) adjoint fields, zero outside each step's active nodes

    Raises:
        LayerSolveError: If an adjoint solve fails (carries the layer index)
    """
    rhs = -body_force_load(mesh, density, None, weights)
    systems = build_result.systems

    def run(i: int) -> np.ndarray:
        active = active_dof_mask(mesh, i)
        try:
            if systems is not None:
                system = systems[i - 1]
            else:
                scale = layer_stiffness_scale(
                    mesh, build_result.material_scale, build_result.inactive_ratio, i
                )
                system = LinearSystem(
                    mesh, assemble_stiffness(mesh, scale, model), build_result.fixed_dofs
                )
            w_i = system.solve(np.where(active, rhs, 0.0))
        except FEMSolverError as e:
            raise LayerSolveError(i, "adjoint", e) from e
        w_i[~active] = 0.0
        return w_i

    steps = range(1, build_result.m + 1)
    if threads > 1 and build_result.m > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            adjoints = list(pool.map(run, steps))
    else:
        adjoints = [run(i) for i in steps]
    return np.array(adjoints)


# ============================================================================
# Topological derivatives
# ============================================================================


def td_compliance_elements(mesh: Mesh2D, model: ElasticityModel, v: np.ndarray) -> np.ndarray:
    """(E,) element values of -eps(v) : A : eps(v)."""
    eps = element_strains(mesh, v)
    return -model.contract_a(eps, eps)


def td_compliance(mesh: Mesh2D, model: ElasticityModel, v: np.ndarray) -> np.ndarray:
    """Topological derivative of the compliance, projected to the nodes."""
    return mesh.element_to_node(td_compliance_elements(mesh, model, v))


def distortion_weight_elements(
    mesh: Mesh2D, u: np.ndarray, beta: float, f_am: float
) -> np.ndarray:
    """(E,) partial derivative of F_AM per unit area of material weight.

    dF_AM/dH_e divided by area_e, i.e. F_AM^(1-beta) |u_e|^beta / beta;
    zeros when F_AM is not positive.
    """
    if f_am <= 0.0:
        return np.zeros(mesh.n_elements)
    magnitude = _magnitude(element_displacements(mesh, u))
    return f_am ** (1.0 - beta) * magnitude**beta / beta


def td_distortion_elements(
    mesh: Mesh2D,
    model: ElasticityModel,
    build_result: BuildResult,
    adjoints: np.ndarray,
    beta: Optional[float] = None,
    f_am: float = 0.0,
) -> np.ndarray:
    """(E,) element values of the distortion topological derivative.

    Step i contributes on the layers 1..i; the eigenstrain term only on
    layer i. With `beta` given, the explicit weight term of
    `distortion_weight_elements` is added.
    """
    if adjoints.shape[0] != build_result.m:
        raise ValueError(
            f"Layer count mismatch: {adjoints.shape[0]} adjoint fields for "
            f"{build_result.m} forward steps"
        )
    values = np.zeros(mesh.n_elements)
    for i in range(1, build_result.m + 1):
        active = mesh.layer_of <= i
        inh = mesh.layer_of == i
        eps_u = element_strains(mesh, build_result.u_layers[i - 1])
        eps_w = element_strains(mesh, adjoints[i - 1])
        term = -model.contract_a(eps_u, eps_w)
        term += inh * model.contract_a(
            np.broadcast_to(build_result.eps_inh, eps_w.shape), eps_w
        )
        values += np.where(active, term, 0.0)
    if beta is not None:
        values += distortion_weight_elements(mesh, build_result.u, beta, f_am)
    return values


def td_distortion(
    mesh: Mesh2D,
    model: ElasticityModel,
    build_result: BuildResult,
    adjoints: np.ndarray,
    beta: Optional[float] = None,
    f_am: float = 0.0,
) -> np.ndarray:
    """Topological derivative of the distortion objective, projected to the nodes."""
    return mesh.element_to_node(
        td_distortion_elements(mesh, model, build_result, adjoints, beta, f_am)
    )


def _l1_normalized(mesh: Mesh2D, field: np.ndarray, areas: np.ndarray) -> np.ndarray:
    norm = float(np.sum(np.abs(field) * areas))
    if norm < NORM_FLOOR * mesh.domain_area:
        return np.zeros_like(field)
    return field * mesh.domain_area / norm


def normalize_combine(
    mesh: Mesh2D, d_mc: np.ndarray, d_am: np.ndarray, gamma: float
) -> np.ndarray:
    """Weighted sum of the L1-normalized derivatives.

    Each component is scaled so that its mean absolute value over D is 1
    (lumped nodal areas); a component with vanishing norm contributes zero.

    Example:
        >>> normalize_combine(mesh, -2.0 * np.ones(n), np.zeros(n), 0.0)[:3]
        array([-1., -1., -1.])
    """
    areas = mesh.nodal_areas
    combined = (1.0 - gamma) * _l1_normalized(mesh, np.asarray(d_mc, dtype=float), areas)
    if gamma > 0.0:
        combined = combined + gamma * _l1_normalized(mesh, np.asarray(d_am, dtype=float), areas)
    return combined


@dataclass(frozen=True, eq=False)
class SensitivityField:
    """Nodal derivatives of one iteration.

    Attributes:
        d_mc: Compliance topological derivative
        d_am: Distortion topological derivative (zeros when gamma = 0)
        combined: Normalized combination driving the level set update
    """

    d_mc: np.ndarray
    d_am: np.ndarray
    combined: np.ndarray

    def is_finite(self) -> bool:
        return bool(all(np.all(np.isfinite(a)) for a in (self.d_mc, self.d_am, self.combined)))


def combined_objective(f_mc: float, f_am: float, gamma: float) -> float:
    """F = (1 - gamma) F_MC + gamma F_AM."""
    return (1.0 - gamma) * f_mc + gamma * f_am
