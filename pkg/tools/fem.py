"""Plane-stress linear elasticity on the structured quadrilateral mesh.

This module is the finite element core shared by the static compliance
problem, the layer-by-layer AM build, the adjoint systems and the level set
update:

- ElasticityModel: plane-stress tensor C and polarization tensor A
- Element operators for 4-node bilinear quads with 2x2 Gauss quadrature
- Sparse global assembly (stiffness, scalar mass and Laplacian)
- Loads: eigenstrain, edge traction, body force
- LinearSystem: constrained direct factorization reused across solves
- Strain and stress recovery at element centroids

Tensors use the engineering Voigt convention (eps_xx, eps_yy, gamma_xy)
with gamma_xy = 2 eps_xy; every contraction below, including eps:A:eps, is
written for that convention.

Example:
    >>> from tools.fem import plane_stress_model, assemble_stiffness, LinearSystem
    >>> model = plane_stress_model(75000.0, 0.34)
    >>> K = assemble_stiffness(mesh, 1.0, model)
    >>> system = LinearSystem(mesh, K, fixed_dofs)
    >>> u = system.solve(load)
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix, csc_matrix
from scipy.sparse.linalg import norm as sparse_norm
from scipy.sparse.linalg import splu

from data_models.boundaries import SupportSpec
from tools.mesh import BoundarySelection, Mesh2D, select_boundary


# Configure logger
logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Relative residual accepted from a direct solve
RESIDUAL_TOLERANCE = 1e-10


# ============================================================================
# Custom Exceptions
# ============================================================================


class FEMSolverError(Exception):
    """Base exception for linear solve failures."""

    pass


class SingularSystemError(FEMSolverError):
    """Raised when the constrained system is singular (rigid modes remain)."""

    pass


class NumericalBreakdownError(FEMSolverError):
    """Raised when a factorization produces a non-finite or inaccurate solution.

    Attributes:
        residual: Relative residual of the rejected solution
    """

    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(message)


class LayerSolveError(FEMSolverError):
    """Raised when the solve of one AM layer step fails.

    Attributes:
        layer: Layer index 1..m of the failing step
        stage: "forward" or "adjoint"
    """

    def __init__(self, layer: int, stage: str, cause: Exception):
        self.layer = layer
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage} solve of layer {layer} failed: {cause}")


# ============================================================================
# Material model
# ============================================================================


@dataclass(frozen=True, eq=False)
class ElasticityModel:
    """Isotropic plane-stress material.

    Attributes:
        E: Young's modulus (MPa)
        nu: Poisson's ratio
        C: (3, 3) plane-stress elasticity matrix, Voigt engineering strains
        A: (3, 3) polarization tensor in the same convention, so that
            eps1 @ A @ eps2 equals the tensor contraction eps1 : A : eps2
    """

    E: float
    nu: float
    C: np.ndarray
    A: np.ndarray

    def contract_a(self, eps1: np.ndarray, eps2: np.ndarray) -> np.ndarray:
        """Row-wise eps1 : A : eps2 for (..., 3) Voigt strain arrays."""
        return np.einsum("...i,ij,...j->...", eps1, self.A, eps2)

    def compliance_matrix(self) -> np.ndarray:
        """Inverse of C (strain from stress)."""
        return np.linalg.inv(self.C)


def plane_stress_model(E: float, nu: float) -> ElasticityModel:
    """Build the plane-stress elasticity and polarization tensors.

    The polarization tensor is
        A_ijkl = 1/(1+nu)^2 { -(1 - 6 nu + nu^2) E/(1-nu)^2 d_ij d_kl
                              + 2E (d_ik d_jl + d_il d_jk) },
    i.e. A = a I(x)I + 2b Isym with a = -(1-6nu+nu^2)E/((1-nu)^2 (1+nu)^2)
    and b = 2E/(1+nu)^2. With engineering shear the Voigt matrix is
    [[a+2b, a, 0], [a, a+2b, 0], [0, 0, b]].

    Args:
        E: Young's modulus (> 0)
        nu: Poisson's ratio (0 <= nu < 0.5)

    Returns:
        ElasticityModel: Tensors C and A

    Raises:
        ValueError: If E <= 0 or nu is outside [0, 0.5)

    Example:
        >>> model = plane_stress_model(1.0, 0.0)
        >>> eps = np.array([1.0, 0.0, 0.0])
        >>> print(model.contract_a(eps, eps))
        3.0
    """
    if E <= 0:
        raise ValueError(f"Young's modulus must be positive (got {E})")
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"Poisson's ratio must be in [0, 0.5) (got {nu})")

    factor = E / (1.0 - nu**2)
    C = factor * np.array(
        [
            [1.0, nu, 0.0],
            [nu, 1.0, 0.0],
            [0.0, 0.0, (1.0 - nu) / 2.0],
        ]
    )

    a = -(1.0 - 6.0 * nu + nu**2) * E / ((1.0 - nu) ** 2 * (1.0 + nu) ** 2)
    b = 2.0 * E / (1.0 + nu) ** 2
    A = np.array(
        [
            [a + 2.0 * b, a, 0.0],
            [a, a + 2.0 * b, 0.0],
            [0.0, 0.0, b],
        ]
    )

    for matrix in (C, A):
        matrix.setflags(write=False)
    return ElasticityModel(E=float(E), nu=float(nu), C=C, A=A)


# ============================================================================
# Reference element (bilinear quad, 2x2 Gauss)
# ============================================================================

_NATURAL_NODES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_GAUSS = 1.0 / np.sqrt(3.0)
_GAUSS_POINTS = np.array([[-_GAUSS, -_GAUSS], [_GAUSS, -_GAUSS], [_GAUSS, _GAUSS], [-_GAUSS, _GAUSS]])


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Precomputed operators of one dx x dy rectangle.

    Attributes:
        det_j: Jacobian determinant (area / 4); Gauss weights are 1
        shape: (4 gp, 4 nodes) shape function values
        grads: (4 gp, 4 nodes, 2) physical shape function gradients
        b_gauss: (4 gp, 3, 8) strain-displacement matrices
        b_centroid: (3, 8) strain-displacement matrix at the centroid
        b_integral: (3, 8) integral of B over the element
    """

    det_j: float
    shape: np.ndarray
    grads: np.ndarray
    b_gauss: np.ndarray
    b_centroid: np.ndarray
    b_integral: np.ndarray


def _shape_data(xi: float, eta: float, dx: float, dy: float) -> Tuple[np.ndarray, np.ndarray]:
    xi_n, eta_n = _NATURAL_NODES[:, 0], _NATURAL_NODES[:, 1]
    n = 0.25 * (1.0 + xi_n * xi) * (1.0 + eta_n * eta)
    dn_dxi = 0.25 * xi_n * (1.0 + eta_n * eta)
    dn_deta = 0.25 * eta_n * (1.0 + xi_n * xi)
    grads = np.column_stack([dn_dxi * 2.0 / dx, dn_deta * 2.0 / dy])
    return n, grads


def _strain_matrix(grads: np.ndarray) -> np.ndarray:
    b = np.zeros((3, 8))
    b[0, 0::2] = grads[:, 0]
    b[1, 1::2] = grads[:, 1]
    b[2, 0::2] = grads[:, 1]
    b[2, 1::2] = grads[:, 0]
    return b


@lru_cache(maxsize=32)
def reference_element(dx: float, dy: float) -> ReferenceElement:
    """Operators of a dx x dy bilinear element (cached per element size)."""
    shape, grads = zip(*(_shape_data(xi, eta, dx, dy) for xi, eta in _GAUSS_POINTS))
    shape = np.array(shape)
    grads = np.array(grads)
    b_gauss = np.array([_strain_matrix(g) for g in grads])
    _, grads_c = _shape_data(0.0, 0.0, dx, dy)
    det_j = dx * dy / 4.0
    return ReferenceElement(
        det_j=det_j,
        shape=shape,
        grads=grads,
        b_gauss=b_gauss,
        b_centroid=_strain_matrix(grads_c),
        b_integral=b_gauss.sum(axis=0) * det_j,
    )


def element_stiffness(mesh: Mesh2D, model: ElasticityModel) -> np.ndarray:
    """(8, 8) unit-scale element stiffness, exactly symmetric."""
    ref = reference_element(mesh.dx, mesh.dy)
    ke = sum(b.T @ model.C @ b for b in ref.b_gauss) * ref.det_j
    return 0.5 * (ke + ke.T)


def _element_field(mesh: Mesh2D, values: ArrayLike) -> np.ndarray:
    field = np.broadcast_to(np.asarray(values, dtype=float), (mesh.n_elements,))
    return np.array(field)


def _element_mask(mesh: Mesh2D, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return np.ones(mesh.n_elements, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (mesh.n_elements,):
        raise ValueError(f"Element mask has shape {mask.shape}, expected ({mesh.n_elements},)")
    return mask


# ============================================================================
# Global assembly
# ============================================================================


def _assemble(element_dofs: np.ndarray, blocks: np.ndarray, size: int) -> csc_matrix:
    """Sum per-element dense blocks (E, k, k) into a sparse (size, size) matrix."""
    k = element_dofs.shape[1]
    rows = np.repeat(element_dofs, k, axis=1).ravel()
    cols = np.tile(element_dofs, (1, k)).ravel()
    return coo_matrix((blocks.ravel(), (rows, cols)), shape=(size, size)).tocsc()


def assemble_stiffness(mesh: Mesh2D, per_element_scale: ArrayLike, model: ElasticityModel) -> csc_matrix:
    """Assemble K = sum_e s_e K_e over the mesh.

    Args:
        mesh: Structured mesh
        per_element_scale: Positive stiffness multiplier per element (or scalar)
        model: Material model

    Returns:
        csc_matrix: (2N, 2N) symmetric stiffness matrix

    Raises:
        ValueError: If any scale is not positive
    """
    scale = _element_field(mesh, per_element_scale)
    if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
        raise ValueError("Element stiffness scales must be positive and finite")
    ke = element_stiffness(mesh, model)
    blocks = scale[:, None, None] * ke[None, :, :]
    return _assemble(mesh.element_dofs, blocks, mesh.n_dofs)


def assemble_scalar_mass(mesh: Mesh2D) -> csc_matrix:
    """Consistent mass matrix of nodal scalar fields, int N_i N_j dA."""
    ref = reference_element(mesh.dx, mesh.dy)
    me = np.einsum("gi,gj->ij", ref.shape, ref.shape) * ref.det_j
    blocks = np.broadcast_to(me, (mesh.n_elements, 4, 4))
    return _assemble(mesh.elements, blocks, mesh.n_nodes)


def assemble_scalar_laplacian(mesh: Mesh2D) -> csc_matrix:
    """Stiffness of the Laplacian for nodal scalar fields, int grad N_i . grad N_j dA."""
    ref = reference_element(mesh.dx, mesh.dy)
    le = np.einsum("gik,gjk->ij", ref.grads, ref.grads) * ref.det_j
    blocks = np.broadcast_to(le, (mesh.n_elements, 4, 4))
    return _assemble(mesh.elements, blocks, mesh.n_nodes)


def _scatter(mesh: Mesh2D, element_vectors: np.ndarray) -> np.ndarray:
    """Sum (E, 8) element vectors into a (2N,) global vector."""
    return np.bincount(
        mesh.element_dofs.ravel(), weights=element_vectors.ravel(), minlength=mesh.n_dofs
    )


# ============================================================================
# Loads
# ============================================================================


@dataclass(frozen=True, eq=False)
class TractionBC:
    """Constant traction on a set of boundary edges.

    Attributes:
        edges: (k, 2) boundary segments (node pairs), k >= 1
        traction: (2,) traction vector, force per unit length
    """

    edges: np.ndarray
    traction: np.ndarray

    def __post_init__(self) -> None:
        if np.asarray(self.edges).size == 0:
            raise ValueError("Traction boundary needs at least one edge")

    @classmethod
    def from_selection(cls, selection: BoundarySelection, traction) -> "TractionBC":
        return cls(edges=selection.edges, traction=np.asarray(traction, dtype=float))


def eigenstrain_load(
    mesh: Mesh2D,
    eps_inh: np.ndarray,
    element_mask: Optional[np.ndarray],
    per_element_scale: ArrayLike,
    model: ElasticityModel,
) -> np.ndarray:
    """Equivalent nodal forces of a stress-free strain, int B^T C~ eps_inh dA.

    Args:
        mesh: Structured mesh
        eps_inh: (3,) Voigt eigenstrain or (E, 3) per-element eigenstrains
        element_mask: Elements carrying the eigenstrain (None = all)
        per_element_scale: Ersatz stiffness multiplier per element
        model: Material model

    Returns:
        np.ndarray: (2N,) load vector supported on nodes of masked elements

    Example:
        >>> f = eigenstrain_load(mesh, np.array([-0.25, -0.25, 0.0]), None, 1.0, model)
    """
    mask = _element_mask(mesh, element_mask)
    scale = _element_field(mesh, per_element_scale) * mask
    strain = np.broadcast_to(np.asarray(eps_inh, dtype=float), (mesh.n_elements, 3))
    stress = scale[:, None] * (strain @ model.C.T)
    ref = reference_element(mesh.dx, mesh.dy)
    return _scatter(mesh, stress @ ref.b_integral)


def traction_load(mesh: Mesh2D, bc: TractionBC) -> np.ndarray:
    """Consistent load of a constant traction on boundary edges.

    Each edge of length L sends t * L / 2 to both of its end nodes, so the
    total force equals t times the loaded length.
    """
    load = np.zeros(mesh.n_dofs)
    edges = np.asarray(bc.edges).reshape(-1, 2)
    lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    for end in range(2):
        for comp in range(2):
            np.add.at(load, 2 * edges[:, end] + comp, 0.5 * lengths * bc.traction[comp])
    return load


def body_force_load(
    mesh: Mesh2D,
    density: np.ndarray,
    element_mask: Optional[np.ndarray] = None,
    element_weights: Optional[ArrayLike] = None,
) -> np.ndarray:
    """Consistent load of a body force density, int N_i w b dA over masked elements.

    Args:
        mesh: Structured mesh
        density: (N, 2) nodal density interpolated bilinearly, or (E, 2)
            element-constant density
        element_mask: Elements that carry the load (None = all)
        element_weights: Optional per-element multiplier w (e.g. H(phi))

    Returns:
        np.ndarray: (2N,) load vector
    """
    density = np.asarray(density, dtype=float)
    mask = _element_mask(mesh, element_mask)
    weights = _element_field(mesh, 1.0 if element_weights is None else element_weights) * mask
    ref = reference_element(mesh.dx, mesh.dy)

    if density.shape == (mesh.n_elements, 2):
        # int N_i dA = area / 4 for every node of a rectangle
        nodal = np.repeat(density[:, None, :], 4, axis=1) * (mesh.element_area / 4.0)
    elif density.shape == (mesh.n_nodes, 2):
        me = np.einsum("gi,gj->ij", ref.shape, ref.shape) * ref.det_j
        nodal = np.einsum("ij,ejc->eic", me, density[mesh.elements])
    else:
        raise ValueError(
            f"Body force density has shape {density.shape}; expected "
            f"({mesh.n_nodes}, 2) or ({mesh.n_elements}, 2)"
        )
    return _scatter(mesh, (weights[:, None, None] * nodal).reshape(-1, 8))


# ============================================================================
# Dirichlet sets and linear solves
# ============================================================================


def clamp_dofs(selection: BoundarySelection) -> np.ndarray:
    """Both displacement components of every selected node."""
    nodes = selection.nodes
    return np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))


def support_dofs(mesh: Mesh2D, supports) -> np.ndarray:
    """Constrained dofs of a list of SupportSpec."""
    dofs = []
    for support in supports:
        support: SupportSpec
        nodes = select_boundary(mesh, support.selector).nodes
        if support.fix_x:
            dofs.append(2 * nodes)
        if support.fix_y:
            dofs.append(2 * nodes + 1)
    return np.unique(np.concatenate(dofs))


def _rigid_modes_blocked(mesh: Mesh2D, fixed_dofs: np.ndarray) -> bool:
    """True if the fixed dofs suppress both translations and the rotation."""
    if fixed_dofs.size == 0:
        return False
    nodes, comps = np.divmod(fixed_dofs, 2)
    xy = mesh.nodes[nodes] - mesh.nodes.mean(axis=0)
    modes = np.zeros((fixed_dofs.size, 3))
    modes[comps == 0, 0] = 1.0
    modes[comps == 1, 1] = 1.0
    modes[:, 2] = np.where(comps == 0, -xy[:, 1], xy[:, 0])
    modes[:, 2] /= max(mesh.width, mesh.height)
    return np.linalg.matrix_rank(modes, tol=1e-10) == 3


class LinearSystem:
    """Factorized stiffness system with homogeneous Dirichlet conditions.

    Dirichlet conditions are imposed by eliminating the constrained rows and
    columns, which keeps the reduced matrix symmetric. The factorization is
    computed once and reused for every right-hand side (forward loads and the
    adjoint loads of the same step).

    Attributes:
        matrix: Full (2N, 2N) stiffness matrix
        fixed: Sorted constrained dofs
        free: Sorted unconstrained dofs
        last_residual: Relative residual of the most recent solve
    """

    def __init__(self, mesh: Mesh2D, matrix: csc_matrix, fixed_dofs: np.ndarray):
        """Factorize the reduced system.

        Raises:
            SingularSystemError: If the constraints leave rigid body modes or
                the factorization is exactly singular
        """
        self.matrix = matrix
        self.fixed = np.unique(np.asarray(fixed_dofs, dtype=int))
        self.free = np.setdiff1d(np.arange(matrix.shape[0]), self.fixed)
        self.last_residual = 0.0

        if not _rigid_modes_blocked(mesh, self.fixed):
            raise SingularSystemError(
                f"Dirichlet set of {self.fixed.size} dof(s) does not remove all rigid body modes"
            )

        self._reduced = matrix[self.free][:, self.free].tocsc()
        self._norm = float(sparse_norm(self._reduced, np.inf))
        try:
            self._lu = splu(self._reduced)
        except RuntimeError as e:
            raise SingularSystemError(f"Stiffness factorization is singular: {e}") from e

    def _relative_residual(self, u_free: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, float]:
        residual = self._reduced @ u_free - rhs
        scale = self._norm * np.abs(u_free).max(initial=0.0) + np.abs(rhs).max(initial=0.0)
        if scale == 0.0:
            return residual, 0.0
        return residual, float(np.abs(residual).max() / scale)

    def solve(self, load: np.ndarray) -> np.ndarray:
        """Solve K u = f with u = 0 on the constrained dofs.

        Args:
            load: (2N,) load vector (entries on constrained dofs are ignored)

        Returns:
            np.ndarray: (2N,) displacement, exactly zero on constrained dofs

        Raises:
            NumericalBreakdownError: If the solution is non-finite or its
                residual stays above tolerance after one refinement step
        """
        rhs = np.asarray(load, dtype=float)[self.free]
        u_free = self._lu.solve(rhs)
        if not np.all(np.isfinite(u_free)):
            raise NumericalBreakdownError("Direct solve produced non-finite values")

        residual, rel = self._relative_residual(u_free, rhs)
        if rel > RESIDUAL_TOLERANCE:
            logger.debug(f"Residual {rel:.3e} above tolerance, refining once")
            u_free = u_free - self._lu.solve(residual)
            residual, rel = self._relative_residual(u_free, rhs)
            if rel > RESIDUAL_TOLERANCE:
                raise NumericalBreakdownError(
                    f"Relative residual {rel:.3e} exceeds {RESIDUAL_TOLERANCE:.0e}", rel
                )

        self.last_residual = rel
        u = np.zeros(self.matrix.shape[0])
        u[self.free] = u_free
        return u


def solve(mesh: Mesh2D, matrix: csc_matrix, load: np.ndarray, fixed_dofs: np.ndarray) -> np.ndarray:
    """One-shot constrained solve (factorize, solve, discard)."""
    return LinearSystem(mesh, matrix, fixed_dofs).solve(load)


# ============================================================================
# Strain and stress recovery
# ============================================================================


def element_strains(mesh: Mesh2D, u: np.ndarray) -> np.ndarray:
    """(E, 3) Voigt strains at element centroids."""
    ref = reference_element(mesh.dx, mesh.dy)
    return np.asarray(u)[mesh.element_dofs] @ ref.b_centroid.T


def recover_strain_stress(
    mesh: Mesh2D,
    u: np.ndarray,
    model: ElasticityModel,
    per_element_scale: ArrayLike = 1.0,
    eps_inh: Optional[np.ndarray] = None,
    inh_mask: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Centroid strain and stress, sigma = s C (eps - eps_inh [mask]).

    Args:
        mesh: Structured mesh
        u: (2N,) displacement
        model: Material model
        per_element_scale: Ersatz stiffness multiplier per element
        eps_inh: (3,) or (E, 3) eigenstrain (None = no eigenstrain)
        inh_mask: Elements where the eigenstrain is subtracted (None = all)

    Returns:
        Tuple[np.ndarray, np.ndarray]: (E, 3) strains and (E, 3) stresses
    """
    eps = element_strains(mesh, u)
    elastic = eps.copy()
    if eps_inh is not None:
        mask = _element_mask(mesh, inh_mask)
        strain = np.broadcast_to(np.asarray(eps_inh, dtype=float), (mesh.n_elements, 3))
        elastic -= strain * mask[:, None]
    scale = _element_field(mesh, per_element_scale)
    sigma = scale[:, None] * (elastic @ model.C.T)
    return eps, sigma
