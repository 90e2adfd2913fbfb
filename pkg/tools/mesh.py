"""Structured quadrilateral mesh of the fixed design domain.

This module builds the rectangular grid of 4-node elements used by every
analysis, tags each element with its AM layer and resolves boundary
selectors into node and edge sets.

Numbering:
    node (i, j) -> j * (nx + 1) + i, with i along x and j along y
    element (ex, ey) -> ey * nx + ex, connectivity counter-clockwise
    from the lower-left corner

Layers are horizontal bands of ny / m element rows numbered bottom-up from 1.

Example:
    >>> from tools.mesh import build_structured_mesh, layer_mask
    >>> mesh = build_structured_mesh(100.0, 50.0, 100, 50, 50)
    >>> inh, active = layer_mask(mesh, 3)
    >>> print(inh.sum(), active.sum())
    100 300
"""

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from data_models.boundaries import BoundarySelector


# Configure logger
logger = logging.getLogger(__name__)


class MeshError(Exception):
    """Raised for invalid mesh dimensions, empty selections or bad layer indices."""

    pass


@dataclass(frozen=True, eq=False)
class BoundarySelection:
    """Nodes and boundary edges picked by a selector.

    Attributes:
        nodes: Sorted node indices
        edges: (k, 2) node pairs of boundary segments whose both ends are selected
    """

    nodes: np.ndarray
    edges: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Structured grid over the design domain D (immutable after construction).

    Attributes:
        width: Domain width
        height: Domain height (building direction)
        nx: Elements along x
        ny: Elements along y
        m: Number of AM layers
        nodes: (N, 2) nodal coordinates
        elements: (E, 4) node connectivity
        layer_of: (E,) layer index 1..m of each element
        boundary_sets: Named node sets of the four domain edges
    """

    width: float
    height: float
    nx: int
    ny: int
    m: int
    nodes: np.ndarray
    elements: np.ndarray
    layer_of: np.ndarray
    boundary_sets: Dict[str, np.ndarray]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def dx(self) -> float:
        return self.width / self.nx

    @property
    def dy(self) -> float:
        return self.height / self.ny

    @property
    def element_area(self) -> float:
        return self.dx * self.dy

    @property
    def domain_area(self) -> float:
        return self.width * self.height

    @property
    def element_dofs(self) -> np.ndarray:
        """(E, 8) global dof indices ordered (u_x, u_y) per element node."""
        return np.stack([2 * self.elements, 2 * self.elements + 1], axis=2).reshape(-1, 8)

    @property
    def centroids(self) -> np.ndarray:
        """(E, 2) element centroid coordinates."""
        return self.nodes[self.elements].mean(axis=1)

    @property
    def nodal_areas(self) -> np.ndarray:
        """(N,) lumped nodal areas; they sum to the domain area."""
        areas = np.zeros(self.n_nodes)
        np.add.at(areas, self.elements.ravel(), self.element_area / 4.0)
        return areas

    def node_index(self, i: int, j: int) -> int:
        """Node index of grid position (i, j)."""
        return j * (self.nx + 1) + i

    def element_grid(self, values: np.ndarray) -> np.ndarray:
        """Reshape an element field to (ny, nx) with row 0 at the bottom."""
        return np.asarray(values).reshape(self.ny, self.nx)

    def element_to_node(self, values: np.ndarray) -> np.ndarray:
        """Area-weighted average of an element field onto the nodes."""
        values = np.asarray(values, dtype=float)
        weights = np.zeros(self.n_nodes)
        totals = np.zeros(self.n_nodes)
        area = self.element_area
        for corner in range(4):
            idx = self.elements[:, corner]
            totals += np.bincount(idx, weights=area * values, minlength=self.n_nodes)
            weights += np.bincount(idx, weights=np.full(idx.size, area), minlength=self.n_nodes)
        return totals / weights

    def node_to_element(self, values: np.ndarray) -> np.ndarray:
        """Mean of the four nodal values of each element."""
        return np.asarray(values)[self.elements].mean(axis=1)


# ============================================================================
# Construction
# ============================================================================


def build_structured_mesh(width: float, height: float, nx: int, ny: int, m: int) -> Mesh2D:
    """Build the structured grid and tag elements by layer.

    Args:
        width: Domain width (> 0)
        height: Domain height (> 0)
        nx: Elements along x (>= 1)
        ny: Elements along y (>= 1)
        m: Number of layers (>= 1, divides ny)

    Returns:
        Mesh2D: Mesh with nx*ny elements and (nx+1)*(ny+1) nodes

    Raises:
        MeshError: If a dimension is non-positive or ny is not divisible by m

    Example:
        >>> mesh = build_structured_mesh(10.0, 10.0, 10, 10, 5)
        >>> print(mesh.layer_of[:10].tolist())
        [1, 1, 1, 1, 1, 1, 1, 1, 1, 1]
    """
    if width <= 0 or height <= 0:
        raise MeshError(f"Domain extents must be positive (got width={width}, height={height})")
    if nx < 1 or ny < 1 or m < 1:
        raise MeshError(f"nx, ny and m must be at least 1 (got nx={nx}, ny={ny}, m={m})")
    if ny % m != 0:
        raise MeshError(f"ny ({ny}) must be an integer multiple of the layer count m ({m})")

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    ex, ey = np.meshgrid(np.arange(nx), np.arange(ny))
    ex, ey = ex.ravel(), ey.ravel()
    n0 = ey * (nx + 1) + ex
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])

    rows_per_layer = ny // m
    layer_of = ey // rows_per_layer + 1

    all_i = np.arange(nx + 1)
    all_j = np.arange(ny + 1)
    boundary_sets = {
        "bottom": all_i,
        "top": ny * (nx + 1) + all_i,
        "left": all_j * (nx + 1),
        "right": all_j * (nx + 1) + nx,
    }

    for array in (nodes, elements, layer_of, *boundary_sets.values()):
        array.setflags(write=False)

    mesh = Mesh2D(
        width=float(width),
        height=float(height),
        nx=int(nx),
        ny=int(ny),
        m=int(m),
        nodes=nodes,
        elements=elements,
        layer_of=layer_of,
        boundary_sets=boundary_sets,
    )
    logger.debug(
        f"Built {nx}x{ny} mesh over {width:g}x{height:g} with {m} layers "
        f"({rows_per_layer} row(s) per layer)"
    )
    return mesh


# ============================================================================
# Boundary selection
# ============================================================================


def _edge_nodes(mesh: Mesh2D, edge: str) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes of a domain edge in order, with their coordinate along the edge."""
    nodes = mesh.boundary_sets[edge]
    axis = 0 if edge in ("bottom", "top") else 1
    return nodes, mesh.nodes[nodes, axis]


def select_boundary(mesh: Mesh2D, selector: BoundarySelector) -> BoundarySelection:
    """Resolve a boundary selector into nodes and edge segments.

    Args:
        mesh: Target mesh
        selector: Boundary region description

    Returns:
        BoundarySelection: Sorted nodes and the boundary segments between
            consecutive selected nodes of the same edge

    Raises:
        MeshError: If the span leaves the domain or nothing is selected

    Example:
        >>> sel = select_boundary(mesh, BoundarySelector(kind="left-edge"))
        >>> print(sel.nodes.size)
        11
    """
    tol = 1e-9 * max(mesh.width, mesh.height)
    kind = selector.kind

    if kind in ("left-edge", "right-edge", "bottom-edge", "top-edge"):
        edge = kind.split("-")[0]
        nodes, _ = _edge_nodes(mesh, edge)
        picked = np.ones(nodes.size, dtype=bool)
    elif kind in ("bottom-span", "top-span"):
        edge = kind.split("-")[0]
        if selector.x0 < -tol or selector.x1 > mesh.width + tol:
            raise MeshError(f"{selector.describe()} leaves the domain [0, {mesh.width:g}]")
        nodes, coord = _edge_nodes(mesh, edge)
        picked = (coord >= selector.x0 - tol) & (coord <= selector.x1 + tol)
    else:
        edge = selector.edge
        nodes, coord = _edge_nodes(mesh, edge)
        length = mesh.width if edge in ("bottom", "top") else mesh.height
        if not -tol <= selector.center <= length + tol:
            raise MeshError(f"{selector.describe()} center leaves the edge [0, {length:g}]")
        spacing = mesh.dx if edge in ("bottom", "top") else mesh.dy
        half_width = spacing if selector.half_width is None else selector.half_width
        picked = np.abs(coord - selector.center) <= half_width + tol

    if not picked.any():
        raise MeshError(f"Boundary selector {selector.describe()} selects no nodes")

    # Segments between neighbouring nodes of the edge that are both selected
    segment = picked[:-1] & picked[1:]
    edges = np.column_stack([nodes[:-1][segment], nodes[1:][segment]])

    return BoundarySelection(nodes=np.sort(nodes[picked]), edges=edges.reshape(-1, 2))


# ============================================================================
# Layers and symmetry
# ============================================================================


def layer_mask(mesh: Mesh2D, i: int) -> Tuple[np.ndarray, np.ndarray]:
    """Element masks of the step-i eigenstrain domain and active domain.

    Args:
        mesh: Layered mesh
        i: Layer index, 1 <= i <= m

    Returns:
        Tuple[np.ndarray, np.ndarray]: (Ω_inh = Ω_i, Ω_A = Ω_1 ∪ … ∪ Ω_i);
            the inactive domain Ω_I is the complement of Ω_A

    Raises:
        MeshError: If i is out of range
    """
    if not 1 <= i <= mesh.m:
        raise MeshError(f"Layer index {i} out of range 1..{mesh.m}")
    return mesh.layer_of == i, mesh.layer_of <= i


def active_node_mask(mesh: Mesh2D, active_elements: np.ndarray) -> np.ndarray:
    """(N,) mask of nodes touching at least one active element."""
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    mask[mesh.elements[active_elements].ravel()] = True
    return mask


def mirror_node_map(mesh: Mesh2D) -> np.ndarray:
    """Map node k to its mirror image about the vertical centerline."""
    j, i = np.divmod(np.arange(mesh.n_nodes), mesh.nx + 1)
    return j * (mesh.nx + 1) + (mesh.nx - i)


def mirror_element_map(mesh: Mesh2D) -> np.ndarray:
    """Map element e to its mirror image about the vertical centerline."""
    ey, ex = np.divmod(np.arange(mesh.n_elements), mesh.nx)
    return ey * mesh.nx + (mesh.nx - 1 - ex)
