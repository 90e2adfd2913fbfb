"""Test the structured mesh, layer masks and boundary selection."""

import logging

import numpy as np
import pytest

from data_models.boundaries import BoundarySelector
from tools.mesh import (
    MeshError,
    active_node_mask,
    build_structured_mesh,
    layer_mask,
    mirror_element_map,
    mirror_node_map,
    select_boundary,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def test_counts_and_numbering():
    """Node and element counts follow the documented numbering."""
    mesh = build_structured_mesh(4.0, 2.0, 4, 2, 2)

    assert mesh.n_nodes == 15
    assert mesh.n_elements == 8
    assert mesh.n_dofs == 30
    assert mesh.node_index(4, 2) == 14
    np.testing.assert_allclose(mesh.nodes[mesh.node_index(3, 1)], [3.0, 1.0])
    # Lower-left element, counter-clockwise from the lower-left corner
    assert mesh.elements[0].tolist() == [0, 1, 6, 5]
    assert mesh.element_dofs[0].tolist() == [0, 1, 2, 3, 12, 13, 10, 11]
    logger.info("[PASS] Numbering")


def test_layers_are_bottom_up_bands():
    mesh = build_structured_mesh(10.0, 6.0, 5, 6, 3)

    assert mesh.layer_of.min() == 1 and mesh.layer_of.max() == 3
    assert np.all(mesh.layer_of[:10] == 1)
    assert np.all(mesh.layer_of[-10:] == 3)

    inh, active = layer_mask(mesh, 2)
    assert inh.sum() == 10
    assert active.sum() == 20
    assert np.all(active[inh])

    nodes = active_node_mask(mesh, active)
    assert nodes.sum() == 6 * 5
    logger.info("[PASS] Layer partition")


def test_layer_index_out_of_range():
    mesh = build_structured_mesh(1.0, 1.0, 2, 2, 2)
    with pytest.raises(MeshError):
        layer_mask(mesh, 0)
    with pytest.raises(MeshError):
        layer_mask(mesh, 3)


def test_invalid_dimensions():
    with pytest.raises(MeshError, match="multiple"):
        build_structured_mesh(1.0, 1.0, 4, 5, 2)
    with pytest.raises(MeshError):
        build_structured_mesh(0.0, 1.0, 4, 4, 1)
    with pytest.raises(MeshError):
        build_structured_mesh(1.0, 1.0, 0, 4, 1)


def test_geometry_helpers():
    mesh = build_structured_mesh(3.0, 2.0, 3, 4, 2)

    assert mesh.element_area == pytest.approx(0.5)
    assert mesh.nodal_areas.sum() == pytest.approx(mesh.domain_area)
    np.testing.assert_allclose(mesh.centroids[0], [0.5, 0.25])

    constant = np.full(mesh.n_elements, 2.5)
    np.testing.assert_allclose(mesh.element_to_node(constant), 2.5)
    np.testing.assert_allclose(mesh.node_to_element(np.full(mesh.n_nodes, -1.0)), -1.0)
    assert mesh.element_grid(np.arange(mesh.n_elements)).shape == (4, 3)


def test_select_edges_and_spans():
    """Edge, span and point-load-span selectors pick the expected nodes."""
    mesh = build_structured_mesh(10.0, 5.0, 10, 5, 5)

    left = select_boundary(mesh, BoundarySelector(kind="left-edge"))
    assert left.nodes.size == 6
    assert left.edges.shape == (5, 2)

    span = select_boundary(mesh, BoundarySelector(kind="bottom-span", x0=0.0, x1=6.0))
    assert span.nodes.tolist() == list(range(7))
    assert span.edges.shape == (6, 2)

    single = select_boundary(mesh, BoundarySelector(kind="bottom-span", x0=10.0, x1=10.0))
    assert single.nodes.tolist() == [10]
    assert single.edges.shape == (0, 2)

    load = select_boundary(
        mesh, BoundarySelector(kind="point-load-span", edge="right", center=2.5, half_width=1.0)
    )
    ys = mesh.nodes[load.nodes, 1]
    assert ys.tolist() == [2.0, 3.0]
    assert load.edges.shape == (1, 2)
    logger.info("[PASS] Boundary selection")


def test_empty_selection_raises():
    mesh = build_structured_mesh(10.0, 5.0, 10, 5, 5)
    selector = BoundarySelector(kind="point-load-span", edge="top", center=2.5, half_width=0.1)
    with pytest.raises(MeshError, match="selects no nodes"):
        select_boundary(mesh, selector)


def test_mirror_maps_are_involutions():
    mesh = build_structured_mesh(6.0, 2.0, 6, 2, 1)
    nodes = mirror_node_map(mesh)
    elements = mirror_element_map(mesh)

    np.testing.assert_array_equal(nodes[nodes], np.arange(mesh.n_nodes))
    np.testing.assert_array_equal(elements[elements], np.arange(mesh.n_elements))
    np.testing.assert_allclose(mesh.nodes[nodes, 0], mesh.width - mesh.nodes[:, 0])
    np.testing.assert_allclose(mesh.centroids[elements, 0], mesh.width - mesh.centroids[:, 0])
