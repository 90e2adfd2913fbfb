"""Test plane-stress finite elements: patch test, loads, eigenstrains and solver errors."""

import logging

import numpy as np
import pytest

from data_models.boundaries import BoundarySelector, SupportSpec
from tools.fem import (
    LinearSystem,
    SingularSystemError,
    TractionBC,
    assemble_scalar_laplacian,
    assemble_scalar_mass,
    assemble_stiffness,
    body_force_load,
    eigenstrain_load,
    element_stiffness,
    plane_stress_model,
    recover_strain_stress,
    solve,
    support_dofs,
    traction_load,
)
from tools.mesh import build_structured_mesh, select_boundary

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

MODEL = plane_stress_model(75000.0, 0.34)


def _statically_determinate(mesh):
    """Left edge fixed in x plus the lower-left node fixed in y."""
    return support_dofs(
        mesh,
        [
            SupportSpec(selector=BoundarySelector(kind="left-edge"), fix_x=True, fix_y=False),
            SupportSpec(
                selector=BoundarySelector(kind="bottom-span", x0=0.0, x1=0.0),
                fix_x=False,
                fix_y=True,
            ),
        ],
    )


def test_material_tensors():
    model = plane_stress_model(1.0, 0.0)
    eps = np.array([1.0, 0.0, 0.0])
    assert model.contract_a(eps, eps) == pytest.approx(3.0)
    np.testing.assert_allclose(model.C, np.diag([1.0, 1.0, 0.5]))
    np.testing.assert_allclose(MODEL.C @ MODEL.compliance_matrix(), np.eye(3), atol=1e-12)

    with pytest.raises(ValueError):
        plane_stress_model(1.0, 0.7)
    with pytest.raises(ValueError):
        plane_stress_model(-1.0, 0.3)


@pytest.mark.parametrize("nx,ny", [(1, 1), (4, 4), (17, 9)])
def test_patch_uniaxial_tension(nx, ny):
    """A uniform traction on the right edge gives a uniform uniaxial stress."""
    logger.info("=" * 70)
    logger.info(f"PATCH TEST {nx}x{ny}")
    logger.info("=" * 70)

    width, height, sigma0 = 3.0, 2.0, 120.0
    mesh = build_structured_mesh(width, height, nx, ny, 1)
    fixed = _statically_determinate(mesh)
    right = select_boundary(mesh, BoundarySelector(kind="right-edge"))
    bc = TractionBC.from_selection(right, (sigma0, 0.0))

    u = solve(mesh, assemble_stiffness(mesh, 1.0, MODEL), traction_load(mesh, bc), fixed)
    _, sigma = recover_strain_stress(mesh, u, MODEL)

    expected = np.tile([sigma0, 0.0, 0.0], (mesh.n_elements, 1))
    error = np.abs(sigma - expected).max() / sigma0
    logger.info(f"Max relative stress error: {error:.2e}")
    assert error <= 1e-8

    # u_x = sigma0 / E * x on the bottom edge
    bottom = mesh.boundary_sets["bottom"]
    np.testing.assert_allclose(
        u[2 * bottom], sigma0 / MODEL.E * mesh.nodes[bottom, 0], rtol=1e-8, atol=1e-14
    )
    logger.info("[PASS] Patch test")


def test_uniform_eigenstrain_is_stress_free():
    """A free body under a uniform eigenstrain deforms without stress."""
    mesh = build_structured_mesh(4.0, 2.0, 8, 4, 1)
    fixed = _statically_determinate(mesh)
    eps_inh = np.array([-0.01, 0.004, 0.0])

    load = eigenstrain_load(mesh, eps_inh, None, 1.0, MODEL)
    u = solve(mesh, assemble_stiffness(mesh, 1.0, MODEL), load, fixed)
    eps, sigma = recover_strain_stress(mesh, u, MODEL, 1.0, eps_inh)

    np.testing.assert_allclose(eps, np.tile(eps_inh, (mesh.n_elements, 1)), atol=1e-12)
    assert np.abs(sigma).max() <= 1e-8 * MODEL.E * 0.01
    np.testing.assert_allclose(u[0::2], -0.01 * mesh.nodes[:, 0], atol=1e-12)


def test_load_totals():
    mesh = build_structured_mesh(4.0, 2.0, 4, 2, 1)

    top = select_boundary(mesh, BoundarySelector(kind="top-span", x0=1.0, x1=3.0))
    load = traction_load(mesh, TractionBC.from_selection(top, (0.0, -10.0)))
    assert load[1::2].sum() == pytest.approx(-20.0)
    assert load[0::2].sum() == pytest.approx(0.0)

    density = np.tile([2.0, -1.0], (mesh.n_elements, 1))
    body = body_force_load(mesh, density)
    assert body[0::2].sum() == pytest.approx(2.0 * mesh.domain_area)
    assert body[1::2].sum() == pytest.approx(-1.0 * mesh.domain_area)

    nodal = np.tile([2.0, -1.0], (mesh.n_nodes, 1))
    np.testing.assert_allclose(body_force_load(mesh, nodal), body, atol=1e-12)

    half = body_force_load(mesh, density, element_weights=np.full(mesh.n_elements, 0.5))
    np.testing.assert_allclose(half, 0.5 * body)

    with pytest.raises(ValueError):
        body_force_load(mesh, np.zeros((3, 2)))


def test_traction_bc_needs_edges():
    mesh = build_structured_mesh(4.0, 2.0, 4, 2, 1)
    single = select_boundary(mesh, BoundarySelector(kind="bottom-span", x0=0.0, x1=0.0))
    with pytest.raises(ValueError):
        TractionBC.from_selection(single, (0.0, -1.0))


def test_scalar_operators():
    mesh = build_structured_mesh(3.0, 2.0, 6, 4, 1)
    mass = assemble_scalar_mass(mesh)
    lap = assemble_scalar_laplacian(mesh)
    ones = np.ones(mesh.n_nodes)

    assert ones @ (mass @ ones) == pytest.approx(mesh.domain_area)
    np.testing.assert_allclose(lap @ ones, 0.0, atol=1e-12)
    x = mesh.nodes[:, 0]
    # int |grad x|^2 = area
    assert x @ (lap @ x) == pytest.approx(mesh.domain_area)


def test_rigid_modes_detected():
    mesh = build_structured_mesh(2.0, 1.0, 2, 1, 1)
    matrix = assemble_stiffness(mesh, 1.0, MODEL)

    with pytest.raises(SingularSystemError):
        LinearSystem(mesh, matrix, np.array([0, 1]))
    with pytest.raises(SingularSystemError):
        LinearSystem(mesh, matrix, np.array([], dtype=int))

    system = LinearSystem(mesh, matrix, _statically_determinate(mesh))
    u = system.solve(np.zeros(mesh.n_dofs))
    assert np.all(u == 0.0)


def test_nonpositive_scale_rejected():
    mesh = build_structured_mesh(2.0, 1.0, 2, 1, 1)
    with pytest.raises(ValueError):
        assemble_stiffness(mesh, np.array([1.0, 0.0]), MODEL)


def test_stiffness_symmetry_and_rigid_modes():
    mesh = build_structured_mesh(3.0, 2.0, 6, 4, 1)
    rng = np.random.default_rng(3)
    matrix = assemble_stiffness(mesh, rng.uniform(1e-3, 1.0, mesh.n_elements), MODEL).toarray()
    assert np.abs(matrix - matrix.T).max() <= 1e-12 * np.abs(matrix).max()

    # A free element has exactly the three planar rigid body modes
    eigenvalues = np.linalg.eigvalsh(element_stiffness(mesh, MODEL))
    zero = np.abs(eigenvalues) <= 1e-10 * eigenvalues.max()
    assert zero.sum() == 3
    assert np.all(eigenvalues[~zero] > 0.0)


def test_work_identity_and_linearity():
    mesh = build_structured_mesh(4.0, 2.0, 8, 4, 1)
    fixed = support_dofs(
        mesh, [SupportSpec(selector=BoundarySelector(kind="left-edge"), fix_x=True, fix_y=True)]
    )
    matrix = assemble_stiffness(mesh, 1.0, MODEL)
    system = LinearSystem(mesh, matrix, fixed)

    right = select_boundary(mesh, BoundarySelector(kind="right-edge"))
    f1 = traction_load(mesh, TractionBC.from_selection(right, (0.0, -10.0)))
    f2 = eigenstrain_load(mesh, np.array([-0.01, 0.0, 0.0]), None, 1.0, MODEL)
    f2[fixed] = 0.0
    u1, u2 = system.solve(f1), system.solve(f2)

    # External work equals strain energy
    assert f1 @ u1 == pytest.approx(u1 @ (matrix @ u1), rel=1e-9)

    combined = system.solve(2.0 * f1 - 3.0 * f2)
    np.testing.assert_allclose(combined, 2.0 * u1 - 3.0 * u2, rtol=1e-9, atol=1e-12 * np.abs(combined).max())


def test_single_element_eigenstrain_load():
    """Uniform shrinkage of a unit square pulls every corner toward the centre."""
    mesh = build_structured_mesh(1.0, 1.0, 1, 1, 1)
    model = plane_stress_model(1.0, 0.0)
    load = eigenstrain_load(mesh, np.array([-0.25, -0.25, 0.0]), None, 1.0, model)

    # sigma = (-0.25, -0.25, 0) and int grad N_a dA = +-1/2 per direction
    expected = 0.25 * (0.5 - mesh.nodes)
    np.testing.assert_allclose(load.reshape(-1, 2), expected, atol=1e-14)
