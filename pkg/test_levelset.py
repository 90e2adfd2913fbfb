"""Test the smoothed Heaviside, ersatz scaling and the reaction-diffusion update."""

import logging

import numpy as np
import pytest

from data_models.run_config import LevelSetConfig
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
from tools.mesh import build_structured_mesh

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def test_heaviside_exact_values():
    w = 0.5
    assert heaviside(0.0, w) == 0.5
    assert heaviside(w, w) == pytest.approx(1.0, abs=1e-15)
    assert heaviside(-w, w) == pytest.approx(0.0, abs=1e-15)
    assert heaviside(-w / 2, w) == pytest.approx(0.103515625, abs=1e-15)
    assert heaviside(3.0, w) == 1.0
    assert heaviside(-3.0, w) == 0.0

    phi = np.linspace(-1.0, 1.0, 201)
    h = heaviside(phi, w)
    assert np.all(np.diff(h) >= 0.0)
    np.testing.assert_allclose(h + heaviside(-phi, w), 1.0, atol=1e-15)

    with pytest.raises(ValueError):
        heaviside(0.0, 0.0)


def test_ersatz_endpoints_and_characteristic():
    d = 1e-3
    assert ersatz_scale(1.0, 0.5, d) == pytest.approx(1.0, abs=1e-15)
    assert ersatz_scale(-1.0, 0.5, d) == pytest.approx(d, abs=1e-15)
    assert characteristic(np.array([-0.1, 0.0, 0.3])).tolist() == [0, 1, 1]


def test_level_set_field_full_design():
    mesh = build_structured_mesh(4.0, 2.0, 8, 4, 2)
    field = LevelSetField.full(mesh, LevelSetConfig())

    assert field.volume(mesh) == pytest.approx(1.0)
    np.testing.assert_allclose(field.element_scale(mesh), 1.0)
    np.testing.assert_allclose(field.nodal_heaviside(), 1.0)

    field.phi[:] = -1.0
    assert volume_fraction(mesh, field.phi, field.width) == 0.0
    np.testing.assert_allclose(field.element_scale(mesh), LevelSetConfig().void_ratio)


def test_rde_params():
    mesh = build_structured_mesh(100.0, 50.0, 10, 5, 5)
    params = RdeParams.from_config(LevelSetConfig(), mesh)
    assert params.length == 100.0
    assert params.diffusion == pytest.approx(0.1 * 0.8 * 1e-4 * 100.0**2)

    override = RdeParams.from_config(LevelSetConfig(characteristic_length=2.0), mesh)
    assert override.length == 2.0

    with pytest.raises(ValueError):
        RdeParams(K=0.0, tau=1e-4, dt=0.1, length=1.0)
    with pytest.raises(ValueError):
        RdeParams(K=1.0, tau=-1.0, dt=0.1, length=1.0)


def test_rde_step_behaviour():
    mesh = build_structured_mesh(4.0, 2.0, 8, 4, 2)
    params = RdeParams(K=1.0, tau=1e-2, dt=0.1, length=1.0)
    operator = RdeOperator(mesh, params)

    # Constant fields are steady without reaction
    phi = np.full(mesh.n_nodes, 0.3)
    np.testing.assert_allclose(rde_step(mesh, phi, np.zeros(mesh.n_nodes), params), 0.3, atol=1e-12)

    # A uniform reaction shifts a constant field by dt K F'
    shifted = rde_step(mesh, phi, np.full(mesh.n_nodes, 2.0), params, operator=operator)
    np.testing.assert_allclose(shifted, 0.3 - 0.2, atol=1e-12)

    # The shift acts like a uniform reaction
    np.testing.assert_allclose(
        rde_step(mesh, phi, np.zeros(mesh.n_nodes), params, lam=2.0, operator=operator),
        shifted,
        atol=1e-12,
    )

    # Clamping
    pushed = rde_step(mesh, phi, np.full(mesh.n_nodes, -100.0), params, operator=operator)
    assert pushed.max() == 1.0
    pulled = rde_step(mesh, phi, np.full(mesh.n_nodes, 100.0), params, operator=operator)
    assert pulled.min() == -1.0


def test_diffusion_smooths():
    mesh = build_structured_mesh(4.0, 2.0, 16, 8, 2)
    rough = np.where(np.arange(mesh.n_nodes) % 2 == 0, 0.5, -0.5)
    weak = rde_step(mesh, rough, np.zeros(mesh.n_nodes), RdeParams(1.0, 1e-4, 0.1, 1.0))
    strong = rde_step(mesh, rough, np.zeros(mesh.n_nodes), RdeParams(1.0, 1e-1, 0.1, 1.0))
    assert np.std(strong) < np.std(weak)


def test_volume_control_hits_target():
    """Starting from full material, the shift brings the volume to the target."""
    mesh = build_structured_mesh(20.0, 10.0, 20, 10, 5)
    params = RdeParams(K=0.8, tau=1e-4, dt=0.1, length=20.0)
    phi = np.ones(mesh.n_nodes)
    rng = np.random.default_rng(3)
    sensitivity = -rng.uniform(0.0, 2.0, mesh.n_nodes)

    new_phi, lam = volume_controlled_step(mesh, phi, sensitivity, params, 0.97, 0.5)
    volume = volume_fraction(mesh, new_phi, 0.5)
    logger.info(f"Volume {volume:.5f} at lambda={lam:.4e}")
    assert lam > 0.0
    assert abs(volume - 0.97) <= 1e-3 * 0.97


def test_volume_control_feasible_without_shift():
    mesh = build_structured_mesh(20.0, 10.0, 20, 10, 5)
    params = RdeParams(K=0.8, tau=1e-4, dt=0.1, length=20.0)
    phi = np.ones(mesh.n_nodes)

    new_phi, lam = volume_controlled_step(
        mesh, phi, np.zeros(mesh.n_nodes), params, 1.0, 0.5
    )
    assert lam == 0.0
    np.testing.assert_allclose(new_phi, 1.0)

    with pytest.raises(VolumeControlError):
        volume_controlled_step(mesh, phi, np.zeros(mesh.n_nodes), params, 0.0, 0.5)


def test_count_void_regions():
    mesh = build_structured_mesh(10.0, 4.0, 10, 4, 2)
    phi = np.ones(mesh.n_nodes)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    phi[(x <= 3.0) & (y >= 1.0) & (y <= 3.0)] = -1.0
    phi[(x >= 7.0) & (y >= 1.0) & (y <= 3.0)] = -1.0

    assert count_void_regions(mesh, np.ones(mesh.n_nodes), 0.5) == 0
    assert count_void_regions(mesh, phi, 0.5) == 2


def test_heaviside_is_c1_at_transition_edges():
    w, delta = 0.5, 1e-6
    for edge, outside in ((w, 1.0), (-w, 0.0)):
        inner = edge - np.sign(edge) * delta
        assert abs(float(heaviside(inner, w)) - outside) <= 1e-9
        slope = (float(heaviside(edge, w)) - float(heaviside(inner, w))) / (edge - inner)
        assert abs(slope) <= 1e-6

    slope_at_zero = (float(heaviside(delta, w)) - float(heaviside(-delta, w))) / (2 * delta)
    assert slope_at_zero == pytest.approx(15.0 / (16.0 * w), rel=1e-6)


def test_diffusion_does_not_raise_dirichlet_energy():
    mesh = build_structured_mesh(4.0, 2.0, 16, 8, 2)
    operator = RdeOperator(mesh, RdeParams(K=0.8, tau=1e-2, dt=0.1, length=4.0))
    phi = np.random.default_rng(9).uniform(-1.0, 1.0, mesh.n_nodes)

    smoothed = operator.unclamped(phi, np.zeros(mesh.n_nodes))
    before = phi @ (operator.laplacian @ phi)
    after = smoothed @ (operator.laplacian @ smoothed)
    logger.info(f"Dirichlet energy {before:.4e} -> {after:.4e}")
    assert after <= before


def test_volume_non_increasing_in_shift():
    mesh = build_structured_mesh(20.0, 10.0, 20, 10, 5)
    params = RdeParams(K=0.8, tau=1e-4, dt=0.1, length=20.0)
    operator = RdeOperator(mesh, params)
    rng = np.random.default_rng(4)
    phi = rng.uniform(-1.0, 1.0, mesh.n_nodes)
    sensitivity = rng.normal(size=mesh.n_nodes)

    volumes = [
        volume_fraction(mesh, rde_step(mesh, phi, sensitivity, params, lam, operator), 0.5)
        for lam in np.linspace(-3.0, 3.0, 25)
    ]
    assert np.all(np.diff(volumes) <= 1e-12)
    assert volumes[0] > volumes[-1]


def test_volume_just_above_target_is_shifted():
    """A volume inside the bisection tolerance but above the target is not accepted as is."""
    mesh = build_structured_mesh(20.0, 10.0, 20, 10, 5)
    params = RdeParams(K=0.8, tau=1e-4, dt=0.1, length=20.0)
    target = 0.9995

    new_phi, lam = volume_controlled_step(
        mesh, np.ones(mesh.n_nodes), np.zeros(mesh.n_nodes), params, target, 0.5
    )
    assert lam > 0.0
    assert abs(volume_fraction(mesh, new_phi, 0.5) - target) <= 1e-3 * target
