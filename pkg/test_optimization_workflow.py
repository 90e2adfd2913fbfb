"""Test the optimization workflow graph on small problems.

The runs marked `slow` exercise full optimizations (tens of iterations);
deselect them with `pytest -m "not slow"`.
"""

import logging

import numpy as np
import pytest

from config.run_config import resolve_run_config
from graph import (
    OptimizationError,
    create_optimization_workflow,
    mesh_and_model,
    run_optimization,
    solve_equilibrium,
)
from tools.levelset import count_void_regions, volume_fraction
from tools.mesh import mirror_node_map

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def _small_config(**optimization):
    data = {
        "mesh": {"width": 20.0, "height": 10.0, "nx": 20, "ny": 10, "layers": 5},
        "optimization": {"max_iterations": 3, **optimization},
        "output": {"write_plots": False},
    }
    return resolve_run_config(data)


def test_graph_compiles():
    app = create_optimization_workflow()
    assert app is not None


def test_equilibrium_of_full_design():
    config = _small_config()
    mesh, model = mesh_and_model(config)
    v = solve_equilibrium(mesh, model, np.ones(mesh.n_nodes), config.structure, config.levelset)

    # Tip load points down
    assert v.shape == (mesh.n_dofs,)
    assert v[1::2].min() < 0.0


def test_iteration_cap_and_counters():
    """Three iterations give three records and the expected solve counts."""
    logger.info("=" * 70)
    logger.info("WORKFLOW: ITERATION CAP")
    logger.info("=" * 70)

    snapshots = []

    def on_snapshot(iteration, fields, final):
        assert fields.phi.shape == fields.h_nodes.shape
        snapshots.append((iteration, final))

    result = run_optimization(
        _small_config(gamma=0.1), snapshot_callback=on_snapshot, snapshot_every=2, threads=1
    )
    history = result.history

    assert len(history) == 3
    assert [r.iter for r in history.records] == [1, 2, 3]
    assert history.termination_reason == "max_iterations"
    assert history.records[0].lam == 0.0
    assert history.records[0].volume == pytest.approx(1.0)

    counters = result.counters
    assert counters.equilibrium_solves == 3
    assert counters.forward_layer_solves == 15
    assert counters.adjoint_layer_solves == 10
    assert counters.rde_steps == 2
    assert snapshots == [(2, False), (3, True)]

    assert result.objectives.F_AM > 0.0
    assert result.objectives.F == pytest.approx(
        0.9 * result.objectives.F_MC + 0.1 * result.objectives.F_AM
    )
    logger.info("[PASS] Iteration cap")


def test_compliance_only_skips_adjoints():
    result = run_optimization(_small_config(gamma=0.0), threads=1)
    assert result.counters.adjoint_layer_solves == 0
    assert result.objectives.F == pytest.approx(result.objectives.F_MC)


def test_single_iteration():
    result = run_optimization(_small_config(max_iterations=1), threads=1)
    assert len(result.history) == 1
    assert result.counters.rde_steps == 0
    assert result.fields.sensitivity is None


def test_volume_shrinks_gradually():
    result = run_optimization(_small_config(gamma=0.0, max_iterations=4), threads=1)
    volumes = result.history.volumes
    assert np.all(np.diff(volumes) < 0.0)
    # Each target is 3% below the previous volume
    for before, after in zip(volumes[:-1], volumes[1:]):
        assert after == pytest.approx(0.97 * before, rel=2e-3)


def test_runs_are_deterministic():
    config = _small_config(max_iterations=3)
    first = run_optimization(config, threads=1)
    second = run_optimization(config, threads=1)

    def rows(result):
        return [{k: v for k, v in r.as_row().items() if k != "wall_ms"} for r in result.history.records]

    assert rows(first) == rows(second)
    np.testing.assert_array_equal(first.field.phi, second.field.phi)


def test_error_carries_iteration():
    error = OptimizationError(4, "AM build failed", ValueError("boom"))
    assert error.iteration == 4
    assert "Iteration 4" in str(error)


@pytest.mark.slow
def test_volume_reaches_target():
    config = resolve_run_config(
        {
            "mesh": {"width": 40.0, "height": 20.0, "nx": 40, "ny": 20, "layers": 10},
            "optimization": {"gamma": 0.0, "max_iterations": 40},
        }
    )
    result = run_optimization(config, threads=1)
    final = result.history.records[-1].volume
    logger.info(f"Final volume {final:.4f} after {len(result.history)} iteration(s)")
    assert abs(final - 0.5) <= 0.005 * 0.5
    assert volume_fraction(
        mesh_and_model(config)[0], result.field.phi, config.levelset.width
    ) == pytest.approx(final)




@pytest.mark.slow
def test_mbb_design_is_mirror_symmetric():
    """A symmetric problem keeps a symmetric design."""
    config = resolve_run_config(
        {
            "problem": "mbb",
            "mesh": {"width": 60.0, "height": 20.0, "nx": 60, "ny": 20, "layers": 20},
            "optimization": {"gamma": 0.1, "max_iterations": 100},
        }
    )
    result = run_optimization(config, threads=1)
    mesh, _ = mesh_and_model(config)
    phi = result.field.phi
    asymmetry = np.abs(phi - phi[mirror_node_map(mesh)]).max()
    logger.info(f"Max mirror asymmetry of phi: {asymmetry:.2e}")
    assert asymmetry <= 1e-6


def _desk_cantilever(gamma, tau=1e-4):
    return resolve_run_config(
        {
            "mesh": {"width": 50.0, "height": 25.0, "nx": 50, "ny": 25, "layers": 25},
            "levelset": {"tau": tau},
            "optimization": {"gamma": gamma, "max_iterations": 200},
            "output": {"write_plots": False},
        }
    )


@pytest.fixture(scope="module")
def gamma_sweep():
    """Desk cantilever optimized for gamma in {0, 0.1, 0.2}."""
    return {gamma: run_optimization(_desk_cantilever(gamma), threads=1) for gamma in (0.0, 0.1, 0.2)}


@pytest.mark.slow
def test_distortion_weight_trades_compliance_for_distortion(gamma_sweep):
    logger.info("=" * 70)
    logger.info("WORKFLOW: GAMMA TREND")
    logger.info("=" * 70)

    gammas = sorted(gamma_sweep)
    f_am = [gamma_sweep[g].objectives.F_AM for g in gammas]
    f_mc = [gamma_sweep[g].objectives.F_MC for g in gammas]
    for gamma, am, mc in zip(gammas, f_am, f_mc):
        logger.info(f"gamma={gamma}: F_AM={am:.6e} F_MC={mc:.6e}")

    assert np.all(np.diff(f_am) <= 0.0)
    assert np.all(np.diff(f_mc) >= 0.0)
    logger.info("[PASS] Gamma trend")


@pytest.mark.slow
def test_distortion_drops_after_feasibility(gamma_sweep):
    """Once the volume is met, distortion falls while compliance holds."""
    history = gamma_sweep[0.1].history
    first = history.first_feasible(0.5)
    final = history.records[-1]
    assert first is not None
    logger.info(
        f"First feasible iteration {first.iter}: F_AM={first.F_AM:.6e} F_MC={first.F_MC:.6e}; "
        f"final iteration {final.iter}: F_AM={final.F_AM:.6e} F_MC={final.F_MC:.6e}"
    )

    assert final.F_AM < first.F_AM
    assert abs(final.F_MC - first.F_MC) <= 0.1 * first.F_MC


@pytest.mark.slow
def test_larger_tau_gives_simpler_design(gamma_sweep):
    mesh, _ = mesh_and_model(_desk_cantilever(0.0))
    fine = gamma_sweep[0.0].field
    coarse = run_optimization(_desk_cantilever(0.0, tau=1e-3), threads=1).field

    fine_voids = count_void_regions(mesh, fine.phi, fine.width)
    coarse_voids = count_void_regions(mesh, coarse.phi, coarse.width)
    logger.info(f"Void regions: tau=1e-4 -> {fine_voids}, tau=1e-3 -> {coarse_voids}")
    assert coarse_voids < fine_voids
