"""Test the command-line entry point end to end on small runs."""

import json
import logging

import numpy as np
import pandas as pd
import pytest

from config.run_config import ConfigError, resolve_run_config
from graph import OptimizationError, mesh_and_model
from main import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_UNEXPECTED,
    exit_code_for,
    main,
)
from tools.am_build import IdentificationError, simulate_profile
from tools.exporters import ExportError, read_pgm
from tools.fem import LayerSolveError, SingularSystemError
from tools.levelset import VolumeControlError
from tools.mesh import MeshError

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SMALL_RUN = {
    "mesh": {"width": 20.0, "height": 10.0, "nx": 20, "ny": 10, "layers": 5},
    "optimization": {"max_iterations": 1},
}


def _config_file(tmp_path, data=None):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(SMALL_RUN if data is None else data))
    return path


def _manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


def test_build_sim(tmp_path):
    logger.info("=" * 70)
    logger.info("CLI: build-sim")
    logger.info("=" * 70)

    out_dir = tmp_path / "out"
    code = main(["build-sim", "--config", str(_config_file(tmp_path)), "--out", str(out_dir)])
    assert code == EXIT_OK

    manifest = _manifest(out_dir)
    assert manifest["status"] == "success"
    assert manifest["command"] == "build-sim"
    assert set(manifest["outputs"]) == {
        "build.vtk",
        "build_profile.csv",
        "springback.vtk",
        "springback_profile.csv",
    }
    assert manifest["config"]["mesh"]["nx"] == 20
    assert (out_dir / "distopt.log").exists()

    profile = pd.read_csv(out_dir / "springback_profile.csv")
    assert list(profile.columns) == ["x", "u_y"]
    assert len(profile) == 21
    logger.info("[PASS] build-sim")


def test_identify_round_trip(tmp_path):
    config = resolve_run_config(SMALL_RUN)
    mesh, model = mesh_and_model(config)
    measured = simulate_profile(mesh, model, config.build, config.cutting, -0.125)
    profile = tmp_path / "measured.csv"
    pd.DataFrame({"x": measured[:, 0], "u_y": measured[:, 1]}).to_csv(profile, index=False)

    out_dir = tmp_path / "out"
    code = main(
        [
            "identify",
            "--config",
            str(_config_file(tmp_path)),
            "--out",
            str(out_dir),
            "--profile",
            str(profile),
        ]
    )
    assert code == EXIT_OK

    result = pd.read_csv(out_dir / "identification.csv")
    assert result.loc[0, "strain"] == pytest.approx(-0.125, rel=1e-8)
    assert "identification_fit.csv" in _manifest(out_dir)["outputs"]


def test_identify_without_profile(tmp_path):
    out_dir = tmp_path / "out"
    code = main(["identify", "--config", str(_config_file(tmp_path)), "--out", str(out_dir)])
    assert code == EXIT_CONFIG
    record = json.loads((out_dir / "error.json").read_text())
    assert record["error"] == "ConfigError"


def test_optimize_one_iteration(tmp_path):
    out_dir = tmp_path / "out"
    code = main(["optimize", "--config", str(_config_file(tmp_path)), "--out", str(out_dir)])
    assert code == EXIT_OK

    manifest = _manifest(out_dir)
    assert manifest["termination_reason"] == "max_iterations"
    for name in ("final.vtk", "final.pgm", "history.csv", "history.png"):
        assert name in manifest["outputs"]
        assert (out_dir / name).exists()

    history = pd.read_csv(out_dir / "history.csv")
    assert len(history) == 1
    assert history.loc[0, "volume"] == pytest.approx(1.0)
    assert read_pgm(out_dir / "final.pgm").shape == (10, 20)


def test_optimize_snapshots(tmp_path):
    data = {**SMALL_RUN, "optimization": {"max_iterations": 2}, "output": {"write_plots": False}}
    out_dir = tmp_path / "out"
    code = main(
        [
            "optimize",
            "--config",
            str(_config_file(tmp_path, data)),
            "--out",
            str(out_dir),
            "--snapshot-every",
            "1",
        ]
    )
    assert code == EXIT_OK
    assert (out_dir / "snapshots" / "iter_0001.vtk").exists()
    assert (out_dir / "snapshots" / "iter_0002.pgm").exists()
    assert not (out_dir / "history.png").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    out_dir = tmp_path / "out"
    bad = _config_file(tmp_path, {"material": {"poisson_ratio": 0.7}})
    code = main(["optimize", "--config", str(bad), "--out", str(out_dir)])
    assert code == EXIT_CONFIG

    record = json.loads((out_dir / "error.json").read_text())
    assert record["exit_code"] == EXIT_CONFIG
    assert any("poisson_ratio" in e for e in record["details"]["errors"])
    assert "ConfigError" in capsys.readouterr().err
    assert not (out_dir / "manifest.json").exists()


def test_invalid_snapshot_cadence(tmp_path):
    out_dir = tmp_path / "out"
    code = main(
        [
            "optimize",
            "--config",
            str(_config_file(tmp_path)),
            "--out",
            str(out_dir),
            "--snapshot-every",
            "0",
        ]
    )
    assert code == EXIT_CONFIG
    assert (out_dir / "error.json").exists()


def test_sweep_gamma(tmp_path):
    out_dir = tmp_path / "out"
    code = main(
        [
            "sweep-gamma",
            "--config",
            str(_config_file(tmp_path)),
            "--out",
            str(out_dir),
            "--gammas",
            "0",
            "0.1",
        ]
    )
    assert code == EXIT_OK

    summary = pd.read_csv(out_dir / "sweep_summary.csv")
    assert list(summary.columns) == ["gamma", "F_MC", "F_AM"]
    np.testing.assert_allclose(summary["gamma"], [0.0, 0.1])
    assert (out_dir / "gamma_0.00" / "history.csv").exists()
    assert (out_dir / "gamma_0.10" / "final.vtk").exists()
    assert "gamma_0.10/history.csv" in _manifest(out_dir)["outputs"]


def test_sweep_rejects_gamma_outside_unit_interval(tmp_path):
    with pytest.raises(SystemExit):
        main(["sweep-gamma", "--config", "x.json", "--out", str(tmp_path), "--gammas", "1.5"])


def test_exit_code_mapping():
    assert exit_code_for(ConfigError(["a: b"])) == EXIT_CONFIG
    assert exit_code_for(MeshError("empty")) == EXIT_CONFIG
    assert exit_code_for(SingularSystemError("rigid")) == EXIT_SOLVER
    assert exit_code_for(LayerSolveError(2, "adjoint", ValueError("x"))) == EXIT_SOLVER
    assert exit_code_for(VolumeControlError("no bracket", 0.5)) == EXIT_SOLVER
    assert exit_code_for(OptimizationError(3, "failed")) == EXIT_SOLVER
    assert exit_code_for(IdentificationError("bad")) == EXIT_SOLVER
    assert exit_code_for(ExportError("out/x.vtk", OSError("disk full"))) == EXIT_IO
    assert exit_code_for(PermissionError("denied")) == EXIT_IO
    assert exit_code_for(KeyError("oops")) == EXIT_UNEXPECTED
