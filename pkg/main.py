"""Command-line entry point of the distortion-aware topology optimizer.

Subcommands:
    build-sim    Layer-by-layer AM build of the full design domain, followed by
                 the cutting (springback) analysis
    identify     Fit the inherent strain to a measured springback profile
    optimize     Level set optimization of (1 - gamma) F_MC + gamma F_AM
    sweep-gamma  Run `optimize` for a list of weighting coefficients

Every command reads one JSON run configuration, writes its artifacts to the
output directory together with a `manifest.json`, and logs to
`<out>/distopt.log` and stdout.

Exit codes:
    0  success
    2  configuration error
    3  solver error (FEM, volume control, optimization, identification)
    4  I/O error
    1  anything else

On failure `<out>/error.json` holds {"error", "message", "exit_code", "details"}
and the same record is printed to stderr.

Usage:
    distopt optimize --config runs/cantilever.json --out out/cantilever
    distopt sweep-gamma --config runs/cantilever.json --out out/sweep --gammas 0 0.1 0.2
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from config.run_config import ConfigError, config_echo, load_config
from config.settings import get_settings
from data_models.manifest import RunManifest
from data_models.run_config import RunConfig
from graph.optimization_workflow import (
    DesignFields,
    OptimizationError,
    mesh_and_model,
    run_optimization,
)
from tools.am_build import (
    IdentificationError,
    identify_inherent_strain,
    read_profile_csv,
    release_mask,
    simulate_build,
    springback_cut,
    top_surface_profile,
)
from tools.exporters import (
    ExportError,
    plot_history,
    write_history_csv,
    write_identification_csv,
    write_json_atomic,
    write_manifest,
    write_pgm,
    write_profile_csv,
    write_sweep_summary,
    write_vtk,
)
from tools.fem import FEMSolverError, LayerSolveError
from tools.levelset import VolumeControlError, count_void_regions
from tools.mesh import MeshError


# Configure logger
logger = logging.getLogger(__name__)

DEFAULT_GAMMAS = [0.0, 0.03, 0.05, 0.10, 0.15, 0.20]

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


# ============================================================================
# LOGGING CONFIGURATION
# ============================================================================


def setup_logging(log_dir: Path, level: str = "INFO") -> None:
    """Log to `<log_dir>/distopt.log` and stdout.

    Sets third-party loggers to WARNING to reduce noise.
    """
    log_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.FileHandler(log_dir / "distopt.log"),
            logging.StreamHandler(sys.stdout),
        ],
        force=True,
    )

    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("meshio").setLevel(logging.WARNING)

    logger.debug("[OK] Logging configured")


def _close_log_handlers() -> None:
    for handler in list(logging.getLogger().handlers):
        if isinstance(handler, logging.FileHandler):
            handler.close()
            logging.getLogger().removeHandler(handler)


# ============================================================================
# ERROR MAPPING
# ============================================================================


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(error, (ConfigError, MeshError)):
        return EXIT_CONFIG
    if isinstance(
        error,
        (FEMSolverError, VolumeControlError, OptimizationError, IdentificationError, FloatingPointError),
    ):
        return EXIT_SOLVER
    if isinstance(error, (ExportError, OSError)):
        return EXIT_IO
    return EXIT_UNEXPECTED


def error_details(error: BaseException) -> Dict[str, Any]:
    """Context attributes of an exception, for the error record."""
    details: Dict[str, Any] = {}
    if isinstance(error, ConfigError):
        details["errors"] = error.errors
    if isinstance(error, OptimizationError):
        details["iteration"] = error.iteration
        if error.cause is not None:
            details["cause"] = type(error.cause).__name__
        if isinstance(error.cause, LayerSolveError):
            details["layer"] = error.cause.layer
    if isinstance(error, LayerSolveError):
        details["layer"] = error.layer
        details["stage"] = error.stage
    if isinstance(error, VolumeControlError):
        details["target"] = error.target
    if isinstance(error, ExportError):
        details["path"] = error.path
    return details


def write_error_record(out_dir: Path, error: BaseException, code: int) -> Dict[str, Any]:
    """Write `error.json` (best effort) and echo it to stderr."""
    record = {
        "error": type(error).__name__,
        "message": str(error),
        "exit_code": code,
        "details": error_details(error),
    }
    try:
        write_json_atomic(record, out_dir / "error.json")
    except ExportError as e:
        logger.warning(f"[WARN] Could not write error record: {e}")
    print(json.dumps(record), file=sys.stderr)
    return record


# ============================================================================
# COMMANDS
# ============================================================================


def _vector_fields(prefix: str, u: np.ndarray) -> Dict[str, np.ndarray]:
    u = np.asarray(u).reshape(-1, 2)
    return {prefix: u, f"{prefix}_magnitude": np.linalg.norm(u, axis=1)}


def cmd_build_sim(config: RunConfig, args: argparse.Namespace, manifest: RunManifest) -> None:
    """Simulate the build of the full domain and the springback after cutting."""
    out_dir = Path(args.out)
    mesh, model = mesh_and_model(config)
    build = simulate_build(mesh, model, config.build, threads=get_settings().DISTOPT_THREADS)

    sigma = build.sigma
    write_vtk(
        mesh,
        out_dir / "build.vtk",
        point_data=_vector_fields("u", build.u),
        cell_data={
            "sigma_xx": sigma[:, 0],
            "sigma_yy": sigma[:, 1],
            "sigma_xy": sigma[:, 2],
            "layer": mesh.layer_of.astype(float),
        },
    )
    write_profile_csv(top_surface_profile(mesh, build.u), out_dir / "build_profile.csv")
    manifest.outputs += ["build.vtk", "build_profile.csv"]

    release = release_mask(mesh, config.cutting.release_above)
    spring = springback_cut(mesh, model, build, config.cutting.fixture, release)
    write_vtk(mesh, out_dir / "springback.vtk", point_data=_vector_fields("u", spring))
    write_profile_csv(top_surface_profile(mesh, spring), out_dir / "springback_profile.csv")
    manifest.outputs += ["springback.vtk", "springback_profile.csv"]

    logger.info(
        f"[OK] Build max|u|={np.abs(build.u).max():.4e} mm, "
        f"max sigma_xx={sigma[:, 0].max():.4e} MPa, "
        f"springback max|u_y|={np.abs(spring[1::2]).max():.4e} mm"
    )


def cmd_identify(config: RunConfig, args: argparse.Namespace, manifest: RunManifest) -> None:
    """Identify the inherent strain from a measured springback profile."""
    out_dir = Path(args.out)
    profile_path = args.profile or config.identification.measured_profile
    if not profile_path:
        raise ConfigError(
            ["identification.measured_profile: required by identify (or pass --profile)"]
        )

    mesh, model = mesh_and_model(config)
    result = identify_inherent_strain(
        mesh,
        model,
        config.build,
        config.cutting,
        read_profile_csv(profile_path),
        config.identification.reference_strain,
        threads=get_settings().DISTOPT_THREADS,
    )
    write_identification_csv(result.strain, result.residual_norm, out_dir / "identification.csv")
    write_profile_csv(
        np.column_stack([result.stations, result.fitted]), out_dir / "identification_fit.csv"
    )
    manifest.outputs += ["identification.csv", "identification_fit.csv"]


def _snapshot_writer(config: RunConfig, out_dir: Path, manifest: RunManifest, prefix: str = ""):
    """Return a snapshot callback writing VTK and PGM files under `out_dir`."""
    mesh, _ = mesh_and_model(config)

    def write(iteration: int, fields: DesignFields, final: bool) -> None:
        stem = f"{prefix}final" if final else f"{prefix}snapshots/iter_{iteration:04d}"
        write_vtk(
            mesh,
            out_dir / f"{stem}.vtk",
            point_data=fields.point_data(),
            cell_data=fields.cell_data(),
        )
        write_pgm(mesh, fields.h_elements, out_dir / f"{stem}.pgm")
        manifest.outputs += [f"{stem}.vtk", f"{stem}.pgm"]

    return write


def _optimize_one(
    config: RunConfig,
    out_dir: Path,
    manifest: RunManifest,
    snapshot_every: Optional[int],
    prefix: str = "",
):
    result = run_optimization(
        config,
        snapshot_callback=_snapshot_writer(config, out_dir, manifest, prefix),
        snapshot_every=snapshot_every,
    )
    write_history_csv(result.history, out_dir / f"{prefix}history.csv")
    manifest.outputs.append(f"{prefix}history.csv")
    if config.output.write_plots:
        title = f"{config.problem}, gamma={config.optimization.gamma:g}"
        plot_history(result.history, out_dir / f"{prefix}history.png", title)
        manifest.outputs.append(f"{prefix}history.png")

    mesh, _ = mesh_and_model(config)
    voids = count_void_regions(mesh, result.field.phi, result.field.width)
    logger.info(
        f"[OK] gamma={config.optimization.gamma:g}: F_MC={result.objectives.F_MC:.6e} "
        f"F_AM={result.objectives.F_AM:.6e} volume={result.history.records[-1].volume:.4f} "
        f"void regions={voids}"
    )
    return result


def cmd_optimize(config: RunConfig, args: argparse.Namespace, manifest: RunManifest) -> None:
    """Run one optimization."""
    result = _optimize_one(config, Path(args.out), manifest, args.snapshot_every)
    manifest.termination_reason = result.history.termination_reason


def cmd_sweep_gamma(config: RunConfig, args: argparse.Namespace, manifest: RunManifest) -> None:
    """Run the optimization for every gamma and tabulate the final objectives."""
    out_dir = Path(args.out)
    gammas = args.gammas if args.gammas else DEFAULT_GAMMAS
    rows: List[Dict[str, float]] = []

    for gamma in gammas:
        logger.info("=" * 70)
        logger.info(f" SWEEP gamma={gamma:g}")
        logger.info("=" * 70)
        swept = config.model_copy(
            update={"optimization": config.optimization.model_copy(update={"gamma": gamma})}
        )
        result = _optimize_one(
            swept, out_dir, manifest, args.snapshot_every, prefix=f"gamma_{gamma:.2f}/"
        )
        rows.append(
            {"gamma": gamma, "F_MC": result.objectives.F_MC, "F_AM": result.objectives.F_AM}
        )

    write_sweep_summary(rows, out_dir / "sweep_summary.csv")
    manifest.outputs.append("sweep_summary.csv")


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace, RunManifest], None]] = {
    "build-sim": cmd_build_sim,
    "identify": cmd_identify,
    "optimize": cmd_optimize,
    "sweep-gamma": cmd_sweep_gamma,
}


# ============================================================================
# ARGUMENT PARSING
# ============================================================================


def _gamma(value: str) -> float:
    gamma = float(value)
    if not 0.0 <= gamma <= 1.0:
        raise argparse.ArgumentTypeError(f"gamma must lie in [0, 1] (got {value})")
    return gamma


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distopt",
        description="Topology optimization for compliance and AM distortion",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=COMMANDS[name].__doc__)
        sub.add_argument("--config", required=True, help="JSON run configuration")
        sub.add_argument("--out", required=True, help="Output directory")
        sub.add_argument(
            "--snapshot-every", type=int, default=None, help="Snapshot cadence in iterations"
        )
        sub.add_argument("--log-level", default=None, help="Overrides DISTOPT_LOG_LEVEL")
        if name == "identify":
            sub.add_argument("--profile", default=None, help="Measured (x, u_y) profile CSV")
        if name == "sweep-gamma":
            sub.add_argument(
                "--gammas", type=_gamma, nargs="+", default=None, help="Weighting coefficients"
            )
    return parser


# ============================================================================
# MAIN
# ============================================================================


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one CLI command and return its exit code."""
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)

    try:
        level = args.log_level or get_settings().DISTOPT_LOG_LEVEL
        setup_logging(out_dir, level)
    except (OSError, ValueError) as e:
        code = EXIT_IO if isinstance(e, OSError) else EXIT_CONFIG
        print(
            json.dumps(
                {"error": type(e).__name__, "message": str(e), "exit_code": code, "details": {}}
            ),
            file=sys.stderr,
        )
        return code

    if args.snapshot_every is not None and args.snapshot_every < 1:
        code = write_error_record(
            out_dir, ConfigError([f"--snapshot-every: must be >= 1 (got {args.snapshot_every})"]), EXIT_CONFIG
        )["exit_code"]
        _close_log_handlers()
        return code

    logger.info("=" * 70)
    logger.info(f" distopt {args.command} (config={args.config}, out={out_dir})")
    logger.info("=" * 70)

    manifest: Optional[RunManifest] = None
    try:
        config = load_config(args.config)
        manifest = RunManifest.start(args.command, config_echo(config))
        COMMANDS[args.command](config, args, manifest)

        manifest.finish("success")
        write_manifest(manifest, out_dir)
        logger.info(f"[OK] {args.command} finished; {len(manifest.outputs)} output(s) in {out_dir}")
        return EXIT_OK

    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"[FAIL] {args.command} failed ({type(e).__name__}): {e}")
        if code == EXIT_UNEXPECTED:
            logger.exception("Unexpected error:")
        write_error_record(out_dir, e, code)
        if manifest is not None:
            manifest.finish("failed")
            try:
                write_manifest(manifest, out_dir)
            except ExportError as export_error:
                logger.warning(f"[WARN] Manifest not written: {export_error}")
        return code

    finally:
        _close_log_handlers()


if __name__ == "__main__":
    sys.exit(main())
