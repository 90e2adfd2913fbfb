"""File exports for simulation and optimization results.

Writers:
- write_vtk: legacy text VTK unstructured grid (meshio) with point and cell data
- write_pgm: binary grayscale image of H(phi) on the element grid
- write_history_csv / write_profile_csv / write_identification_csv /
  write_sweep_summary: CSV tables (pandas)
- plot_history: convergence figure (matplotlib, Agg backend)
- write_json_atomic / write_manifest: JSON written through a temp file and
  an atomic rename

Every writer creates missing parent directories and raises ExportError on
I/O failure.

Example:
    >>> from tools.exporters import write_vtk, write_pgm
    >>> write_vtk(mesh, "out/final.vtk", point_data={"phi": phi})
    >>> write_pgm(mesh, h_elements, "out/final.pgm")
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import meshio  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from data_models.history import HISTORY_COLUMNS, OptHistory  # noqa: E402
from data_models.manifest import RunManifest  # noqa: E402
from tools.mesh import Mesh2D  # noqa: E402


# Configure logger
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SWEEP_COLUMNS = ["gamma", "F_MC", "F_AM"]


class ExportError(Exception):
    """Raised when an output file cannot be written.

    Attributes:
        path: Target file
    """

    def __init__(self, path: PathLike, cause: Exception):
        self.path = str(path)
        self.cause = cause
        super().__init__(f"Cannot write {path}: {cause}")


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExportError(path, e) from e
    return path


def _pad3(values: np.ndarray) -> np.ndarray:
    """VTK vectors have three components."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 2 and values.shape[1] == 2:
        return np.column_stack([values, np.zeros(len(values))])
    return values


# ============================================================================
# VTK
# ============================================================================


def write_vtk(
    mesh: Mesh2D,
    path: PathLike,
    point_data: Optional[Mapping[str, np.ndarray]] = None,
    cell_data: Optional[Mapping[str, np.ndarray]] = None,
) -> Path:
    """Write the mesh and its fields as a legacy text VTK file.

    Args:
        mesh: Structured mesh
        path: Output file
        point_data: Nodal fields, (N,) scalars or (N, 2) vectors
        cell_data: Element fields, (E,) scalars or (E, k) components

    Returns:
        Path: Written file

    Raises:
        ExportError: If a field has the wrong size or the file cannot be written
    """
    path = _prepare(path)
    points = np.column_stack([mesh.nodes, np.zeros(mesh.n_nodes)])

    point_arrays: Dict[str, np.ndarray] = {}
    for name, values in (point_data or {}).items():
        values = _pad3(values)
        if values.shape[0] != mesh.n_nodes or " " in name:
            raise ExportError(path, ValueError(f"Bad point field {name!r} {values.shape}"))
        point_arrays[name] = values

    cell_arrays: Dict[str, list] = {}
    for name, values in (cell_data or {}).items():
        values = _pad3(values)
        if values.shape[0] != mesh.n_elements or " " in name:
            raise ExportError(path, ValueError(f"Bad cell field {name!r} {values.shape}"))
        cell_arrays[name] = [values]

    grid = meshio.Mesh(
        points,
        [("quad", np.asarray(mesh.elements))],
        point_data=point_arrays,
        cell_data=cell_arrays,
    )
    try:
        meshio.write(str(path), grid, file_format="vtk", binary=False)
    except OSError as e:
        raise ExportError(path, e) from e

    logger.debug(f"Wrote {path} ({len(point_arrays)} point / {len(cell_arrays)} cell fields)")
    return path


def read_vtk(path: PathLike) -> meshio.Mesh:
    """Read a VTK file back (used to verify exports)."""
    return meshio.read(str(path), file_format="vtk")


# ============================================================================
# Images
# ============================================================================


def write_pgm(mesh: Mesh2D, density: np.ndarray, path: PathLike) -> Path:
    """Write an element density in [0, 1] as a binary PGM image.

    Pixel value is round(255 * density); rows run top to bottom, so the
    image is upright.

    Args:
        mesh: Structured mesh (image is nx wide, ny high)
        density: (E,) element values, typically H(phi)
        path: Output file
    """
    path = _prepare(path)
    grid = np.flipud(mesh.element_grid(np.clip(density, 0.0, 1.0)))
    pixels = np.rint(255.0 * grid).astype(np.uint8)
    header = f"P5\n{mesh.nx} {mesh.ny}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(pixels.tobytes())
    except OSError as e:
        raise ExportError(path, e) from e
    return path


def read_pgm(path: PathLike) -> np.ndarray:
    """Read a binary PGM written by `write_pgm` into a (rows, cols) uint8 array."""
    data = Path(path).read_bytes()
    magic, size, maxval, pixels = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"{path} is not an 8-bit binary PGM")
    cols, rows = (int(v) for v in size.split())
    return np.frombuffer(pixels, dtype=np.uint8).reshape(rows, cols)


def plot_history(history: OptHistory, path: PathLike, title: Optional[str] = None) -> Path:
    """Plot objectives and volume fraction against the iteration number."""
    path = _prepare(path)
    frame = history.to_dataframe()

    fig, (ax_obj, ax_vol) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for column, style in (("F", "k-"), ("F_MC", "b--"), ("F_AM", "r:")):
        ax_obj.plot(frame["iter"], frame[column], style, label=column)
    ax_obj.set_ylabel("objective")
    ax_obj.set_yscale("log")
    ax_obj.legend(loc="upper right")
    ax_vol.plot(frame["iter"], frame["volume"], "g-")
    ax_vol.set_xlabel("iteration")
    ax_vol.set_ylabel("volume fraction")
    ax_vol.set_ylim(0.0, 1.05)
    if title:
        ax_obj.set_title(title)
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=120)
    except OSError as e:
        raise ExportError(path, e) from e
    finally:
        plt.close(fig)
    return path


# ============================================================================
# Tables
# ============================================================================


def _write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = _prepare(path)
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise ExportError(path, e) from e
    return path


def write_history_csv(history: OptHistory, path: PathLike) -> Path:
    """history.csv with columns iter, F, F_MC, F_AM, volume, lambda, wall_ms."""
    return _write_frame(history.to_dataframe()[HISTORY_COLUMNS], path)


def write_profile_csv(profile: np.ndarray, path: PathLike) -> Path:
    """Two-column (x, u_y) profile."""
    profile = np.asarray(profile, dtype=float)
    return _write_frame(pd.DataFrame({"x": profile[:, 0], "u_y": profile[:, 1]}), path)


def write_identification_csv(strain: float, residual_norm: float, path: PathLike) -> Path:
    """One-row table of the identified strain and the fit residual."""
    return _write_frame(
        pd.DataFrame([{"strain": strain, "residual_norm": residual_norm}]), path
    )


def write_sweep_summary(rows: Iterable[Mapping[str, float]], path: PathLike) -> Path:
    """Sweep summary with columns gamma, F_MC, F_AM."""
    return _write_frame(pd.DataFrame(list(rows), columns=SWEEP_COLUMNS), path)


# ============================================================================
# JSON
# ============================================================================


def write_json_atomic(data: Any, path: PathLike) -> Path:
    """Write JSON through a temp file in the same directory and rename it into place."""
    path = _prepare(path)
    try:
        temp_fd, temp_path = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(temp_fd, "w", encoding="utf-8") as f:
                json.dump(data, f, indent=2)

            # Atomic rename
            os.replace(temp_path, path)

        except Exception:
            # Clean up temp file on error
            if os.path.exists(temp_path):
                os.unlink(temp_path)
            raise
    except (OSError, TypeError, ValueError) as e:
        raise ExportError(path, e) from e
    return path


def write_manifest(manifest: RunManifest, out_dir: PathLike) -> Path:
    """Write manifest.json listing only outputs that exist.

    Raises:
        ExportError: If a listed output is missing or the write fails
    """
    out_dir = Path(out_dir)
    missing = [name for name in manifest.outputs if not (out_dir / name).exists()]
    if missing:
        raise ExportError(out_dir / "manifest.json", FileNotFoundError(f"Missing outputs: {missing}"))
    return write_json_atomic(manifest.model_dump(mode="json"), out_dir / "manifest.json")
