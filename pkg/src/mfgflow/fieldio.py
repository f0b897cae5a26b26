"""On-disk formats: field dumps, CSV exports, trajectory and ensemble files.

Field dump (little-endian): header {magic "MFGF", version u32, dim u32,
J u32, L f64, count u32} followed by count row-major f64 arrays of shape
J^dim. Trajectories add a JSON sidecar {t_start, T, dt, stride,
frame_count}. Ensemble snapshots: {magic "MFGE", version u32, N u64,
dim u32} followed by row-major f64 positions. CSV exports carry one node
per row as x[,y],value with 17 significant digits (f64 round-trip).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .spectral import Grid
from .timestep import FieldTrajectory, TimeWindow

FIELD_MAGIC = b"MFGF"
ENSEMBLE_MAGIC = b"MFGE"
FORMAT_VERSION = 1


def write_field_dump(path, grid: Grid, arrays: np.ndarray) -> None:
    """Write one or more fields on a shared grid to a binary dump."""
    arrays = np.asarray(arrays, dtype="<f8")
    if arrays.ndim == grid.dim:
        arrays = arrays[None]
    count = arrays.shape[0]
    if arrays.shape[1:] != grid.shape:
        raise ConfigError(f"field shape {arrays.shape[1:]} != grid shape {grid.shape}")
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, grid.dim, grid.J))
        fh.write(struct.pack("<d", grid.L))
        fh.write(struct.pack("<I", count))
        fh.write(np.ascontiguousarray(arrays).tobytes())


def read_field_dump(path):
    """Read a binary dump; returns (grid, arrays of shape (count, *grid.shape))."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FIELD_MAGIC:
            raise ConfigError(f"{path}: not a field dump (magic {magic!r})")
        version, dim, J = struct.unpack("<III", fh.read(12))
        if version != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported dump version {version}")
        (L,) = struct.unpack("<d", fh.read(8))
        (count,) = struct.unpack("<I", fh.read(4))
        grid = Grid(dim, L, J)
        data = np.frombuffer(fh.read(count * grid.size * 8), dtype="<f8")
    return grid, data.reshape(count, *grid.shape).copy()


def write_field_csv(path, grid: Grid, values: np.ndarray) -> None:
    """CSV export of one field: header then x[,y],value rows."""
    values = np.asarray(values)
    with open(path, "w") as fh:
        if grid.dim == 1:
            fh.write("x,value\n")
            for x, v in zip(grid.x, values):
                fh.write(f"{x:.17g},{v:.17g}\n")
        else:
            fh.write("x,y,value\n")
            X, Y = grid.x
            for i in range(grid.J):
                for j in range(grid.J):
                    fh.write(f"{X[i, j]:.17g},{Y[i, j]:.17g},{values[i, j]:.17g}\n")


def read_field_csv(path, grid: Grid) -> np.ndarray:
    """Parse a field CSV written by write_field_csv back to grid values."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1)
    if grid.dim == 1:
        if raw.shape[0] != grid.J:
            raise ConfigError(f"{path}: expected {grid.J} rows, found {raw.shape[0]}")
        return raw[:, 1].copy()
    if raw.shape[0] != grid.size:
        raise ConfigError(f"{path}: expected {grid.size} rows, found {raw.shape[0]}")
    return raw[:, 2].reshape(grid.J, grid.J).copy()


def write_trajectory(basepath, traj: FieldTrajectory, component: int | None = None) -> dict:
    """Dump trajectory frames (one scalar stream) plus a JSON manifest.

    Vector trajectories dump one component per call. Returns the manifest
    dict that was written alongside the binary.
    """
    basepath = Path(basepath)
    data = traj.data if not traj.is_vector else traj.data[:, component]
    write_field_dump(basepath.with_suffix(".bin"), traj.grid, data)
    manifest = {
        "t_start": traj.window.t_start,
        "T": traj.window.t_end,
        "dt": traj.window.dt,
        "stride": traj.stride,
        "frame_count": traj.n_frames,
    }
    basepath.with_suffix(".json").write_text(json.dumps(manifest, indent=1))
    return manifest


def read_trajectory(basepath) -> FieldTrajectory:
    basepath = Path(basepath)
    meta = json.loads(basepath.with_suffix(".json").read_text())
    grid, data = read_field_dump(basepath.with_suffix(".bin"))
    window = TimeWindow(meta["t_start"], meta["T"], meta["dt"])
    return FieldTrajectory(grid, window, data, meta["stride"])


def write_ensemble(path, positions: np.ndarray) -> None:
    positions = np.atleast_2d(np.asarray(positions, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(ENSEMBLE_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<QI", positions.shape[0], positions.shape[1]))
        fh.write(np.ascontiguousarray(positions).tobytes())


def read_ensemble(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != ENSEMBLE_MAGIC:
            raise ConfigError(f"{path}: not an ensemble dump (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported dump version {version}")
        n, dim = struct.unpack("<QI", fh.read(12))
        data = np.frombuffer(fh.read(n * dim * 8), dtype="<f8")
    return data.reshape(n, dim).copy()
