"""Plain-text state output: one CSV per written step plus ``meta.json``."""
from __future__ import annotations

import json
import os

import numpy as np

from ..mesh import SurfaceMesh, gather_global
from ..transport import Comm

HEADER = "i,j,x,y,z,w1,w2"
_FMT = ["%d", "%d"] + ["%.17g"] * 5


def step_path(out_dir: str, step: int) -> str:
    return os.path.join(out_dir, f"step_{step:06d}.csv")


def write_csv(path: str, z: np.ndarray, w: np.ndarray) -> None:
    nx, ny = z.shape[:2]
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    rows = np.column_stack([i.ravel(), j.ravel(), z.reshape(-1, 3), w.reshape(-1, 2)])
    np.savetxt(path, rows, fmt=_FMT, delimiter=",", header=HEADER, comments="")


def write_output(comm: Comm, mesh: SurfaceMesh, field, step: int, out_dir: str) -> str | None:
    """Gather the owned state on rank 0 and write ``step_NNNNNN.csv``."""
    data = np.concatenate([field.owned_z, field.owned_w], axis=-1)
    full = gather_global(comm, mesh, data, root=0)
    if comm.rank != 0:
        return None
    os.makedirs(out_dir, exist_ok=True)
    path = step_path(out_dir, step)
    write_csv(path, full[..., :3], full[..., 3:])
    return path


def write_meta(out_dir: str, cfg) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "meta.json")
    with open(path, "w") as fh:
        json.dump({"deck": cfg.to_dict(), "columns": HEADER.split(",")}, fh, indent=2, sort_keys=True)
    return path


def load_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a state CSV back into global ``(z, w)`` arrays."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    i = rows[:, 0].astype(int)
    j = rows[:, 1].astype(int)
    nx, ny = i.max() + 1, j.max() + 1
    z = np.empty((nx, ny, 3))
    w = np.empty((nx, ny, 2))
    z[i, j] = rows[:, 2:5]
    w[i, j] = rows[:, 5:7]
    return z, w
