"""Birkhoff-Rott velocity solvers.

``W(i) = -du*dv/(4 pi) * sum_j q_j x (z_i - z_j) / (|z_i - z_j|^2 + eps^2)^(3/2)``
with ``q_j = w1 * D_v z - w2 * D_u z``.

:class:`ExactBRSolver` circulates every rank's nodes around a ring (R-1
shifts).  :class:`CutoffBRSolver` migrates nodes into a 3D spatial mesh
decomposed in x/y, halos points within the cutoff, sums over neighbor lists
and migrates the velocities back to the surface decomposition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .mesh import ConfigError, SurfaceMesh
from .transport import Comm

_REC = 9  # x y z qx qy qz home_rank home_index gid


@dataclass(frozen=True)
class BRKernelParams:
    epsilon: float
    du: float
    dv: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not (self.du > 0 and self.dv > 0):
            raise ConfigError("du and dv must be positive")

    @property
    def prefactor(self) -> float:
        return -self.du * self.dv / (4.0 * math.pi)

    @classmethod
    def for_mesh(cls, mesh: SurfaceMesh, epsilon: float | None = None) -> "BRKernelParams":
        du, dv = mesh.spacing
        if epsilon is None:
            epsilon = default_epsilon(mesh)
        return cls(float(epsilon), du, dv)


def default_epsilon(mesh: SurfaceMesh) -> float:
    return 0.25 * mesh.extent[0] / mesh.nodes[0]


def weighted_vorticity(du_z: np.ndarray, dv_z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Kernel weight ``w1 * D_v z - w2 * D_u z`` per node."""
    return w[..., 0:1] * dv_z - w[..., 1:2] * du_z


# ---------------------------------------------------------------------------
# exact ring-pass solver
# ---------------------------------------------------------------------------

class ExactBRSolver:
    """All-pairs sum; node blocks travel R-1 times around the rank ring."""

    name = "exact"

    def __init__(self, params: BRKernelParams):
        self.params = params

    def __call__(self, comm: Comm, pos: np.ndarray, q: np.ndarray, gid: np.ndarray) -> np.ndarray:
        pos = np.ascontiguousarray(pos.reshape(-1, 3))
        q = np.ascontiguousarray(q.reshape(-1, 3))
        gid = np.asarray(gid).reshape(-1)
        mine = np.concatenate([pos, q, gid[:, None].astype(float)], axis=1)
        blocks = [mine]
        cur = mine
        for _ in range(comm.size - 1):
            cur = comm.ring_shift(cur, +1, site="exact_br")
            blocks.append(cur)
        allpts = np.concatenate(blocks)
        # fixed global source order keeps the sum independent of the rank count
        allpts = allpts[np.argsort(allpts[:, 6], kind="stable")]
        raw = kernels.br_dense(pos, allpts[:, 0:3], allpts[:, 3:6], self.params.epsilon)
        return self.params.prefactor * raw


# ---------------------------------------------------------------------------
# spatial mesh and migration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatialMesh:
    """3D box decomposed into x/y blocks spanning all z; half-open ownership."""

    bounds: tuple[float, float, float, float, float, float]
    rank_grid: tuple[int, int]
    cutoff: float = 0.5

    def __post_init__(self):
        x0, x1, y0, y1, z0, z1 = self.bounds
        if not (x1 > x0 and y1 > y0 and z1 >= z0):
            raise ConfigError(f"empty spatial box {self.bounds}")

    @property
    def size(self) -> int:
        return self.rank_grid[0] * self.rank_grid[1]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        x0, x1, y0, y1, _, _ = self.bounds
        px, py = self.rank_grid
        return np.linspace(x0, x1, px + 1), np.linspace(y0, y1, py + 1)

    def owner(self, xy: np.ndarray) -> np.ndarray:
        """Owning rank of each point; points outside the box clamp to the nearest block."""
        ex, ey = self.edges()
        px, py = self.rank_grid
        bi = np.clip(np.searchsorted(ex[1:-1], xy[:, 0], side="right"), 0, px - 1)
        bj = np.clip(np.searchsorted(ey[1:-1], xy[:, 1], side="right"), 0, py - 1)
        return bi * py + bj

    def block(self, rank: int, open_edges: bool = True):
        """x/y extent of a rank's block; boundary blocks reach to infinity when ``open_edges``."""
        ex, ey = self.edges()
        px, py = self.rank_grid
        i, j = divmod(rank, py)
        xlo, xhi, ylo, yhi = ex[i], ex[i + 1], ey[j], ey[j + 1]
        if open_edges:
            xlo = -np.inf if i == 0 else xlo
            xhi = np.inf if i == px - 1 else xhi
            ylo = -np.inf if j == 0 else ylo
            yhi = np.inf if j == py - 1 else yhi
        return (xlo, xhi), (ylo, yhi)


@dataclass
class MigratedPoints:
    """Points held by a rank of the spatial mesh (owned first, then ghosts)."""

    data: np.ndarray  # (n, 9) records
    n_owned: int

    @property
    def pos(self) -> np.ndarray:
        return self.data[:, 0:3]

    @property
    def q(self) -> np.ndarray:
        return self.data[:, 3:6]

    @property
    def home_rank(self) -> np.ndarray:
        return self.data[:, 6].astype(np.int64)

    @property
    def home_index(self) -> np.ndarray:
        return self.data[:, 7].astype(np.int64)

    @property
    def gid(self) -> np.ndarray:
        return self.data[:, 8].astype(np.int64)

    @property
    def owned(self) -> np.ndarray:
        mask = np.zeros(len(self.data), dtype=bool)
        mask[:self.n_owned] = True
        return mask

    def __len__(self) -> int:
        return len(self.data)


def pack_points(rank: int, pos: np.ndarray, q: np.ndarray, gid: np.ndarray) -> np.ndarray:
    n = len(pos)
    rec = np.empty((n, _REC))
    rec[:, 0:3] = pos
    rec[:, 3:6] = q
    rec[:, 6] = rank
    rec[:, 7] = np.arange(n)
    rec[:, 8] = gid
    return rec


def migrate_to_spatial(comm: Comm, spatial: SpatialMesh, pos: np.ndarray, q: np.ndarray,
                       gid: np.ndarray) -> MigratedPoints:
    """Send each surface node to the rank whose x/y block contains it."""
    if spatial.size != comm.size:
        raise ConfigError(f"spatial mesh has {spatial.size} blocks for {comm.size} ranks")
    pos = np.ascontiguousarray(pos.reshape(-1, 3))
    q = np.ascontiguousarray(q.reshape(-1, 3))
    bad = np.nonzero(~np.isfinite(pos).all(axis=1))[0]
    if len(bad):
        raise ValueError(f"rank {comm.rank}: non-finite position at local node {int(bad[0])}")
    rec = pack_points(comm.rank, pos, q, np.asarray(gid).reshape(-1))
    dest = spatial.owner(pos)
    sends = [(r, rec[dest == r]) for r in range(comm.size) if np.any(dest == r)]
    received = comm.exchange(sends, "migrate", site="migrate_to_spatial")
    data = np.concatenate([blk for _, blk in received]) if received else np.empty((0, _REC))
    return MigratedPoints(data, len(data))


def spatial_halo(comm: Comm, spatial: SpatialMesh, pts: MigratedPoints, cutoff: float) -> MigratedPoints:
    """Append ghost copies of remote points within ``cutoff`` (x/y) of this rank's block."""
    own = pts.data[:pts.n_owned]
    x, y = own[:, 0], own[:, 1]
    sends = []
    for r in range(comm.size):
        if r == comm.rank:
            continue
        (xlo, xhi), (ylo, yhi) = spatial.block(r)
        m = (x >= xlo - cutoff) & (x < xhi + cutoff) & (y >= ylo - cutoff) & (y < yhi + cutoff)
        if np.any(m):
            sends.append((r, own[m]))
    received = comm.exchange(sends, "halo", site="spatial_halo")
    ghosts = [blk for _, blk in received]
    data = np.concatenate([own] + ghosts) if ghosts else own.copy()
    return MigratedPoints(data, pts.n_owned)


def migrate_home(comm: Comm, pts: MigratedPoints, values: np.ndarray, n_home: int) -> np.ndarray:
    """Return per-point ``values`` (aligned with owned points) to their home ranks."""
    home = pts.home_rank[:pts.n_owned]
    idx = pts.home_index[:pts.n_owned]
    values = np.asarray(values)
    values = values.reshape(pts.n_owned, values.shape[-1] if values.ndim > 1 else 1)
    payload = np.concatenate([idx[:, None].astype(float), values], axis=1)
    sends = [(r, payload[home == r]) for r in range(comm.size) if np.any(home == r)]
    received = comm.exchange(sends, "migrate", site="migrate_home")
    out = np.zeros((n_home, values.shape[1]))
    for _, blk in received:
        out[blk[:, 0].astype(np.int64)] = blk[:, 1:]
    return out


class CutoffBRSolver:
    """Sum over pairs closer than ``cutoff`` via spatial migration and cell lists."""

    name = "cutoff"

    def __init__(self, params: BRKernelParams, spatial: SpatialMesh, cutoff: float | None = None):
        self.params = params
        self.spatial = spatial
        self.cutoff = float(spatial.cutoff if cutoff is None else cutoff)
        if not self.cutoff > 0:
            raise ConfigError("cutoff must be positive")
        self.last_owned_count = 0

    def __call__(self, comm: Comm, pos: np.ndarray, q: np.ndarray, gid: np.ndarray) -> np.ndarray:
        n_home = pos.reshape(-1, 3).shape[0]
        pts = migrate_to_spatial(comm, self.spatial, pos, q, gid)
        self.last_owned_count = pts.n_owned
        full = spatial_halo(comm, self.spatial, pts, self.cutoff)
        raw = kernels.br_cutoff(np.arange(full.n_owned), full.pos, full.q, full.gid,
                                self.cutoff, self.params.epsilon)
        w = self.params.prefactor * raw
        return migrate_home(comm, pts, w, n_home)


def make_solver(name: str, params: BRKernelParams, spatial: SpatialMesh | None = None,
                cutoff: float | None = None):
    if name == "exact":
        return ExactBRSolver(params)
    if name == "cutoff":
        if spatial is None:
            raise ConfigError("cutoff solver needs a spatial mesh")
        return CutoffBRSolver(params, spatial, cutoff)
    raise ConfigError(f"unknown BR solver {name!r}")
