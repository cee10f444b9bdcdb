"""Distributed 2D surface mesh: block decomposition, depth-2 halos, boundary
conditions and the finite-difference operators the interface model needs.

Per-rank arrays are stored *extended*: shape ``(nx + 4, ny + 4, C)`` with the
owned block at ``[2:-2, 2:-2]``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .transport import Comm

HALO = 2
BC_TYPES = ("periodic", "free")


class ConfigError(ValueError):
    """Invalid problem or decomposition parameters."""


def split(n: int, parts: int) -> list[tuple[int, int]]:
    """Balanced contiguous split of ``range(n)``; larger blocks first."""
    if parts < 1 or parts > n:
        raise ConfigError(f"cannot split {n} nodes into {parts} blocks")
    base, extra = divmod(n, parts)
    out, lo = [], 0
    for k in range(parts):
        hi = lo + base + (1 if k < extra else 0)
        out.append((lo, hi))
        lo = hi
    return out


def decompose(nx: int, ny: int, rank_grid: tuple[int, int]) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Owned half-open index boxes, rank ``i * Py + j`` owning block ``(i, j)``."""
    px, py = rank_grid
    if px > nx or py > ny:
        raise ConfigError(f"rank grid {rank_grid} larger than mesh {(nx, ny)}")
    xs, ys = split(nx, px), split(ny, py)
    return [(xs[i], ys[j]) for i in range(px) for j in range(py)]


@dataclass(frozen=True)
class SurfaceMesh:
    nodes: tuple[int, int]
    bounds: tuple[float, float, float, float]  # u0, u1, v0, v1
    rank_grid: tuple[int, int] = (1, 1)
    bc: str = "periodic"

    def __post_init__(self):
        if self.bc not in BC_TYPES:
            raise ConfigError(f"unknown boundary condition {self.bc!r}")
        nx, ny = self.nodes
        if nx < 2 or ny < 2:
            raise ConfigError("mesh needs at least 2 nodes per dimension")
        u0, u1, v0, v1 = self.bounds
        if not (u1 > u0 and v1 > v0):
            raise ConfigError(f"empty parameter domain {self.bounds}")
        boxes = decompose(nx, ny, self.rank_grid)
        if self.bc == "free":
            small = min(min(b[0][1] - b[0][0], b[1][1] - b[1][0]) for b in boxes)
            if small < 2:
                raise ConfigError("free boundaries need at least 2 owned nodes per rank and dimension")

    @property
    def halo(self) -> int:
        return HALO

    @property
    def size(self) -> int:
        return self.rank_grid[0] * self.rank_grid[1]

    @property
    def extent(self) -> tuple[float, float]:
        u0, u1, v0, v1 = self.bounds
        return u1 - u0, v1 - v0

    @property
    def spacing(self) -> tuple[float, float]:
        nx, ny = self.nodes
        lu, lv = self.extent
        if self.bc == "periodic":
            return lu / nx, lv / ny
        return lu / (nx - 1), lv / (ny - 1)

    def box(self, rank: int) -> tuple[tuple[int, int], tuple[int, int]]:
        return _boxes(self.nodes, self.rank_grid)[rank]

    def owned_shape(self, rank: int) -> tuple[int, int]:
        (x0, x1), (y0, y1) = self.box(rank)
        return x1 - x0, y1 - y0

    def ext_shape(self, rank: int) -> tuple[int, int]:
        nx, ny = self.owned_shape(rank)
        return nx + 2 * HALO, ny + 2 * HALO

    def coords(self, rank: int) -> tuple[np.ndarray, np.ndarray]:
        """Parameter coordinates ``(u, v)`` of the owned nodes, each shape (nx, ny)."""
        (x0, x1), (y0, y1) = self.box(rank)
        du, dv = self.spacing
        u = self.bounds[0] + np.arange(x0, x1) * du
        v = self.bounds[2] + np.arange(y0, y1) * dv
        return np.meshgrid(u, v, indexing="ij")

    def global_ids(self, rank: int) -> np.ndarray:
        (x0, x1), (y0, y1) = self.box(rank)
        i, j = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1), indexing="ij")
        return (i * self.nodes[1] + j).ravel()


@functools.lru_cache(maxsize=None)
def _boxes(nodes, rank_grid):
    return decompose(nodes[0], nodes[1], rank_grid)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass
class SurfaceField:
    """Position ``z`` (3 comps) and vorticity ``w`` (2 comps) on one rank, with ghosts."""

    mesh: SurfaceMesh
    rank: int
    z: np.ndarray
    w: np.ndarray

    @classmethod
    def empty(cls, mesh: SurfaceMesh, rank: int) -> "SurfaceField":
        ex, ey = mesh.ext_shape(rank)
        return cls(mesh, rank, np.zeros((ex, ey, 3)), np.zeros((ex, ey, 2)))

    @classmethod
    def from_owned(cls, mesh: SurfaceMesh, rank: int, z, w) -> "SurfaceField":
        f = cls.empty(mesh, rank)
        f.owned_z[...] = z
        f.owned_w[...] = w
        return f

    @property
    def owned_z(self) -> np.ndarray:
        return self.z[HALO:-HALO, HALO:-HALO]

    @property
    def owned_w(self) -> np.ndarray:
        return self.w[HALO:-HALO, HALO:-HALO]

    def copy(self) -> "SurfaceField":
        return SurfaceField(self.mesh, self.rank, self.z.copy(), self.w.copy())


def extend(mesh: SurfaceMesh, rank: int, owned: np.ndarray) -> np.ndarray:
    """Zero-padded extended copy of an owned array (ghosts still to be filled)."""
    owned = np.asarray(owned, dtype=float)
    ex, ey = mesh.ext_shape(rank)
    out = np.zeros((ex, ey) + owned.shape[2:])
    out[HALO:-HALO, HALO:-HALO] = owned
    return out


# ---------------------------------------------------------------------------
# halo exchange
# ---------------------------------------------------------------------------

def _ghost_map(lo: int, hi: int, n: int, periodic: bool):
    """Global (unwrapped) and wrapped index of every extended position."""
    g = np.arange(lo - HALO, hi + HALO)
    if periodic:
        return g, g % n
    wrapped = np.where((g >= 0) & (g < n), g, -1)
    return g, wrapped


@functools.lru_cache(maxsize=None)
def _halo_plan(mesh: SurfaceMesh, me: int):
    """For each receiver: (receiver ext x/y positions, my owned x/y indices)."""
    periodic = mesh.bc == "periodic"
    nx, ny = mesh.nodes
    (mx0, mx1), (my0, my1) = mesh.box(me)
    plan = []
    for r in range(mesh.size):
        (rx0, rx1), (ry0, ry1) = mesh.box(r)
        _, wx = _ghost_map(rx0, rx1, nx, periodic)
        _, wy = _ghost_map(ry0, ry1, ny, periodic)
        sx = np.nonzero((wx >= mx0) & (wx < mx1))[0]
        sy = np.nonzero((wy >= my0) & (wy < my1))[0]
        if r == me:
            # a self-send is only needed when ghosts wrap onto the own block
            inner_x = (sx >= HALO) & (sx < HALO + rx1 - rx0)
            inner_y = (sy >= HALO) & (sy < HALO + ry1 - ry0)
            if inner_x.all() and inner_y.all():
                continue
        if len(sx) and len(sy):
            plan.append((r, sx, sy, wx[sx] - mx0, wy[sy] - my0))
    return plan


def halo_exchange(comm: Comm, mesh: SurfaceMesh, *arrays: np.ndarray) -> None:
    """Fill depth-2 ghosts (corners included) of extended arrays in place.

    All arrays must share the rank's extended (nx+4, ny+4) leading shape; they
    travel together in one message per neighbor.  Periodic wrap copies the raw
    owner values; coordinate offsets are applied by :func:`apply_boundary`.
    """
    arrs = [a if a.ndim == 3 else a[..., None] for a in arrays]
    widths = [a.shape[2] for a in arrs]
    sends = []
    for r, sx, sy, ox, oy in _halo_plan(mesh, comm.rank):
        ix = np.ix_(ox + HALO, oy + HALO)
        block = np.concatenate([a[ix] for a in arrs], axis=2)
        sends.append((r, block))
    received = comm.exchange(sends, "halo", site="halo_exchange")
    for src, block in received:
        plan = {p[0]: p for p in _halo_plan(mesh, src)}
        _, sx, sy, _, _ = plan[comm.rank]
        ix = np.ix_(sx, sy)
        c = 0
        for a, wdt in zip(arrs, widths):
            a[ix] = block[:, :, c:c + wdt]
            c += wdt


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

class BoundaryCondition:
    """Finalizes ghost nodes after a halo exchange; no communication."""

    def __init__(self, mesh: SurfaceMesh, spatial_extent: tuple[float, float] | None = None):
        self.mesh = mesh
        self.kind = mesh.bc
        # periodic offset per wrap, in position units
        self.period = spatial_extent if spatial_extent is not None else mesh.extent

    def apply_positions(self, rank: int, z: np.ndarray) -> None:
        if self.kind == "periodic":
            nx, ny = self.mesh.nodes
            (x0, x1), (y0, y1) = self.mesh.box(rank)
            gx, _ = _ghost_map(x0, x1, nx, True)
            gy, _ = _ghost_map(y0, y1, ny, True)
            z[:, :, 0] += (np.floor_divide(gx, nx) * self.period[0])[:, None]
            z[:, :, 1] += (np.floor_divide(gy, ny) * self.period[1])[None, :]
        else:
            self.extrapolate(rank, z)

    def apply_scalars(self, rank: int, *arrays: np.ndarray) -> None:
        if self.kind == "free":
            for a in arrays:
                self.extrapolate(rank, a)

    def extrapolate(self, rank: int, a: np.ndarray) -> None:
        """Linear extrapolation into ghosts beyond the global boundary: x pass, then y pass."""
        nx, ny = self.mesh.nodes
        (x0, x1), (y0, y1) = self.mesh.box(rank)
        n_x, n_y = x1 - x0, y1 - y0
        lo, hi = HALO, HALO + n_x - 1
        if x0 == 0:
            d = a[lo] - a[lo + 1]
            for k in range(1, HALO + 1):
                a[lo - k] = a[lo] + k * d
        if x1 == nx:
            d = a[hi] - a[hi - 1]
            for k in range(1, HALO + 1):
                a[hi + k] = a[hi] + k * d
        lo, hi = HALO, HALO + n_y - 1
        if y0 == 0:
            d = a[:, lo] - a[:, lo + 1]
            for k in range(1, HALO + 1):
                a[:, lo - k] = a[:, lo] + k * d
        if y1 == ny:
            d = a[:, hi] - a[:, hi - 1]
            for k in range(1, HALO + 1):
                a[:, hi + k] = a[:, hi] + k * d


def apply_boundary(field: SurfaceField, bc: BoundaryCondition | None = None) -> SurfaceField:
    bc = bc or BoundaryCondition(field.mesh)
    bc.apply_positions(field.rank, field.z)
    bc.apply_scalars(field.rank, field.w)
    return field


def refresh(comm: Comm, field: SurfaceField, bc: BoundaryCondition | None = None) -> SurfaceField:
    """Halo exchange of (z, w) followed by boundary correction."""
    halo_exchange(comm, field.mesh, field.z, field.w)
    return apply_boundary(field, bc)


def refresh_scalars(comm: Comm, mesh: SurfaceMesh, *arrays: np.ndarray,
                    bc: BoundaryCondition | None = None) -> None:
    """Halo + boundary for fields that carry no geometric offset (e.g. potentials)."""
    halo_exchange(comm, mesh, *arrays)
    (bc or BoundaryCondition(mesh)).apply_scalars(comm.rank, *arrays)


# ---------------------------------------------------------------------------
# stencils
# ---------------------------------------------------------------------------

@dataclass
class Stencils:
    du_z: np.ndarray
    dv_z: np.ndarray
    normal: np.ndarray
    lap_z: np.ndarray
    lap_w: np.ndarray


def d_u(a: np.ndarray, du: float) -> np.ndarray:
    """Central difference along u at owned nodes of an extended array."""
    return (a[3:-1, 2:-2] - a[1:-3, 2:-2]) / (2.0 * du)


def d_v(a: np.ndarray, dv: float) -> np.ndarray:
    return (a[2:-2, 3:-1] - a[2:-2, 1:-3]) / (2.0 * dv)


def laplacian(a: np.ndarray, du: float, dv: float) -> np.ndarray:
    """Compact 9-point Laplacian at owned nodes.

    Each second difference is averaged over the neighbouring lines with
    weights (1, 10, 1) / 12; for du == dv this is the classic
    ``[4 * edges + corners - 20 * centre] / (6 h^2)`` stencil.
    """
    c = a[2:-2, 2:-2]

    def duu(j0, j1):
        return (a[3:-1, j0:j1] - 2.0 * a[2:-2, j0:j1] + a[1:-3, j0:j1]) / (du * du)

    def dvv(i0, i1):
        return (a[i0:i1, 3:-1] - 2.0 * a[i0:i1, 2:-2] + a[i0:i1, 1:-3]) / (dv * dv)

    n = c.shape[1]
    m = c.shape[0]
    uu = (duu(1, n + 1) + 10.0 * duu(2, n + 2) + duu(3, n + 3)) / 12.0
    vv = (dvv(1, m + 1) + 10.0 * dvv(2, m + 2) + dvv(3, m + 3)) / 12.0
    return uu + vv


def surface_stencils(field: SurfaceField) -> Stencils:
    """Tangents, raw normal and Laplacians at every owned node (ghosts must be valid)."""
    du, dv = field.mesh.spacing
    zu = d_u(field.z, du)
    zv = d_v(field.z, dv)
    return Stencils(
        du_z=zu,
        dv_z=zv,
        normal=np.cross(zu, zv),
        lap_z=laplacian(field.z, du, dv),
        lap_w=laplacian(field.w, du, dv),
    )


class ProblemManager:
    """Holds a rank's current surface state and its halo plumbing."""

    def __init__(self, comm: Comm, mesh: SurfaceMesh, field: SurfaceField,
                 bc: BoundaryCondition | None = None):
        self.comm = comm
        self.mesh = mesh
        self.field = field
        self.bc = bc or BoundaryCondition(mesh)

    def refresh(self) -> SurfaceField:
        return refresh(self.comm, self.field, self.bc)

    def gather(self, owned: np.ndarray, root: int | None = 0) -> np.ndarray | None:
        return gather_global(self.comm, self.mesh, owned, root)


def gather_global(comm: Comm, mesh: SurfaceMesh, owned: np.ndarray, root: int | None = 0):
    """Assemble a global (Nx, Ny, ...) array from owned blocks.

    ``root=None`` delivers the result to every rank.
    """
    owned = np.ascontiguousarray(owned)
    dests = range(comm.size) if root is None else [root]
    received = comm.exchange([(d, owned) for d in dests], "point_to_point", site="gather")
    if root is not None and comm.rank != root:
        return None
    nx, ny = mesh.nodes
    out = np.empty((nx, ny) + owned.shape[2:], dtype=owned.dtype)
    for src, block in received:
        (x0, x1), (y0, y1) = mesh.box(src)
        out[x0:x1, y0:y1] = block
    return out
