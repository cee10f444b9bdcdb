"""Distributed 2D complex FFT over the surface-mesh block decomposition.

The three communication knobs change only the message schedule:

* ``all_to_all`` -- one collective round per reshape in which every rank
  sends a block to every other rank (empty blocks included), versus
  point-to-point rounds that only carry non-empty overlaps.
* ``pencils`` -- grid-aligned pencils reached in three reshapes
  (block -> row pencils -> block -> column pencils), each confined to one
  row or column of the rank grid, versus a slab schedule with two global
  reshapes (block -> row slabs -> column slabs).
* ``reorder`` -- payloads are packed in the receiver's FFT-contiguous order
  and column data is stored transposed, versus natural order with strided
  column transforms.

Forward transforms are unnormalized; inverse transforms divide by Nx*Ny.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import ConfigError, SurfaceMesh, decompose, split
from .transport import Comm


@dataclass(frozen=True)
class FftCommConfig:
    all_to_all: bool = False
    pencils: bool = False
    reorder: bool = False

    @classmethod
    def from_index(cls, index: int) -> "FftCommConfig":
        """Configurations 0..7, bits (all_to_all, pencils, reorder) from high to low."""
        if not 0 <= index <= 7:
            raise ConfigError(f"fft config index must be in 0..7, got {index}")
        return cls(bool(index & 4), bool(index & 2), bool(index & 1))

    @property
    def index(self) -> int:
        return 4 * self.all_to_all + 2 * self.pencils + self.reorder


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------

_COLUMN_KINDS = ("col_pencils", "col_slabs")


@functools.lru_cache(maxsize=None)
def layouts(kind: str, nodes: tuple[int, int], rank_grid: tuple[int, int]):
    """Per-rank ((r0, r1), (c0, c1)) boxes for a layout kind."""
    nx, ny = nodes
    px, py = rank_grid
    size = px * py
    if kind == "block2d":
        return tuple(decompose(nx, ny, rank_grid))
    blocks_x, blocks_y = split(nx, px), split(ny, py)
    out = []
    for r in range(size):
        i, j = divmod(r, py)
        if kind == "row_pencils":
            lo, hi = blocks_x[i]
            sub = split(hi - lo, py)[j]
            out.append(((lo + sub[0], lo + sub[1]), (0, ny)))
        elif kind == "col_pencils":
            lo, hi = blocks_y[j]
            sub = split(hi - lo, px)[i]
            out.append(((0, nx), (lo + sub[0], lo + sub[1])))
        elif kind == "row_slabs":
            out.append((split(nx, size)[r], (0, ny)))
        elif kind == "col_slabs":
            out.append(((0, nx), split(ny, size)[r]))
        else:
            raise ValueError(f"unknown layout {kind!r}")
    return tuple(out)


def _stored_transposed(kind: str, cfg: FftCommConfig) -> bool:
    return cfg.reorder and kind in _COLUMN_KINDS


def _overlap(a, b):
    (ar0, ar1), (ac0, ac1) = a
    (br0, br1), (bc0, bc1) = b
    r0, r1 = max(ar0, br0), min(ar1, br1)
    c0, c1 = max(ac0, bc0), min(ac1, bc1)
    if r0 >= r1 or c0 >= c1:
        return None
    return (r0, r1), (c0, c1)


def _extract(local, box, ov, transposed):
    (r0, _), (c0, _) = box
    (a0, a1), (b0, b1) = ov
    if transposed:
        return local[b0 - c0:b1 - c0, a0 - r0:a1 - r0].T
    return local[a0 - r0:a1 - r0, b0 - c0:b1 - c0]


def _insert(local, box, ov, block, transposed):
    (r0, _), (c0, _) = box
    (a0, a1), (b0, b1) = ov
    if transposed:
        local[b0 - c0:b1 - c0, a0 - r0:a1 - r0] = block.T
    else:
        local[a0 - r0:a1 - r0, b0 - c0:b1 - c0] = block


def _reshape(comm: Comm, local: np.ndarray, src_kind: str, dst_kind: str,
             nodes, rank_grid, cfg: FftCommConfig) -> np.ndarray:
    src = layouts(src_kind, nodes, rank_grid)
    dst = layouts(dst_kind, nodes, rank_grid)
    src_t = _stored_transposed(src_kind, cfg)
    dst_t = _stored_transposed(dst_kind, cfg)
    me, size = comm.rank, comm.size
    (r0, r1), (c0, c1) = dst[me]
    shape = (c1 - c0, r1 - r0) if dst_t else (r1 - r0, c1 - c0)
    out = np.empty(shape, dtype=complex)

    def pack(dest):
        ov = _overlap(src[me], dst[dest])
        if ov is None:
            return None, None
        block = _extract(local, src[me], ov, src_t)
        if cfg.reorder and dst_t:
            block = block.T
        return ov, np.ascontiguousarray(block)

    def unpack(source, block):
        ov = _overlap(src[source], dst[me])
        if cfg.reorder and dst_t:
            block = block.T
        _insert(out, dst[me], ov, block, dst_t)

    ov, block = pack(me)
    if ov is not None:
        unpack(me, block)

    site = f"fft:{src_kind}->{dst_kind}"
    if cfg.all_to_all:
        sends = []
        for d in range(size):
            if d == me:
                continue
            _, block = pack(d)
            sends.append((d, block if block is not None else np.empty((0, 0), dtype=complex)))
        for s, block in comm.exchange(sends, "all_to_all", site=site):
            if block.size:
                unpack(s, block)
    else:
        for k in range(1, size):
            # rounds nobody uses are skipped by every rank alike
            if not any(_overlap(src[r], dst[(r + k) % size]) for r in range(size)):
                continue
            d = (me + k) % size
            _, block = pack(d)
            sends = [(d, block)] if block is not None else []
            for s, blk in comm.exchange(sends, "all_to_all", site=site):
                unpack(s, blk)
    return out


def _pipeline(cfg: FftCommConfig):
    """Sequence of (layout, fft axis) stages after the initial block layout."""
    if cfg.pencils:
        return [("row_pencils", "v"), ("block2d", None), ("col_pencils", "u")]
    return [("row_slabs", "v"), ("col_slabs", "u")]


def _local_fft(local, kind, axis_name, cfg, inverse):
    fn = np.fft.ifft if inverse else np.fft.fft
    if axis_name == "v":
        return fn(local, axis=1)
    # u-transform on a column layout
    axis = 1 if _stored_transposed(kind, cfg) else 0
    return fn(local, axis=axis)


# ---------------------------------------------------------------------------
# spectral fields
# ---------------------------------------------------------------------------

@dataclass
class SpectralField:
    values: np.ndarray
    kind: str
    box: tuple[tuple[int, int], tuple[int, int]]
    transposed: bool
    nodes: tuple[int, int]
    extent: tuple[float, float]
    cfg: FftCommConfig
    rank_grid: tuple[int, int]

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular wavenumbers (ku, kv) broadcast to the local storage shape."""
        nx, ny = self.nodes
        lu, lv = self.extent
        (r0, r1), (c0, c1) = self.box
        ku = 2.0 * np.pi * np.fft.fftfreq(nx, d=lu / nx)[r0:r1]
        kv = 2.0 * np.pi * np.fft.fftfreq(ny, d=lv / ny)[c0:c1]
        KU, KV = np.meshgrid(ku, kv, indexing="ij")
        if self.transposed:
            return KU.T, KV.T
        return KU, KV

    def to_global_order(self) -> np.ndarray:
        """Local values in natural (row, col) orientation."""
        return self.values.T if self.transposed else self.values


def _check_pow2(nodes):
    for n in nodes:
        if n < 1 or n & (n - 1):
            raise ConfigError(f"distributed FFT needs power-of-two sizes, got {nodes}")


def forward2d(comm: Comm, mesh: SurfaceMesh, owned: np.ndarray, cfg: FftCommConfig) -> SpectralField:
    """Unnormalized 2D DFT of a block-distributed field."""
    _check_pow2(mesh.nodes)
    nodes, grid = mesh.nodes, mesh.rank_grid
    local = np.ascontiguousarray(owned, dtype=complex)
    kind = "block2d"
    for nxt, axis in _pipeline(cfg):
        local = _reshape(comm, local, kind, nxt, nodes, grid, cfg)
        kind = nxt
        if axis is not None:
            local = _local_fft(local, kind, axis, cfg, inverse=False)
    return SpectralField(local, kind, layouts(kind, nodes, grid)[comm.rank],
                         _stored_transposed(kind, cfg), nodes, mesh.extent, cfg, grid)


def inverse2d(comm: Comm, mesh: SurfaceMesh, spec: SpectralField, cfg: FftCommConfig) -> np.ndarray:
    """Normalized inverse back to the block layout; returns complex owned values."""
    _check_pow2(mesh.nodes)
    nodes, grid = mesh.nodes, mesh.rank_grid
    stages = _pipeline(cfg)
    if spec.cfg != cfg or spec.kind != stages[-1][0] or spec.nodes != nodes or spec.rank_grid != grid:
        raise ConfigError(f"spectral layout {spec.kind}/{spec.cfg} does not match inverse config {cfg}")
    local = spec.values
    kinds = ["block2d"] + [k for k, _ in stages]
    for idx in range(len(stages) - 1, -1, -1):
        kind, axis = stages[idx]
        if axis is not None:
            local = _local_fft(local, kind, axis, cfg, inverse=True)
        local = _reshape(comm, local, kind, kinds[idx], nodes, grid, cfg)
    return local


def apply_multiplier(spec: SpectralField, multiplier: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> SpectralField:
    """Pointwise product with ``multiplier(ku, kv)``; no communication."""
    ku, kv = spec.wavenumbers()
    m = np.broadcast_to(multiplier(ku, kv), spec.values.shape)
    return SpectralField(spec.values * m, spec.kind, spec.box, spec.transposed,
                         spec.nodes, spec.extent, spec.cfg, spec.rank_grid)


def real_inverse(comm: Comm, mesh: SurfaceMesh, spec: SpectralField, cfg: FftCommConfig) -> np.ndarray:
    return inverse2d(comm, mesh, spec, cfg).real
