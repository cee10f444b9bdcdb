"""Shared drivers for model-level tests."""
import numpy as np

from zmodel_bench.driver.rocket_rig import build_model
from zmodel_bench.mesh import BoundaryCondition, SurfaceField, refresh

from conftest import on_ranks


def with_field(cfg, z, w, fn):
    """Scatter global (z, w) over ``cfg.rank_grid``; ``fn(comm, field, model, bc)`` per rank.

    Owned-shaped results come back gathered in global order; anything else is
    returned as the per-rank list.
    """
    mesh = cfg.surface_mesh()

    def body(comm):
        bc = BoundaryCondition(mesh)
        (x0, x1), (y0, y1) = mesh.box(comm.rank)
        f = SurfaceField.from_owned(mesh, comm.rank, z[x0:x1, y0:y1], w[x0:x1, y0:y1])
        refresh(comm, f, bc)
        return fn(comm, f, build_model(cfg, mesh, bc), bc)
    res, tr = on_ranks(cfg.ranks, body, tuple(cfg.rank_grid))
    if isinstance(res[0], tuple):
        return tuple(assemble(mesh, [r[k] for r in res]) for k in range(len(res[0]))), tr
    return assemble(mesh, res), tr


def assemble(mesh, blocks):
    out = np.zeros(tuple(mesh.nodes) + blocks[0].shape[2:])
    for r, b in enumerate(blocks):
        (x0, x1), (y0, y1) = mesh.box(r)
        out[x0:x1, y0:y1] = b
    return out


def sheet(cfg, fn=None, w=None):
    """Global (z, w) for z = (u, v, fn(u, v)) on the deck's mesh."""
    mesh = cfg.surface_mesh()
    du, dv = mesh.spacing
    u = mesh.bounds[0] + np.arange(cfg.nx) * du
    v = mesh.bounds[2] + np.arange(cfg.ny) * dv
    U, V = np.meshgrid(u, v, indexing="ij")
    z3 = np.zeros_like(U) if fn is None else fn(U, V)
    z = np.stack([U, V, z3], -1)
    return z, (np.zeros(U.shape + (2,)) if w is None else w)
