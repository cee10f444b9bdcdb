"""Hot loops of the Birkhoff-Rott solvers, in numba and pure-numpy form.

Both variants return the *raw* sum ``sum_j q_j x (t_i - s_j) / (|t_i - s_j|^2 + eps^2)^(3/2)``;
the solver applies the ``-du*dv/(4*pi)`` prefactor.  Within one backend the
per-target accumulation order is fixed by the source order (dense kernel) or
by the sources' global ids (cutoff kernel), which makes results independent
of how points are distributed over ranks.
"""
import numpy as np

from . import _accel
from ._accel import njit

_CHUNK_ELEMS = 1 << 20
_MAX_CELLS_PER_DIM = 1 << 20


def kernel(r, q, eps):
    """Regularized Biot-Savart term ``q x r / (|r|^2 + eps^2)^(3/2)`` for one pair."""
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    d = r @ r + eps * eps
    if d == 0.0:
        return np.zeros(3)
    return np.cross(q, r) / (d * np.sqrt(d))


# ---------------------------------------------------------------------------
# dense all-pairs
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _dense_numba(targets, sources, q, eps):
    n = targets.shape[0]
    m = sources.shape[0]
    out = np.zeros((n, 3))
    eps2 = eps * eps
    for i in range(n):
        tx, ty, tz = targets[i, 0], targets[i, 1], targets[i, 2]
        ax = 0.0
        ay = 0.0
        az = 0.0
        for j in range(m):
            rx = tx - sources[j, 0]
            ry = ty - sources[j, 1]
            rz = tz - sources[j, 2]
            d = rx * rx + ry * ry + rz * rz + eps2
            if d == 0.0:
                continue
            s = 1.0 / (d * np.sqrt(d))
            qx, qy, qz = q[j, 0], q[j, 1], q[j, 2]
            ax += (qy * rz - qz * ry) * s
            ay += (qz * rx - qx * rz) * s
            az += (qx * ry - qy * rx) * s
        out[i, 0] = ax
        out[i, 1] = ay
        out[i, 2] = az
    return out


def _dense_numpy(targets, sources, q, eps):
    n, m = targets.shape[0], sources.shape[0]
    out = np.zeros((n, 3))
    if n == 0 or m == 0:
        return out
    chunk = max(1, _CHUNK_ELEMS // max(m, 1))
    eps2 = eps * eps
    for a in range(0, n, chunk):
        r = targets[a:a + chunk, None, :] - sources[None, :, :]
        d = np.einsum("ijk,ijk->ij", r, r) + eps2
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(d > 0.0, 1.0 / (d * np.sqrt(d)), 0.0)
        c = np.cross(q[None, :, :], r) * s[:, :, None]
        out[a:a + chunk] = c.sum(axis=1)
    return out


def br_dense(targets, sources, q, eps):
    """Raw all-pairs sum over every source for every target."""
    targets = np.ascontiguousarray(targets, dtype=float)
    sources = np.ascontiguousarray(sources, dtype=float)
    q = np.ascontiguousarray(q, dtype=float)
    if _accel.get_backend() == "numba":
        return _dense_numba(targets, sources, q, float(eps))
    return _dense_numpy(targets, sources, q, float(eps))


# ---------------------------------------------------------------------------
# cell-list fixed-radius sum
# ---------------------------------------------------------------------------

def _cell_setup(points, cutoff):
    lo = points.min(axis=0)
    extent = points.max(axis=0) - lo
    edge = max(float(cutoff), float(extent.max()) / _MAX_CELLS_PER_DIM, 1e-300)
    coords = np.floor((points - lo) / edge).astype(np.int64)
    dims = coords.max(axis=0) + 1
    keys = (coords[:, 0] * dims[1] + coords[:, 1]) * dims[2] + coords[:, 2]
    order = np.argsort(keys, kind="stable")
    return coords, dims, keys[order], order


@njit(cache=True, nogil=True)
def _cutoff_numba(tidx, points, q, gid, coords, dims, skeys, order, cutoff2, eps):
    nt = tidx.shape[0]
    out = np.zeros((nt, 3))
    eps2 = eps * eps
    cap = 64
    buf = np.empty(cap, dtype=np.int64)
    for a in range(nt):
        i = tidx[a]
        cx, cy, cz = coords[i, 0], coords[i, 1], coords[i, 2]
        cnt = 0
        for ox in range(-1, 2):
            x = cx + ox
            if x < 0 or x >= dims[0]:
                continue
            for oy in range(-1, 2):
                y = cy + oy
                if y < 0 or y >= dims[1]:
                    continue
                for oz in range(-1, 2):
                    z = cz + oz
                    if z < 0 or z >= dims[2]:
                        continue
                    key = (x * dims[1] + y) * dims[2] + z
                    lo = np.searchsorted(skeys, key, side="left")
                    hi = np.searchsorted(skeys, key, side="right")
                    for s in range(lo, hi):
                        j = order[s]
                        rx = points[i, 0] - points[j, 0]
                        ry = points[i, 1] - points[j, 1]
                        rz = points[i, 2] - points[j, 2]
                        if rx * rx + ry * ry + rz * rz <= cutoff2:
                            if cnt == cap:
                                cap *= 2
                                nb = np.empty(cap, dtype=np.int64)
                                nb[:cnt] = buf[:cnt]
                                buf = nb
                            buf[cnt] = j
                            cnt += 1
        nbrs = buf[:cnt]
        nbrs = nbrs[np.argsort(gid[nbrs], kind="mergesort")]
        ax = 0.0
        ay = 0.0
        az = 0.0
        for j in nbrs:
            rx = points[i, 0] - points[j, 0]
            ry = points[i, 1] - points[j, 1]
            rz = points[i, 2] - points[j, 2]
            d = rx * rx + ry * ry + rz * rz + eps2
            if d == 0.0:
                continue
            s = 1.0 / (d * np.sqrt(d))
            qx, qy, qz = q[j, 0], q[j, 1], q[j, 2]
            ax += (qy * rz - qz * ry) * s
            ay += (qz * rx - qx * rz) * s
            az += (qx * ry - qy * rx) * s
        out[a, 0] = ax
        out[a, 1] = ay
        out[a, 2] = az
    return out


def neighbor_pairs(tidx, points, cutoff, gid=None):
    """All ``(target, source)`` index pairs with ``|p_t - p_s| <= cutoff``.

    Pairs come back sorted by target position in ``tidx`` then by source
    global id.  Vectorized cell-list scan over the 27 surrounding cells.
    """
    points = np.ascontiguousarray(points, dtype=float)
    tidx = np.asarray(tidx, dtype=np.int64)
    if gid is None:
        gid = np.arange(len(points))
    if len(tidx) == 0 or len(points) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    coords, dims, skeys, order = _cell_setup(points, cutoff)
    cutoff2 = float(cutoff) ** 2
    tpos_all, src_all = [], []
    tc = coords[tidx]
    for ox in (-1, 0, 1):
        for oy in (-1, 0, 1):
            for oz in (-1, 0, 1):
                c = tc + np.array([ox, oy, oz])
                ok = np.all((c >= 0) & (c < dims), axis=1)
                tpos = np.nonzero(ok)[0]
                if len(tpos) == 0:
                    continue
                c = c[tpos]
                key = (c[:, 0] * dims[1] + c[:, 1]) * dims[2] + c[:, 2]
                lo = np.searchsorted(skeys, key, side="left")
                hi = np.searchsorted(skeys, key, side="right")
                counts = hi - lo
                tot = int(counts.sum())
                if tot == 0:
                    continue
                rep_t = np.repeat(tpos, counts)
                starts = np.repeat(lo - np.cumsum(counts) + counts, counts)
                slot = starts + np.arange(tot)
                src = order[slot]
                r = points[tidx[rep_t]] - points[src]
                keep = np.einsum("ij,ij->i", r, r) <= cutoff2
                tpos_all.append(rep_t[keep])
                src_all.append(src[keep])
    if not tpos_all:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    tpos = np.concatenate(tpos_all)
    src = np.concatenate(src_all)
    perm = np.lexsort((gid[src], tpos))
    return tpos[perm], src[perm]


def _cutoff_numpy(tidx, points, q, gid, cutoff, eps):
    out = np.zeros((len(tidx), 3))
    tpos, src = neighbor_pairs(tidx, points, cutoff, gid)
    if len(tpos) == 0:
        return out
    r = points[tidx[tpos]] - points[src]
    d = np.einsum("ij,ij->i", r, r) + eps * eps
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(d > 0.0, 1.0 / (d * np.sqrt(d)), 0.0)
    terms = np.cross(q[src], r) * s[:, None]
    np.add.at(out, tpos, terms)
    return out


def br_cutoff(tidx, points, q, gid, cutoff, eps):
    """Raw sum over sources within ``cutoff`` of each target ``points[tidx]``.

    ``points``/``q`` hold both owned and ghost points; ``gid`` gives each
    point's global id, which fixes the accumulation order.
    """
    points = np.ascontiguousarray(points, dtype=float)
    q = np.ascontiguousarray(q, dtype=float)
    gid = np.ascontiguousarray(gid, dtype=np.int64)
    tidx = np.ascontiguousarray(tidx, dtype=np.int64)
    if len(tidx) == 0 or len(points) == 0:
        return np.zeros((len(tidx), 3))
    if _accel.get_backend() == "numba":
        coords, dims, skeys, order = _cell_setup(points, cutoff)
        return _cutoff_numba(tidx, points, q, gid, coords, dims, skeys, order,
                             float(cutoff) ** 2, float(eps))
    return _cutoff_numpy(tidx, points, q, gid, float(cutoff), float(eps))
