"""Compare the numba and pure-numpy Birkhoff-Rott kernels.

    python3 benchmarks/bench_backends.py [--sizes 16,32,48] [--repeat 3]

Reports best-of-N wall time per kernel and backend, the speedup, and the
max relative difference between the two results.  The first numba call of
each kernel is a warm-up so compilation is not timed.
"""
import argparse
import time

import numpy as np

from zmodel_bench import _accel
from zmodel_bench.kernels import br_cutoff, br_dense


def sheet(n, rng):
    u, v = np.meshgrid(np.linspace(-3, 3, n), np.linspace(-3, 3, n), indexing="ij")
    pos = np.stack([u, v, 0.25 * np.cos(u) * np.cos(v)], axis=-1).reshape(-1, 3)
    pos += 1e-3 * rng.standard_normal(pos.shape)
    return pos, rng.standard_normal(pos.shape)


def best_of(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="16,32,48")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--cutoff", type=float, default=0.5)
    args = ap.parse_args(argv)
    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<8}{'points':>8}{'numpy s':>12}{'numba s':>12}{'speedup':>10}{'max rel diff':>14}")
    prev = _accel.get_backend()
    try:
        for n in (int(s) for s in args.sizes.split(",")):
            pos, q = sheet(n, rng)
            gid = np.arange(len(pos), dtype=np.int64)
            tidx = np.arange(len(pos), dtype=np.int64)
            eps = 0.25 * 6.0 / n
            cases = {
                "dense": lambda: br_dense(pos, pos, q, eps),
                "cutoff": lambda: br_cutoff(tidx, pos, q, gid, args.cutoff, eps),
            }
            for name, fn in cases.items():
                _accel.set_backend("numba")
                fn()  # compile
                t_nb, r_nb = best_of(fn, args.repeat)
                _accel.set_backend("numpy")
                t_np, r_np = best_of(fn, args.repeat)
                diff = np.abs(r_nb - r_np).max() / max(np.abs(r_np).max(), 1e-300)
                print(f"{name:<8}{len(pos):>8}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>14.2e}")
    finally:
        _accel.set_backend(prev)


if __name__ == "__main__":
    main()
