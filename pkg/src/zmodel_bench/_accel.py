"""Backend switch for the hot kernels.

Set ``ZMODEL_BENCH_NUMBA=0`` in the environment to run the pure-numpy
kernels; otherwise numba is used when it imports.  :func:`set_backend`
switches at runtime (benchmarks and tests use it to compare both paths).
"""
import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _env_enabled() -> bool:
    flag = os.environ.get("ZMODEL_BENCH_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


_backend = "numba" if (HAS_NUMBA and _env_enabled()) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _backend = _backend, name
    return prev
