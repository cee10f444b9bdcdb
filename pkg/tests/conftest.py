import numpy as np
import pytest

from zmodel_bench import _accel
from zmodel_bench.transport import factor_grid, spawn_ranks


def on_ranks(ranks, body, grid=None, **kw):
    """Run ``body`` on ``ranks`` simulated ranks; returns (results, trace)."""
    return spawn_ranks(ranks, grid or factor_grid(ranks), body, **kw)


def naive_dft2(a):
    """O(N^4) double-loop DFT, the oracle for the distributed transform."""
    nx, ny = a.shape
    out = np.zeros((nx, ny), dtype=complex)
    j = np.arange(nx)[:, None]
    l = np.arange(ny)[None, :]
    for k in range(nx):
        for m in range(ny):
            out[k, m] = np.sum(a * np.exp(-2j * np.pi * (k * j / nx + m * l / ny)))
    return out


def dense_br_loop(pos, q, eps, pref):
    """Serial loop over targets, written independently of the solver kernels."""
    out = np.zeros((len(pos), 3))
    for i in range(len(pos)):
        r = pos[i] - pos
        d = np.einsum("ij,ij->i", r, r) + eps * eps
        s = np.where(d > 0, d, 1.0) ** -1.5 * (d > 0)
        out[i] = (np.cross(q, r) * s[:, None]).sum(axis=0)
    return pref * out


@pytest.fixture(params=["numba", "numpy"] if _accel.HAS_NUMBA else ["numpy"])
def backend(request):
    prev = _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
