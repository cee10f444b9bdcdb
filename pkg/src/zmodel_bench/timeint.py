"""Third-order strong-stability-preserving Runge-Kutta (Shu-Osher)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import BoundaryCondition, SurfaceField, refresh
from .transport import Comm


def ssp_rk3(u, dt: float, rhs: Callable):
    """One SSP-RK3 step for a scalar, an array, or a tuple of arrays.

    Written in increment form, algebraically identical to
    ``u1 = u + dt F(u); u2 = 3/4 u + 1/4 (u1 + dt F(u1)); u' = 1/3 u + 2/3 (u2 + dt F(u2))``,
    so that a zero right-hand side leaves ``u`` bitwise unchanged.
    """
    if isinstance(u, tuple):
        k1 = rhs(u)
        u1 = tuple(a + dt * b for a, b in zip(u, k1))
        k2 = rhs(u1)
        u2 = tuple(a + dt * (b + c) / 4.0 for a, b, c in zip(u, k1, k2))
        k3 = rhs(u2)
        return tuple(a + dt * (b + c + 4.0 * d) / 6.0 for a, b, c, d in zip(u, k1, k2, k3))
    k1 = rhs(u)
    k2 = rhs(u + dt * k1)
    k3 = rhs(u + dt * (k1 + k2) / 4.0)
    return u + dt * (k1 + k2 + 4.0 * k3) / 6.0


@dataclass
class TimeState:
    step: int = 0
    dt: float = 0.1

    @property
    def t(self) -> float:
        return self.step * self.dt


class TimeIntegrator:
    """Advances a rank's surface field; three derivative evaluations per step."""

    def __init__(self, comm: Comm, zmodel, bc: BoundaryCondition | None = None):
        self.comm = comm
        self.zmodel = zmodel
        self.bc = bc or zmodel.bc

    def step(self, field: SurfaceField, dt: float, step: int | None = None) -> SurfaceField:
        work = field.copy()

        def rhs(state):
            work.owned_z[...] = state[0]
            work.owned_w[...] = state[1]
            refresh(self.comm, work, self.bc)
            return self.zmodel.derivatives(self.comm, work)

        z, w = ssp_rk3((field.owned_z.copy(), field.owned_w.copy()), dt, rhs)
        if not (np.isfinite(z).all() and np.isfinite(w).all()):
            raise FloatingPointError(f"non-finite state after step {step if step is not None else '?'}"
                                     f" on rank {self.comm.rank}")
        return SurfaceField.from_owned(field.mesh, field.rank, z, w)


def rk3_step(comm: Comm, field: SurfaceField, dt: float, zmodel, bc=None) -> SurfaceField:
    return TimeIntegrator(comm, zmodel, bc).step(field, dt)

