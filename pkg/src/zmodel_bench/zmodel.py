"""Interface time derivatives for the low-, medium- and high-order models.

=======  ======================  ==========================
order    dz/dt                   dw/dt operators
=======  ======================  ==========================
low      Fourier multiplier      spectral (FFT)
medium   Birkhoff-Rott solver    spectral (FFT)
high     Birkhoff-Rott solver    mesh stencils
=======  ======================  ==========================

Vorticity law: ``dw/dt = 2A (mu * L(w) - grad Phi)`` with
``Phi = |V|^2 / 2 - g * z3``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fft
from .brsolver import weighted_vorticity
from .fft import FftCommConfig
from .mesh import (BoundaryCondition, ConfigError, SurfaceField, SurfaceMesh, d_u, d_v,
                   extend, laplacian, refresh_scalars, surface_stencils)
from .transport import Comm

ORDERS = ("low", "medium", "high")


@dataclass(frozen=True)
class PhysicsParams:
    atwood: float = 0.5
    gravity: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.atwood <= 1.0:
            raise ConfigError(f"Atwood number must lie in (0, 1], got {self.atwood}")
        if self.gravity < 0 or self.mu < 0:
            raise ConfigError("gravity and mu must be non-negative")


def _half_inverse_k(ku, kv):
    k = np.hypot(ku, kv)
    out = np.zeros_like(k)
    nz = k > 0
    out[nz] = 0.5 / k[nz]
    return out


def low_order_velocity(comm: Comm, mesh: SurfaceMesh, normal: np.ndarray, w: np.ndarray,
                       cfg: FftCommConfig, spectra=None) -> np.ndarray:
    """Normal velocity ``F^-1[ (-i k . w_hat) / (2|k|) ]`` along the unit normal.

    ``spectra`` may carry precomputed forward transforms of (w1, w2).
    """
    if mesh.bc != "periodic":
        raise ConfigError("low-order velocity requires periodic boundaries")
    if spectra is None:
        spectra = (fft.forward2d(comm, mesh, w[..., 0], cfg), fft.forward2d(comm, mesh, w[..., 1], cfg))
    f1, f2 = spectra
    ku, kv = f1.wavenumbers()
    src = f1.values * (-1j * ku) + f2.values * (-1j * kv)
    spec = fft.SpectralField(src, f1.kind, f1.box, f1.transposed, f1.nodes, f1.extent, f1.cfg, f1.rank_grid)
    vn = fft.real_inverse(comm, mesh, fft.apply_multiplier(spec, _half_inverse_k), cfg)
    nrm = np.linalg.norm(normal, axis=-1, keepdims=True)
    return vn[..., None] * (normal / nrm)


def vorticity_rhs(comm: Comm, field: SurfaceField, V: np.ndarray, params: PhysicsParams,
                  method: str, cfg: FftCommConfig | None = None, lap_w: np.ndarray | None = None,
                  bc: BoundaryCondition | None = None, spectra=None) -> np.ndarray:
    """``dw/dt`` at owned nodes, using mesh stencils or FFT multipliers."""
    mesh = field.mesh
    phi = 0.5 * np.einsum("...k,...k->...", V, V) - params.gravity * field.owned_z[..., 2]
    if method == "stencil":
        du, dv = mesh.spacing
        phi_ext = extend(mesh, field.rank, phi)
        refresh_scalars(comm, mesh, phi_ext, bc=bc)
        grad = np.stack([d_u(phi_ext, du), d_v(phi_ext, dv)], axis=-1)
        if lap_w is None:
            lap_w = laplacian(field.w, du, dv)
    elif method == "spectral":
        if cfg is None:
            cfg = FftCommConfig()
        fphi = fft.forward2d(comm, mesh, phi, cfg)
        grad = np.stack([
            fft.real_inverse(comm, mesh, fft.apply_multiplier(fphi, lambda ku, kv: 1j * ku), cfg),
            fft.real_inverse(comm, mesh, fft.apply_multiplier(fphi, lambda ku, kv: 1j * kv), cfg),
        ], axis=-1)
        if spectra is None:
            spectra = [fft.forward2d(comm, mesh, field.owned_w[..., c], cfg) for c in range(2)]
        lap_w = np.stack([
            fft.real_inverse(comm, mesh, fft.apply_multiplier(s, lambda ku, kv: -(ku * ku + kv * kv)), cfg)
            for s in spectra
        ], axis=-1)
    else:
        raise ValueError(f"unknown method {method!r}")
    return 2.0 * params.atwood * (params.mu * lap_w - grad)


class ZModel:
    """Order dispatch for the interface derivatives of one rank."""

    def __init__(self, order: str, mesh: SurfaceMesh, physics: PhysicsParams, br_solver=None,
                 fft_cfg: FftCommConfig | None = None, bc: BoundaryCondition | None = None):
        if order not in ORDERS:
            raise ConfigError(f"unknown order {order!r}")
        if order in ("low", "medium") and mesh.bc != "periodic":
            raise ConfigError(f"{order}-order model supports only periodic boundaries")
        if order in ("medium", "high") and br_solver is None:
            raise ConfigError(f"{order}-order model needs a Birkhoff-Rott solver")
        self.order = order
        self.mesh = mesh
        self.physics = physics
        self.br_solver = br_solver
        self.fft_cfg = fft_cfg or FftCommConfig()
        self.bc = bc or BoundaryCondition(mesh)
        self.calls = 0

    def velocity(self, comm: Comm, field: SurfaceField, st=None, spectra=None) -> np.ndarray:
        st = st if st is not None else surface_stencils(field)
        if self.order == "low":
            return low_order_velocity(comm, self.mesh, st.normal, field.owned_w, self.fft_cfg, spectra)
        q = weighted_vorticity(st.du_z, st.dv_z, field.owned_w)
        gid = self.mesh.global_ids(field.rank)
        W = self.br_solver(comm, field.owned_z.reshape(-1, 3), q.reshape(-1, 3), gid)
        return W.reshape(field.owned_z.shape)

    def derivatives(self, comm: Comm, field: SurfaceField) -> tuple[np.ndarray, np.ndarray]:
        """(dz/dt, dw/dt) at owned nodes; ``field`` ghosts must be current."""
        self.calls += 1
        st = surface_stencils(field)
        spectra = None
        if self.order in ("low", "medium"):
            spectra = [fft.forward2d(comm, self.mesh, field.owned_w[..., c], self.fft_cfg) for c in range(2)]
        V = self.velocity(comm, field, st, spectra)
        method = "stencil" if self.order == "high" else "spectral"
        dw = vorticity_rhs(comm, field, V, self.physics, method, self.fft_cfg,
                           lap_w=st.lap_w, bc=self.bc, spectra=spectra)
        return V, dw
