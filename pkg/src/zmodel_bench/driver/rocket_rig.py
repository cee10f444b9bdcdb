"""Rocket-rig problem: initial conditions, the time loop and imbalance reporting."""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ..brsolver import BRKernelParams, SpatialMesh, make_solver, migrate_to_spatial
from ..mesh import BoundaryCondition, SurfaceField, SurfaceMesh, gather_global
from ..timeint import TimeIntegrator
from ..transport import Comm, MergedTrace, spawn_ranks
from ..zmodel import ZModel
from .config import SimConfig
from .output import write_meta, write_output


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------

def mode_phases(seed: int, modes: int) -> np.ndarray:
    """Two phases per mode from a counter-based generator keyed by (seed, mode)."""
    out = np.empty((modes, 2))
    for k in range(modes):
        gen = np.random.Generator(np.random.Philox(key=np.array([seed, k + 1], dtype=np.uint64)))
        out[k] = gen.uniform(0.0, 2.0 * np.pi, size=2)
    return out


def perturbation(cfg: SimConfig, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    x0, x1, y0, y1, _, _ = cfg.box
    uh = 2.0 * (u - x0) / (x1 - x0) - 1.0
    vh = 2.0 * (v - y0) / (y1 - y0) - 1.0
    if cfg.ic == "single_mode":
        return np.cos(np.pi * uh) * np.cos(np.pi * vh)
    phases = mode_phases(cfg.seed, cfg.modes)
    p = np.zeros_like(uh)
    for k in range(1, cfg.modes + 1):
        phi, psi = phases[k - 1]
        p += np.cos(2.0 * np.pi * k * uh + phi) * np.cos(2.0 * np.pi * k * vh + psi)
    return p / cfg.modes


def init_rocket_rig(cfg: SimConfig, mesh: SurfaceMesh, rank: int) -> SurfaceField:
    """Perturbed sheet ``(u, v, amplitude * P(u, v))`` with zero vorticity."""
    u, v = mesh.coords(rank)
    z = np.stack([u, v, cfg.amplitude * perturbation(cfg, u, v)], axis=-1)
    return SurfaceField.from_owned(mesh, rank, z, np.zeros(u.shape + (2,)))


# ---------------------------------------------------------------------------
# imbalance
# ---------------------------------------------------------------------------

@dataclass
class ImbalanceReport:
    step: int
    counts: np.ndarray
    fractions: np.ndarray

    @property
    def min(self) -> float:
        return float(self.fractions.min())

    @property
    def max(self) -> float:
        return float(self.fractions.max())

    @property
    def mean(self) -> float:
        return float(self.fractions.mean())

    @property
    def ratio(self) -> float:
        """max / mean owned-point count; 1.0 is perfectly balanced."""
        return float(self.counts.max() / self.counts.mean())

    def as_dict(self) -> dict:
        return {"step": self.step, "fractions": self.fractions.tolist(), "min": self.min,
                "max": self.max, "mean": self.mean, "max_over_mean": self.ratio}


def imbalance_report(comm: Comm, field: SurfaceField, spatial: SpatialMesh, step: int = 0) -> ImbalanceReport:
    """Owned-point share of every rank after migrating the surface into the spatial mesh."""
    pos = field.owned_z.reshape(-1, 3)
    pts = migrate_to_spatial(comm, spatial, pos, np.zeros_like(pos), field.mesh.global_ids(field.rank))
    mine = np.zeros(comm.size)
    mine[comm.rank] = pts.n_owned
    counts = comm.all_reduce(mine, "sum", site="imbalance")
    return ImbalanceReport(step, counts, counts / counts.sum())


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    config: SimConfig
    z: np.ndarray
    w: np.ndarray
    trace: MergedTrace
    metrics: list[dict]
    imbalance: list[ImbalanceReport] = field(default_factory=list)
    derivative_calls: int = 0
    wall_time: float = 0.0

    def trace_json(self, events: bool = False) -> dict:
        return self.trace.to_json(run_id=_run_id(self.config), events=events)


# |z3| beyond this multiple of the box size means the sheet has diverged
RUNAWAY = 100.0


def _run_id(cfg: SimConfig) -> str:
    return hashlib.sha1(cfg.problem_json().encode()).hexdigest()[:12]


def build_model(cfg: SimConfig, mesh: SurfaceMesh, bc: BoundaryCondition) -> ZModel:
    solver = None
    if cfg.order in ("medium", "high"):
        params = BRKernelParams.for_mesh(mesh, cfg.epsilon)
        spatial = SpatialMesh(tuple(cfg.box), tuple(cfg.rank_grid), cfg.cutoff)
        solver = make_solver(cfg.solver, params, spatial, cfg.cutoff)
    return ZModel(cfg.order, mesh, cfg.physics, solver, cfg.fft_cfg, bc)


def _rank_body(cfg: SimConfig, initial):
    def body(comm: Comm):
        mesh = cfg.surface_mesh()
        bc = BoundaryCondition(mesh)
        if initial is None:
            fld = init_rocket_rig(cfg, mesh, comm.rank)
        else:
            (x0, x1), (y0, y1) = mesh.box(comm.rank)
            fld = SurfaceField.from_owned(mesh, comm.rank, initial[0][x0:x1, y0:y1], initial[1][x0:x1, y0:y1])
        model = build_model(cfg, mesh, bc)
        integ = TimeIntegrator(comm, model, bc)
        spatial = SpatialMesh(tuple(cfg.box), tuple(cfg.rank_grid), cfg.cutoff)
        metrics, reports = [], []

        def observe(step, wall):
            zmax = comm.all_reduce(np.abs(fld.owned_z[..., 2]).max(), "max", site="metrics")[0]
            if zmax > RUNAWAY * max(abs(b) for b in cfg.box):
                raise FloatingPointError(f"interface left the domain at step {step} (max |z3| = {zmax:.3g})")
            m = {"step": step, "t": step * cfg.dt, "max_abs_z3": float(zmax), "wall_time": wall}
            if cfg.report_every and step % cfg.report_every == 0:
                rep = imbalance_report(comm, fld, spatial, step)
                reports.append(rep)
                m["max_over_mean"] = rep.ratio
            if cfg.out_dir and cfg.write_every and step % cfg.write_every == 0:
                write_output(comm, mesh, fld, step, cfg.out_dir)
            metrics.append(m)

        comm.step = 0
        observe(0, 0.0)
        for step in range(1, cfg.steps + 1):
            comm.step = step
            t0 = time.perf_counter()
            fld = integ.step(fld, cfg.dt, step)
            observe(step, time.perf_counter() - t0)

        data = np.concatenate([fld.owned_z, fld.owned_w], axis=-1)
        full = gather_global(comm, mesh, data, root=0)
        return {"state": full, "metrics": metrics, "reports": reports, "calls": model.calls}

    return body


def run(cfg: SimConfig, initial: tuple[np.ndarray, np.ndarray] | None = None) -> RunResult:
    """Run the deck to completion; writes outputs when ``cfg.out_dir`` is set."""
    cfg.validate()
    if cfg.out_dir:
        write_meta(cfg.out_dir, cfg)
    t0 = time.perf_counter()
    results, trace = spawn_ranks(cfg.ranks, tuple(cfg.rank_grid), _rank_body(cfg, initial),
                                 backend=cfg.backend, timeout=cfg.timeout,
                                 record_events=cfg.record_events)
    wall = time.perf_counter() - t0
    root = results[0]
    state = root["state"]
    res = RunResult(cfg, state[..., :3], state[..., 3:], trace, root["metrics"], root["reports"],
                    sum(r["calls"] for r in results), wall)
    if cfg.out_dir:
        with open(os.path.join(cfg.out_dir, "trace.json"), "w") as fh:
            json.dump(res.trace_json(events=cfg.record_events), fh, indent=1, sort_keys=True)
        with open(os.path.join(cfg.out_dir, "metrics.json"), "w") as fh:
            json.dump({"run_id": _run_id(cfg), "steps": res.metrics,
                       "imbalance": [r.as_dict() for r in res.imbalance],
                       "wall_time": wall}, fh, indent=1, sort_keys=True)
    return res
