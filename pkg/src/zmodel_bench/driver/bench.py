"""Scaling benchmark cells and the FFT configuration sweep.

Each cell is one (deck, rank count, fft config) run.  Cells execute one
after another so timings do not compete; a failing cell is recorded with
its error and the sweep moves on.
"""
from __future__ import annotations

import csv
import io
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from ..transport import PATTERNS, factor_grid
from .config import SimConfig, multi_mode_deck, single_mode_deck
from .rocket_rig import run

CASES = ("low-weak", "low-strong", "high-weak", "high-strong", "fft-sweep")
WEAK_BASE = 32          # mesh points per rank-grid dimension for weak scaling
SWEEP_TOL = 1e-10


def case_decks(case: str, ranks: int, steps: int = 2) -> list[SimConfig]:
    """Decks for one cell row; fft-sweep yields one deck per configuration."""
    grid = factor_grid(ranks)
    if case == "low-weak":
        return [multi_mode_deck(nx=WEAK_BASE * grid[0], ny=WEAK_BASE * grid[1], rank_grid=grid, steps=steps)]
    if case == "low-strong":
        return [multi_mode_deck(rank_grid=grid, steps=steps)]
    if case == "high-weak":
        return [multi_mode_deck(nx=WEAK_BASE * grid[0], ny=WEAK_BASE * grid[1], rank_grid=grid,
                                order="high", solver="cutoff", cutoff=2.0, steps=steps)]
    if case == "high-strong":
        return [single_mode_deck(rank_grid=grid, steps=steps)]
    if case == "fft-sweep":
        n = max(8, 4 * max(grid))
        return [multi_mode_deck(nx=n, ny=n, rank_grid=grid, steps=steps, fft_config=c) for c in range(8)]
    raise ValueError(f"unknown bench case {case!r}")


@dataclass
class BenchRow:
    case: str
    cfg: SimConfig
    wall_time: float = float("nan")
    patterns: dict = field(default_factory=dict)
    a2a_peers: int = 0
    a2a_bytes_per_rank: int = 0
    status: str = "pass"
    error: str = ""
    state: np.ndarray | None = None

    def as_dict(self) -> dict:
        row = {"case": self.case, "nx": self.cfg.nx, "ny": self.cfg.ny, "ranks": self.cfg.ranks,
               "rank_grid": f"{self.cfg.rank_grid[0]}x{self.cfg.rank_grid[1]}",
               "order": self.cfg.order, "fft_config": self.cfg.fft_config, "steps": self.cfg.steps,
               "wall_time": self.wall_time}
        for p in PATTERNS:
            row[f"{p}_messages"] = self.patterns.get(p, {}).get("messages", 0)
            row[f"{p}_bytes"] = self.patterns.get(p, {}).get("bytes", 0)
        row["a2a_peers_max"] = self.a2a_peers
        row["a2a_bytes_per_rank_max"] = self.a2a_bytes_per_rank
        row["status"] = self.status
        row["error"] = self.error
        return row


def run_cell(case: str, cfg: SimConfig) -> BenchRow:
    row = BenchRow(case, cfg)
    t0 = time.perf_counter()
    try:
        res = run(cfg)
    except Exception as exc:  # recorded, sweep continues
        row.wall_time = time.perf_counter() - t0
        row.status = "fail"
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    row.wall_time = res.wall_time
    row.patterns = res.trace_json()["patterns"]
    a2a = [t.counters["all_to_all"] for t in res.trace.per_rank]
    row.a2a_peers = max(len(c.peers) for c in a2a)
    row.a2a_bytes_per_rank = max(c.bytes_sent for c in a2a)
    row.state = np.concatenate([res.z, res.w], axis=-1)
    return row


def _cross_check(rows: list[BenchRow]) -> None:
    """Mark sweep cells that disagree with configuration 0 of the same rank count."""
    by_ranks: dict[int, list[BenchRow]] = {}
    for r in rows:
        by_ranks.setdefault(r.cfg.ranks, []).append(r)
    for group in by_ranks.values():
        ok = [r for r in group if r.status == "pass"]
        if not ok:
            continue
        ref = ok[0].state
        scale = max(np.abs(ref).max(), 1.0)
        for r in ok[1:]:
            err = np.abs(r.state - ref).max() / scale
            if not err <= SWEEP_TOL:
                r.status = "fail"
                r.error = f"differs from fft config {ok[0].cfg.fft_config} by {err:.3e}"


def bench(cases, ranks, steps: int = 2, progress=None) -> list[BenchRow]:
    """Every case x rank count x config, in order."""
    rows = []
    for case in cases:
        case_rows = []
        for r in ranks:
            try:
                decks = case_decks(case, r, steps)
            except Exception as exc:
                row = BenchRow(case, SimConfig(rank_grid=factor_grid(r)), status="fail",
                               error="".join(traceback.format_exception_only(type(exc), exc)).strip())
                case_rows.append(row)
                continue
            for cfg in decks:
                row = run_cell(case, cfg)
                if progress:
                    progress(row)
                case_rows.append(row)
        if case == "fft-sweep":
            _cross_check(case_rows)
        rows.extend(case_rows)
    return rows


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    dicts = [r.as_dict() for r in rows]
    if not dicts:
        return ""
    writer = csv.DictWriter(buf, fieldnames=list(dicts[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(dicts)
    return buf.getvalue()
