"""Problem decks for the rocket-rig driver."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from ..fft import FftCommConfig
from ..mesh import BC_TYPES, ConfigError, SurfaceMesh
from ..transport import factor_grid
from ..zmodel import ORDERS, PhysicsParams

IC_TYPES = ("single_mode", "multi_mode")
# fields that change where or how a run is recorded, never its results
RUNTIME_FIELDS = ("out_dir", "backend", "record_events", "timeout")
SOLVERS = ("exact", "cutoff")


@dataclass
class SimConfig:
    nx: int = 64
    ny: int = 64
    rank_grid: tuple[int, int] = (1, 1)
    order: str = "low"
    solver: str = "cutoff"
    bc: str = "periodic"
    ic: str = "multi_mode"
    amplitude: float = 0.5
    modes: int = 4
    seed: int = 0
    box: tuple[float, float, float, float, float, float] = (-19.0, 19.0, -19.0, 19.0, -19.0, 19.0)
    cutoff: float = 0.5
    epsilon: float | None = None
    atwood: float = 0.5
    gravity: float = 1.0
    mu: float = 0.0
    dt: float = 0.1
    steps: int = 10
    fft_config: int = 0
    out_dir: str | None = None
    write_every: int = 0
    report_every: int = 0
    backend: str = "sequential"
    record_events: bool = False
    timeout: float = 30.0
    extra: dict = field(default_factory=dict)

    @property
    def ranks(self) -> int:
        return self.rank_grid[0] * self.rank_grid[1]

    @property
    def fft_cfg(self) -> FftCommConfig:
        return FftCommConfig.from_index(self.fft_config)

    @property
    def physics(self) -> PhysicsParams:
        return PhysicsParams(self.atwood, self.gravity, self.mu)

    def surface_mesh(self) -> SurfaceMesh:
        x0, x1, y0, y1, _, _ = self.box
        return SurfaceMesh((self.nx, self.ny), (x0, x1, y0, y1), tuple(self.rank_grid), self.bc)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rank_grid"] = list(self.rank_grid)
        d["box"] = list(self.box)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def problem_json(self) -> str:
        """Deck JSON without the runtime-only fields; identifies the computed result."""
        d = {k: v for k, v in self.to_dict().items() if k not in RUNTIME_FIELDS}
        return json.dumps(d, sort_keys=True)

    def validate(self) -> "SimConfig":
        """Reject every inconsistent deck before any rank is spawned."""
        if self.order not in ORDERS:
            raise ConfigError(f"unknown order {self.order!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.bc not in BC_TYPES:
            raise ConfigError(f"unknown boundary condition {self.bc!r}")
        if self.ic not in IC_TYPES:
            raise ConfigError(f"unknown initial condition {self.ic!r}")
        if self.order in ("low", "medium") and self.bc != "periodic":
            raise ConfigError(f"{self.order}-order runs need periodic boundaries")
        if self.order in ("medium", "high") and self.solver == "cutoff" and not self.cutoff > 0:
            raise ConfigError("cutoff solver needs a positive cutoff")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.modes < 1:
            raise ConfigError("modes must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.steps < 0 or self.write_every < 0 or self.report_every < 0:
            raise ConfigError("steps, write interval and report interval must be non-negative")
        if len(self.rank_grid) != 2 or min(self.rank_grid) < 1:
            raise ConfigError(f"bad rank grid {self.rank_grid}")
        if self.backend not in ("threads", "sequential"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        self.fft_cfg  # range check
        self.physics  # value checks
        if self.order in ("low", "medium"):
            for n in (self.nx, self.ny):
                if n & (n - 1):
                    raise ConfigError(f"FFT-based orders need power-of-two mesh sizes, got {self.nx}x{self.ny}")
        self.surface_mesh()  # decomposition checks
        return self


def parse_rank_grid(text: str) -> tuple[int, int]:
    """``"4"`` or ``"2x2"`` -> (Px, Py)."""
    text = str(text).lower().strip()
    if "x" in text:
        a, b = text.split("x")
        return int(a), int(b)
    return factor_grid(int(text))


def multi_mode_deck(**overrides) -> SimConfig:
    """Periodic multi-mode deck (low-order FFT case), 64x64 in a (-19, 19)^3 box."""
    base = SimConfig(nx=64, ny=64, order="low", solver="cutoff", bc="periodic", ic="multi_mode",
                     amplitude=0.5, modes=4, box=(-19.0, 19.0, -19.0, 19.0, -19.0, 19.0),
                     cutoff=0.5, dt=0.1)
    return base.replace(**overrides)


def single_mode_deck(**overrides) -> SimConfig:
    """Free-boundary single-mode deck (high-order cutoff case), 64x64 in a (-3, 3)^3 box."""
    base = SimConfig(nx=64, ny=64, order="high", solver="cutoff", bc="free", ic="single_mode",
                     amplitude=0.5, modes=1, box=(-3.0, 3.0, -3.0, 3.0, -3.0, 3.0),
                     cutoff=0.5, gravity=4.0, mu=0.03, dt=0.05)
    return base.replace(**overrides)
