"""In-process message passing between simulated ranks.

Every rank runs its body in its own thread and talks to the others only
through collective calls on a :class:`Comm`: ``exchange``, ``ring_shift``,
``all_reduce`` and ``barrier``.  Payloads are copied on delivery, so rank
bodies never share mutable state.  All traffic is counted per pattern class
in a :class:`CommTrace`.

Two schedulers are available.  ``threads`` lets the rank threads run freely
between collectives.  ``sequential`` hands a single execution token from rank
to rank in round-robin order at every communication point, so exactly one
rank body is running at any time.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

PATTERNS = ("halo", "all_to_all", "ring", "migrate", "reduce", "point_to_point")
REDUCE_OPS = {"sum": np.add, "max": np.maximum, "min": np.minimum}

DEFAULT_TIMEOUT = 30.0


class TransportError(RuntimeError):
    """Base class for failures raised by the transport."""


class CollectiveMismatch(TransportError):
    """Ranks disagreed on which collective they were calling."""


class DeadlockError(TransportError):
    """Ranks waited longer than the timeout for a collective to complete."""


class RankAborted(TransportError):
    """Raised inside surviving ranks after another rank failed."""


class RankError(TransportError):
    """A rank body raised; carries the failing rank and its current step."""

    def __init__(self, rank: int, step: int, cause: BaseException):
        self.rank = rank
        self.step = step
        self.cause = cause
        super().__init__(f"rank {rank} failed at step {step}: {type(cause).__name__}: {cause}")


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

@dataclass
class PatternCounter:
    messages_sent: int = 0
    bytes_sent: int = 0
    messages_received: int = 0
    bytes_received: int = 0
    calls: int = 0
    peers: set = field(default_factory=set)

    def as_dict(self) -> dict:
        return {
            "messages": self.messages_sent,
            "bytes": self.bytes_sent,
            "messages_received": self.messages_received,
            "bytes_received": self.bytes_received,
            "calls": self.calls,
            "peers": len(self.peers),
        }


class CommTrace:
    """Per-rank communication counters, optionally with a full event log."""

    def __init__(self, rank: int = 0, record_events: bool = False):
        self.rank = rank
        self.record_events = record_events
        self.counters = {p: PatternCounter() for p in PATTERNS}
        self.events: list[tuple[int, str, int, int]] = []
        self.step = 0

    def record_send(self, pattern: str, peer: int, nbytes: int) -> None:
        c = self.counters[pattern]
        c.messages_sent += 1
        c.bytes_sent += nbytes
        c.peers.add(peer)
        if self.record_events:
            self.events.append((self.step, pattern, peer, nbytes))

    def record_recv(self, pattern: str, nbytes: int) -> None:
        c = self.counters[pattern]
        c.messages_received += 1
        c.bytes_received += nbytes

    def messages(self, pattern: str) -> int:
        return self.counters[pattern].messages_sent

    def bytes(self, pattern: str) -> int:
        return self.counters[pattern].bytes_sent

    def snapshot(self) -> dict[str, tuple[int, int, int]]:
        """Cheap copy of (messages, bytes, calls) per pattern, for deltas."""
        return {p: (c.messages_sent, c.bytes_sent, c.calls) for p, c in self.counters.items()}

    def as_dict(self) -> dict:
        d = {"rank": self.rank, "patterns": {p: c.as_dict() for p, c in self.counters.items()}}
        if self.record_events:
            d["events"] = [list(e) for e in self.events]
        return d


@dataclass
class MergedTrace:
    """Counters summed over all ranks plus the per-rank traces."""

    ranks: int
    per_rank: list[CommTrace]

    def total(self, pattern: str, key: str = "bytes_sent") -> int:
        return sum(getattr(t.counters[pattern], key) for t in self.per_rank)

    def messages(self, pattern: str) -> int:
        return self.total(pattern, "messages_sent")

    def bytes(self, pattern: str) -> int:
        return self.total(pattern, "bytes_sent")

    def signature(self) -> tuple:
        return tuple((p, self.messages(p), self.bytes(p)) for p in PATTERNS)

    def to_json(self, run_id: str | None = None, events: bool = False) -> dict:
        patterns = {
            p: {
                "messages": self.messages(p),
                "bytes": self.bytes(p),
                "messages_received": self.total(p, "messages_received"),
                "bytes_received": self.total(p, "bytes_received"),
            }
            for p in PATTERNS
        }
        per_rank = []
        for t in self.per_rank:
            d = t.as_dict()
            if not events:
                d.pop("events", None)
            per_rank.append(d)
        doc = {"run_id": run_id, "ranks": self.ranks, "patterns": patterns, "per_rank": per_rank}
        if doc["run_id"] is None:
            blob = json.dumps({k: v for k, v in doc.items() if k != "run_id"}, sort_keys=True)
            doc["run_id"] = hashlib.sha1(blob.encode()).hexdigest()[:12]
        return doc


# ---------------------------------------------------------------------------
# payload helpers
# ---------------------------------------------------------------------------

def payload_nbytes(payload: Any) -> int:
    if payload is None:
        return 0
    if isinstance(payload, (bytes, bytearray, memoryview)):
        return len(payload)
    if isinstance(payload, str):
        return len(payload.encode())
    if isinstance(payload, np.ndarray):
        return payload.nbytes
    if isinstance(payload, (bool, int, float, complex, np.generic)):
        return np.asarray(payload).nbytes
    if isinstance(payload, (tuple, list)):
        return sum(payload_nbytes(p) for p in payload)
    raise TypeError(f"unsupported payload type {type(payload).__name__}")


def _copy_payload(payload: Any) -> Any:
    if payload is None or isinstance(payload, (bytes, str, bool, int, float, complex, np.generic)):
        return payload
    if isinstance(payload, (bytearray, memoryview)):
        return bytes(payload)
    if isinstance(payload, np.ndarray):
        return payload.copy()
    if isinstance(payload, tuple):
        return tuple(_copy_payload(p) for p in payload)
    if isinstance(payload, list):
        return [_copy_payload(p) for p in payload]
    raise TypeError(f"unsupported payload type {type(payload).__name__}")


# ---------------------------------------------------------------------------
# rendezvous hub
# ---------------------------------------------------------------------------

class _Round:
    __slots__ = ("kind", "pattern", "contrib", "results", "done", "taken", "sites")

    def __init__(self, kind: str, pattern: str):
        self.kind = kind
        self.pattern = pattern
        self.contrib: dict[int, Any] = {}
        self.results: list[Any] | None = None
        self.done = False
        self.taken = 0
        self.sites: dict[int, str] = {}


class _Hub:
    def __init__(self, size: int, timeout: float, sequential: bool):
        self.size = size
        self.timeout = timeout
        self.sequential = sequential
        self.cond = threading.Condition()
        self.rounds: dict[int, _Round] = {}
        self.seq = [0] * size
        self.pending = ["running"] * size
        self.finished = [False] * size
        self.error: BaseException | None = None
        self.turn = 0

    # -- token passing (sequential scheduler) -------------------------------
    def _pass_turn(self, rank: int) -> None:
        for k in range(1, self.size + 1):
            nxt = (rank + k) % self.size
            if not self.finished[nxt]:
                self.turn = nxt
                return
        self.turn = -1

    def wait_turn(self, rank: int) -> None:
        if not self.sequential:
            return
        with self.cond:
            while self.turn != rank and self.error is None:
                self.cond.wait(0.5)
            self._check_error()

    def finish(self, rank: int) -> None:
        with self.cond:
            self.finished[rank] = True
            self.pending[rank] = "finished"
            if self.sequential and self.turn == rank:
                self._pass_turn(rank)
            self.cond.notify_all()

    def fail(self, rank: int, exc: BaseException) -> None:
        with self.cond:
            if self.error is None:
                self.error = exc
            self.finished[rank] = True
            self.pending[rank] = f"failed: {type(exc).__name__}"
            self.cond.notify_all()

    def _check_error(self) -> None:
        if self.error is not None:
            raise RankAborted(f"aborted because another rank failed: {self.error}")

    def _diagnostic(self) -> str:
        return "; ".join(f"rank {r}: {self.pending[r]}" for r in range(self.size))

    def _raise(self, exc: BaseException) -> None:
        if self.error is None:
            self.error = exc
        self.cond.notify_all()
        raise exc

    # -- the one collective primitive ---------------------------------------
    def collective(self, rank: int, kind: str, pattern: str, contribution: Any,
                   combine: Callable[[dict[int, Any]], list[Any]], site: str) -> Any:
        with self.cond:
            self._check_error()
            seq = self.seq[rank]
            self.seq[rank] += 1
            rnd = self.rounds.get(seq)
            if rnd is None:
                rnd = self.rounds[seq] = _Round(kind, pattern)
            rnd.sites[rank] = site
            if rnd.kind != kind or rnd.pattern != pattern:
                calls = ", ".join(f"rank {r}: {s}" for r, s in sorted(rnd.sites.items()))
                self._raise(CollectiveMismatch(
                    f"collective #{seq} mismatch: rank {rank} called {kind}({pattern}) "
                    f"but round was opened as {rnd.kind}({rnd.pattern}); call sites: {calls}"))
            rnd.contrib[rank] = contribution
            self.pending[rank] = f"{kind}({pattern}) #{seq} at {site}"
            if len(rnd.contrib) == self.size:
                try:
                    rnd.results = combine(rnd.contrib)
                except BaseException as exc:  # noqa: BLE001 - surfaced to every rank
                    self._raise(exc)
                rnd.done = True
                self.cond.notify_all()
            elif self.sequential and self.turn == rank:
                self._pass_turn(rank)
                self.cond.notify_all()

            deadline = time.monotonic() + self.timeout
            while True:
                self._check_error()
                ready = rnd.done and (not self.sequential or self.turn == rank)
                if ready:
                    break
                if not rnd.done:
                    missing = [r for r in range(self.size) if r not in rnd.contrib]
                    gone = [r for r in missing if self.finished[r]]
                    if gone:
                        self._raise(CollectiveMismatch(
                            f"collective #{seq} {kind}({pattern}) can never complete: ranks {gone} "
                            f"exited without calling it; {self._diagnostic()}"))
                    if self.sequential and self.turn == rank:
                        self._pass_turn(rank)
                        self.cond.notify_all()
                if time.monotonic() > deadline:
                    self._raise(DeadlockError(
                        f"no progress for {self.timeout:.1f}s in collective #{seq} "
                        f"{kind}({pattern}); {self._diagnostic()}"))
                self.cond.wait(min(0.5, self.timeout))

            result = rnd.results[rank]
            rnd.taken += 1
            if rnd.taken == self.size:
                del self.rounds[seq]
            self.pending[rank] = "running"
            return result


# ---------------------------------------------------------------------------
# per-rank communicator
# ---------------------------------------------------------------------------

class Comm:
    """A rank's handle on the group.  All methods are collective."""

    def __init__(self, hub: _Hub, rank: int, grid_shape: tuple[int, int], trace: CommTrace):
        self._hub = hub
        self.rank = rank
        self.size = hub.size
        self.grid_shape = grid_shape
        self.trace = trace

    @property
    def step(self) -> int:
        return self.trace.step

    @step.setter
    def step(self, value: int) -> None:
        self.trace.step = value

    @property
    def grid_coords(self) -> tuple[int, int]:
        return divmod(self.rank, self.grid_shape[1])

    def grid_rank(self, i: int, j: int) -> int:
        return i * self.grid_shape[1] + j

    def exchange(self, sends: Sequence[tuple[int, Any]], pattern: str,
                 site: str = "exchange") -> list[tuple[int, Any]]:
        """Deliver each ``(dest, payload)`` and return what this rank received.

        Received messages are ordered by source rank, then by send order.
        Self-sends are delivered locally and count as zero bytes.
        """
        if pattern not in PATTERNS:
            raise ValueError(f"unknown pattern class {pattern!r}")
        out = []
        for dest, payload in sends:
            if not 0 <= dest < self.size:
                raise ValueError(f"rank {self.rank}: destination {dest} out of range")
            nbytes = payload_nbytes(payload)
            if dest != self.rank:
                self.trace.record_send(pattern, dest, nbytes)
            out.append((dest, _copy_payload(payload)))
        self.trace.counters[pattern].calls += 1

        size = self.size

        def combine(contrib):
            inbox = [[] for _ in range(size)]
            for src in range(size):
                for dest, payload in contrib[src]:
                    inbox[dest].append((src, payload))
            return inbox

        received = self._hub.collective(self.rank, "exchange", pattern, out, combine, site)
        for src, payload in received:
            if src != self.rank:
                self.trace.record_recv(pattern, payload_nbytes(payload))
        return received

    def ring_shift(self, payload: Any, direction: int = 1, site: str = "ring_shift") -> Any:
        """Send to ``rank + direction`` and return the payload from ``rank - direction``."""
        if direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        dest = (self.rank + direction) % self.size
        received = self.exchange([(dest, payload)], "ring", site=site)
        (src, data), = received
        return data

    def all_reduce(self, value, op: str = "sum", site: str = "all_reduce") -> np.ndarray:
        """Elementwise reduction visible on every rank.

        Traced as a gather to rank 0 followed by a broadcast.
        """
        if op not in REDUCE_OPS:
            raise ValueError(f"unknown reduce op {op!r}")
        arr = np.atleast_1d(np.asarray(value)).copy()
        nbytes = arr.nbytes
        if self.rank != 0:
            self.trace.record_send("reduce", 0, nbytes)
            self.trace.record_recv("reduce", nbytes)
        else:
            for r in range(1, self.size):
                self.trace.record_send("reduce", r, nbytes)
                self.trace.record_recv("reduce", nbytes)
        self.trace.counters["reduce"].calls += 1
        size = self.size
        ufunc = REDUCE_OPS[op]

        def combine(contrib):
            shapes = {r: contrib[r][1].shape for r in contrib}
            ops = {contrib[r][0] for r in contrib}
            if len(set(shapes.values())) != 1:
                raise CollectiveMismatch(f"all_reduce length mismatch: {shapes}")
            if len(ops) != 1:
                raise CollectiveMismatch(f"all_reduce op mismatch: {ops}")
            acc = contrib[0][1].copy()
            for r in range(1, size):
                acc = ufunc(acc, contrib[r][1])
            return [acc.copy() for _ in range(size)]

        return self._hub.collective(self.rank, "all_reduce", "reduce", (op, arr), combine, site)

    def barrier(self) -> None:
        self.all_reduce(np.zeros(0), "sum", site="barrier")


# ---------------------------------------------------------------------------
# launcher
# ---------------------------------------------------------------------------

def factor_grid(rank_count: int) -> tuple[int, int]:
    """Most nearly square (Px, Py) with Px >= Py and Px * Py == rank_count."""
    best = (rank_count, 1)
    for py in range(1, int(rank_count ** 0.5) + 1):
        if rank_count % py == 0:
            best = (rank_count // py, py)
    return best


def spawn_ranks(rank_count: int, grid_shape: tuple[int, int] | None, body: Callable[[Comm], Any],
                *, backend: str = "sequential", timeout: float = DEFAULT_TIMEOUT,
                record_events: bool = False) -> tuple[list[Any], MergedTrace]:
    """Run ``body(comm)`` on ``rank_count`` ranks and join.

    Returns the per-rank return values and the merged trace.  If any rank
    raises, the other ranks are aborted and a :class:`RankError` for the
    lowest failing rank is raised.
    """
    if grid_shape is None:
        grid_shape = factor_grid(rank_count)
    grid_shape = tuple(int(g) for g in grid_shape)
    if rank_count < 1 or len(grid_shape) != 2 or min(grid_shape) < 1 \
            or grid_shape[0] * grid_shape[1] != rank_count:
        raise ValueError(f"grid {grid_shape} does not factor rank count {rank_count}")
    if backend not in ("threads", "sequential"):
        raise ValueError(f"unknown backend {backend!r}")

    hub = _Hub(rank_count, timeout, sequential=backend == "sequential")
    traces = [CommTrace(r, record_events) for r in range(rank_count)]
    results: list[Any] = [None] * rank_count
    errors: dict[int, BaseException] = {}

    def target(rank: int) -> None:
        comm = Comm(hub, rank, grid_shape, traces[rank])
        try:
            hub.wait_turn(rank)
            results[rank] = body(comm)
        except BaseException as exc:  # noqa: BLE001 - reported after join
            errors[rank] = exc
            hub.fail(rank, exc)
        else:
            hub.finish(rank)

    if rank_count == 1:
        target(0)
    else:
        threads = [threading.Thread(target=target, args=(r,), name=f"rank-{r}", daemon=True)
                   for r in range(rank_count)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    if errors:
        primary = [r for r in sorted(errors) if not isinstance(errors[r], RankAborted)]
        r = primary[0] if primary else min(errors)
        raise RankError(r, traces[r].step, errors[r]) from errors[r]
    return results, MergedTrace(rank_count, traces)
