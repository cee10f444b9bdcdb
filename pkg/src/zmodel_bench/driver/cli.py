"""``zmodel-bench`` command line: single runs and benchmark sweeps."""
from __future__ import annotations

import argparse
import json
import os
import sys

from ..mesh import ConfigError
from ..transport import RankError
from .bench import CASES, bench, rows_to_csv
from .config import multi_mode_deck, parse_rank_grid, single_mode_deck
from .rocket_rig import run

# flag name -> SimConfig field, for flags that map one-to-one
_RUN_FLAGS = {
    "nx": int, "ny": int, "order": str, "solver": str, "bc": str, "amplitude": float,
    "modes": int, "seed": int, "cutoff": float, "epsilon": float, "atwood": float,
    "gravity": float, "mu": float, "dt": float, "steps": int, "fft_config": int,
    "write_every": int, "report_every": int,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zmodel-bench", description="Z-Model interface mini-app")
    sub = ap.add_subparsers(dest="command", required=True)

    rp = sub.add_parser("run", help="run one deck")
    rp.add_argument("--ranks", default="1", help="rank grid PxQ, or a rank count")
    rp.add_argument("--ic", choices=("single_mode", "multi_mode"), default="multi_mode",
                    help="initial condition; also selects the base deck")
    for name, typ in _RUN_FLAGS.items():
        rp.add_argument("--" + name.replace("_", "-"), type=typ, default=None)
    rp.add_argument("--out", default=None, help="output directory")
    rp.add_argument("--backend", choices=("sequential", "threads"), default="sequential")
    rp.add_argument("--events", action="store_true", help="include the message event log in trace.json")
    rp.add_argument("--timeout", type=float, default=30.0)

    bp = sub.add_parser("bench", help="scaling sweep; CSV on stdout or --out")
    bp.add_argument("--case", action="append", choices=CASES, help="repeatable; default all")
    bp.add_argument("--ranks", default="1,4,16")
    bp.add_argument("--steps", type=int, default=2)
    bp.add_argument("--out", default=None, help="CSV path")
    return ap


def _deck_from_args(args):
    deck = single_mode_deck if args.ic == "single_mode" else multi_mode_deck
    overrides = {k: getattr(args, k) for k in _RUN_FLAGS if getattr(args, k) is not None}
    return deck(rank_grid=parse_rank_grid(args.ranks), out_dir=args.out, backend=args.backend,
                record_events=args.events, timeout=args.timeout, **overrides)


def _cmd_run(args) -> int:
    cfg = _deck_from_args(args)
    res = run(cfg)
    summary = {
        "status": "ok",
        "steps": cfg.steps,
        "ranks": cfg.ranks,
        "wall_time": res.wall_time,
        "max_abs_z3": res.metrics[-1]["max_abs_z3"],
        "patterns": res.trace_json()["patterns"],
    }
    if res.imbalance:
        summary["max_over_mean"] = res.imbalance[-1].ratio
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def _cmd_bench(args) -> int:
    ranks = [int(r) for r in args.ranks.split(",") if r.strip()]
    rows = bench(args.case or list(CASES), ranks, steps=args.steps,
                 progress=lambda r: print(f"{r.case} R={r.cfg.ranks} cfg={r.cfg.fft_config} "
                                          f"{r.status} {r.wall_time:.3f}s", file=sys.stderr))
    text = rows_to_csv(rows)
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if all(r.status == "pass" for r in rows) else 1


def error_report(exc: BaseException) -> dict:
    rep = {"status": "error", "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, RankError):
        rep.update(rank=exc.rank, step=exc.step, cause=type(exc.cause).__name__)
    return rep


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _cmd_run(args) if args.command == "run" else _cmd_bench(args)
    except (ConfigError, ValueError) as exc:
        print(json.dumps(error_report(exc)), file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps(error_report(exc)), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
