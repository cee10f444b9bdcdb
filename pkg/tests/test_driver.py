import json
import os

import numpy as np
import pytest

from zmodel_bench.driver import (SimConfig, imbalance_report, init_rocket_rig, multi_mode_deck,
                                 parse_rank_grid, run, single_mode_deck)
from zmodel_bench.driver.bench import bench, rows_to_csv
from zmodel_bench.driver.cli import main
from zmodel_bench.driver.output import HEADER, load_csv, step_path, write_csv
from zmodel_bench.brsolver import SpatialMesh
from zmodel_bench.mesh import ConfigError, SurfaceField, gather_global

from conftest import on_ranks


def initial_state(cfg):
    mesh = cfg.surface_mesh()

    def body(comm):
        f = init_rocket_rig(cfg, mesh, comm.rank)
        return gather_global(comm, mesh, np.concatenate([f.owned_z, f.owned_w], -1))
    res, _ = on_ranks(cfg.ranks, body, tuple(cfg.rank_grid))
    return res[0]


def test_zero_amplitude_is_flat():
    s = initial_state(multi_mode_deck(nx=16, ny=16, amplitude=0.0))
    assert not s[..., 2].any() and not s[..., 3:].any()


def test_single_mode_peak_at_centre():
    cfg = single_mode_deck(nx=17, ny=17, amplitude=0.05)
    s = initial_state(cfg)
    assert s[8, 8, 2] == pytest.approx(0.05, abs=1e-15)
    assert s[..., 2].max() == pytest.approx(0.05, abs=1e-15)
    assert s[8, 8, 0] == pytest.approx(0.0, abs=1e-15)


def test_multi_mode_initial_state_is_rank_count_invariant():
    a = initial_state(multi_mode_deck(nx=32, ny=32, seed=7))
    b = initial_state(multi_mode_deck(nx=32, ny=32, seed=7, rank_grid=(4, 2)))
    c = initial_state(multi_mode_deck(nx=32, ny=32, seed=8))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_zero_steps_returns_initial_state():
    cfg = multi_mode_deck(nx=16, ny=16, rank_grid=(2, 2), steps=0)
    r = run(cfg)
    s = initial_state(cfg)
    assert np.array_equal(r.z, s[..., :3]) and np.array_equal(r.w, s[..., 3:])


@pytest.mark.parametrize("bad", [
    dict(order="medium", bc="free"), dict(order="low", bc="free"),
    dict(order="high", solver="cutoff", cutoff=0.0), dict(order="bogus"), dict(solver="fmm"),
    dict(ic="triple"), dict(modes=0), dict(dt=0.0), dict(steps=-1), dict(fft_config=9),
    dict(atwood=0.0), dict(nx=24), dict(rank_grid=(0, 1)), dict(rank_grid=(32, 1), nx=16),
    dict(epsilon=-1.0), dict(backend="mpi"),
])
def test_validation_rejects(bad):
    cfg = multi_mode_deck(nx=16, ny=16).replace(**bad)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_rank_grid_parsing():
    assert parse_rank_grid("2x4") == (2, 4)
    assert parse_rank_grid("16") == (4, 4)


def test_csv_layout(tmp_path):
    z = np.zeros((2, 2, 3))
    z[..., 2] = 0.1
    path = tmp_path / "s.csv"
    write_csv(str(path), z, np.zeros((2, 2, 2)))
    lines = path.read_text().splitlines()
    assert lines[0] == HEADER
    assert len(lines) == 5
    assert [l.split(",")[:2] for l in lines[1:]] == [["0", "0"], ["0", "1"], ["1", "0"], ["1", "1"]]
    assert {l.split(",")[4] for l in lines[1:]} == {"0.10000000000000001"}


def test_outputs_are_rank_count_independent(tmp_path):
    base = dict(nx=32, ny=32, order="high", solver="cutoff", steps=3, write_every=1, dt=0.05)
    run(multi_mode_deck(rank_grid=(1, 1), out_dir=str(tmp_path / "r1"), **base))
    run(multi_mode_deck(rank_grid=(2, 2), out_dir=str(tmp_path / "r4"), **base))
    for s in range(4):
        a = open(step_path(str(tmp_path / "r1"), s)).read()
        b = open(step_path(str(tmp_path / "r4"), s)).read()
        assert a == b


def test_restart_from_csv(tmp_path):
    cfg = single_mode_deck(nx=16, ny=16, rank_grid=(2, 2), steps=3, write_every=1, out_dir=str(tmp_path))
    run(cfg)
    z, w = load_csv(step_path(str(tmp_path), 2))
    again = run(cfg.replace(steps=1, out_dir=None, write_every=0), initial=(z, w))
    z3, w3 = load_csv(step_path(str(tmp_path), 3))
    assert np.abs(again.z - z3).max() <= 1e-15
    assert np.abs(again.w - w3).max() <= 1e-15


def test_run_writes_trace_metrics_and_meta(tmp_path):
    cfg = multi_mode_deck(nx=16, ny=16, rank_grid=(2, 2), steps=2, out_dir=str(tmp_path),
                          record_events=True)
    run(cfg)
    trace = json.loads((tmp_path / "trace.json").read_text())
    assert set(trace) == {"run_id", "ranks", "patterns", "per_rank"}
    assert trace["ranks"] == 4 and len(trace["per_rank"]) == 4
    assert "events" in trace["per_rank"][0]
    assert trace["patterns"]["all_to_all"]["bytes"] > 0
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["deck"]["nx"] == 16 and meta["columns"] == HEADER.split(",")
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert [m["step"] for m in metrics["steps"]] == [0, 1, 2]


def test_flat_sheet_imbalance_is_exact():
    cfg = single_mode_deck(nx=16, ny=16, rank_grid=(4, 4), amplitude=0.0)
    mesh = cfg.surface_mesh()
    spatial = SpatialMesh(cfg.box, cfg.rank_grid, cfg.cutoff)

    def body(comm):
        return imbalance_report(comm, init_rocket_rig(cfg, mesh, comm.rank), spatial)
    res, tr = on_ranks(16, body, (4, 4))
    assert all((r.fractions == 1 / 16).all() for r in res)
    assert res[0].ratio == 1.0
    assert tr.messages("migrate") == 0


def test_divergence_is_reported_with_step():
    cfg = multi_mode_deck(nx=32, ny=32, amplitude=1.0, modes=2, dt=0.4, steps=60)
    with pytest.raises(Exception) as info:
        run(cfg)
    assert info.value.step > 0


# ---------------------------------------------------------------------------
# pattern contract on the deck examples
# ---------------------------------------------------------------------------

def test_multi_mode_low_order_pattern():
    tr = run(multi_mode_deck(rank_grid=(2, 2), steps=10)).trace
    assert tr.bytes("all_to_all") > 0 and tr.bytes("ring") == 0


def test_single_mode_high_order_pattern():
    tr = run(single_mode_deck(rank_grid=(2, 2), steps=10)).trace
    assert tr.bytes("migrate") + tr.bytes("halo") > 0 and tr.bytes("all_to_all") == 0


# ---------------------------------------------------------------------------
# bench and CLI
# ---------------------------------------------------------------------------

def test_bench_rows_and_tags():
    rows = bench(["low-strong", "fft-sweep"], [1, 4], steps=1)
    assert len(rows) == 2 * 1 + 2 * 8
    assert all(r.status == "pass" for r in rows)
    text = rows_to_csv(rows)
    assert text.splitlines()[0].endswith("status,error")
    assert len(text.splitlines()) == 1 + len(rows)


def test_fft_sweep_shapes():
    rows = bench(["fft-sweep"], [4], steps=1)
    sigs = {(r.cfg.fft_cfg.all_to_all, r.patterns["all_to_all"]["messages"]) for r in rows}
    assert len({m for _, m in sigs}) >= 2


def test_strong_scaling_bytes():
    # a single rank moves nothing, so the comparison starts at 4 ranks (see notes)
    r4, r16 = bench(["low-strong"], [4, 16], steps=1)
    t4, t16 = r4.patterns["all_to_all"]["bytes"], r16.patterns["all_to_all"]["bytes"]
    assert 0.5 < t16 / t4 < 2.0
    assert r16.a2a_bytes_per_rank < r4.a2a_bytes_per_rank


def test_weak_scaling_peer_count_grows():
    rows = bench(["low-weak"], [1, 4, 16], steps=1)
    peers = [r.a2a_peers for r in rows]
    assert peers[0] < peers[1] < peers[2]


def test_bench_records_failures_and_continues(monkeypatch):
    from zmodel_bench.driver import bench as bench_mod
    real = bench_mod.run

    def flaky(cfg):
        if cfg.ranks == 4:
            raise RuntimeError("injected")
        return real(cfg)
    monkeypatch.setattr(bench_mod, "run", flaky)
    rows = bench(["low-strong"], [1, 4], steps=1)
    assert [r.status for r in rows] == ["pass", "fail"]
    assert "injected" in rows[1].error


def test_cli_run(tmp_path, capsys):
    code = main(["run", "--nx", "16", "--ny", "16", "--ranks", "2x2", "--steps", "2",
                 "--out", str(tmp_path), "--write-every", "2"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "ok" and out["ranks"] == 4
    assert os.path.exists(step_path(str(tmp_path), 2))


def test_cli_error_report(capsys):
    code = main(["run", "--order", "medium", "--bc", "free"])
    assert code != 0
    err = json.loads(capsys.readouterr().err)
    assert err["status"] == "error" and err["error"] == "ConfigError"


def test_cli_runtime_error_carries_rank_and_step(capsys):
    code = main(["run", "--nx", "32", "--ny", "32", "--amplitude", "1.0", "--modes", "2",
                 "--dt", "0.4", "--steps", "60"])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["rank"] == 0 and err["step"] > 0


def test_cli_bench(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--case", "fft-sweep", "--ranks", "1,4", "--steps", "1", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 16
