import subprocess
import sys

import pytest

from jetles.cli import main
from jetles.io import read_grid, read_snapshots
from jetles.partition import read_manifest

RUN_CFG = """
mach = 1.4
gamma = 1.4
pr = 0.72
dt = 0.01
mesh = 10x6x9
npx = 2
npz = 2
steps = 4
snapshot_interval = 2
"""


def test_partition(tmp_path, capsys):
    out = tmp_path / "grid"
    assert main(["partition", "--mesh", "16x8x13", "--npx", "2", "--npz", "3", "--out", str(out)]) == 0
    pmap = read_manifest(out / "partition.map")
    assert (pmap.npx, pmap.npz) == (2, 3)
    assert len(list(out.glob("grid_*.jzg"))) == 6
    assert read_grid(out / "grid_00005.jzg", rank=5).global_dims == (16, 8, 13)
    assert "6 grid container" in capsys.readouterr().out


def test_partition_infeasible(tmp_path, capsys):
    code = main(["partition", "--mesh", "4x4x5", "--npx", "8", "--npz", "1", "--out", str(tmp_path)])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_bad_mesh_argument():
    with pytest.raises(SystemExit) as info:
        main(["partition", "--mesh", "16x8", "--npx", "1", "--npz", "1", "--out", "x"])
    assert info.value.code == 2


def test_run(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CFG)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "completed 4 iteration(s) on 4 rank(s)" in text
    assert "potential core" in text
    assert [s.iteration for s in read_snapshots(out / "solution_00000.jzs")] == [2, 4]


def test_run_from_grid_dir(tmp_path, capsys):
    grid = tmp_path / "grid"
    assert main(["partition", "--mesh", "10x6x9", "--npx", "2", "--npz", "1", "--out", str(grid)]) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CFG + f"grid_dir = {grid}\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
    assert "on 2 rank(s)" in capsys.readouterr().out


def test_run_bad_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CFG + "flux_capacitor = 1\n")
    assert main(["run", str(cfg)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_run_solver_fault_exit_code(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CFG.replace("dt = 0.01", "dt = 50") + "npx = 1\nnpz = 1\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "failed" in capsys.readouterr().err


def test_bench_strong(tmp_path, capsys):
    plan = tmp_path / "plan.txt"
    plan.write_text("steps = 4\nwall = 30\ntransport = threads\n"
                    "m1 8 6 9 1 1\nm1 8 6 9 2 1\nm1 8 6 9 2 2\n")
    out = tmp_path / "bench"
    assert main(["bench", "strong", "--plan", str(plan), "--out", str(out)]) == 0
    assert (out / "strong.csv").read_text().count("\n") == 3
    assert (out / "strong_m1.svg").exists()
    capsys.readouterr()


def test_bench_weak_requires_workload(tmp_path, capsys):
    plan = tmp_path / "plan.txt"
    plan.write_text("steps = 2\ntransport = threads\nm1 8 6 9 1 1\n")
    assert main(["bench", "weak", "--plan", str(plan), "--out", str(tmp_path / "b")]) == 1
    assert "workload" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "jetles", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("partition", "run", "bench"):
        assert cmd in res.stdout
