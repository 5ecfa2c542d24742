"""End-to-end tests for the command-line interface."""

import os
import subprocess
import sys

import pytest

PKG_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "irdec", *args],
                          capture_output=True, text=True, cwd=cwd or PKG_DIR)


TINY = ["run.total_steps=300", "run.eval_period=150", "run.eval_episodes=2",
        "run.start_steps=50", "agent.batch_size=32", "agent.hidden=8,8",
        "regularizer.kde_max_ref=50"]


def tiny_overrides(out_dir, demo_path, **extra):
    pairs = {"run.out_dir": str(out_dir), "run.demo_path": str(demo_path)}
    pairs.update(extra)
    args = []
    for line in TINY + [f"{k}={v}" for k, v in pairs.items()]:
        args += ["--set", line]
    return args


@pytest.fixture(scope="module")
def demo_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("demos") / "maze.demos"
    res = run_cli("gen-demos", "point_maze", "--count", "5",
                  "--seed", "3", "--out", str(path))
    assert res.returncode == 0, res.stderr
    return path


class TestBasics:
    def test_help_exits_zero(self):
        for sub in ("gen-demos", "train", "eval", "explored"):
            res = run_cli(sub, "--help")
            assert res.returncode == 0
            assert sub in res.stdout

    def test_no_subcommand_exits_two(self):
        assert run_cli().returncode == 2

    def test_unknown_flag_exits_two(self):
        res = run_cli("train", "--no-such-flag")
        assert res.returncode == 2

    def test_bad_config_key_exits_two(self, tmp_path):
        res = run_cli("train", "--set", "agent.nonexistent=1",
                      "--set", f"run.out_dir={tmp_path}")
        assert res.returncode == 2
        assert "nonexistent" in res.stderr

    def test_eval_missing_checkpoint_exits_one(self, tmp_path):
        res = run_cli("eval", str(tmp_path / "missing"))
        assert res.returncode == 1


class TestGenDemos:
    def test_writes_requested_count(self, demo_file):
        lines = demo_file.read_text().splitlines()
        assert "trajectories 5" in lines
        assert sum(ln.startswith("traj ") for ln in lines) == 5

    def test_same_seed_same_file(self, tmp_path):
        paths = [tmp_path / "a.demos", tmp_path / "b.demos"]
        for p in paths:
            res = run_cli("gen-demos", "line_gripper", "--count", "3",
                          "--seed", "7", "--out", str(p))
            assert res.returncode == 0, res.stderr
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestPipeline:
    def test_train_eval_explored_roundtrip(self, tmp_path, demo_file):
        out = tmp_path / "run"
        res = run_cli("train", "--seed", "1",
                      *tiny_overrides(out, demo_file))
        assert res.returncode == 0, res.stderr
        metrics = out / "metrics.csv"
        assert metrics.exists()
        assert "# ablation irdec" in metrics.read_text()

        ckpt = out / "checkpoint"
        res = run_cli("eval", str(ckpt), "--episodes", "3",
                      "--seed", "0")
        assert res.returncode == 0, res.stderr
        assert "success_rate" in res.stdout

        explored = tmp_path / "explored.txt"
        res = run_cli("explored", str(ckpt),
                      "--points", "40", "--seed", "0",
                      "--out", str(explored))
        assert res.returncode == 0, res.stderr
        rows = [ln for ln in explored.read_text().splitlines()
                if ln and not ln.startswith("#")]
        assert len(rows) == 40
        assert all(len(row.split()) == 2 for row in rows)

    def test_ablation_flags_set_header(self, tmp_path, demo_file):
        out = tmp_path / "run"
        res = run_cli("train", "--seed", "1", "--disable-intrinsic",
                      "--disable-classifier", "--disable-regularizer",
                      *tiny_overrides(out, demo_file, **{
                          "run.total_steps": "150"}))
        assert res.returncode == 0, res.stderr
        assert "# ablation sac_bc" in (out / "metrics.csv").read_text()

    def test_config_file_drives_train(self, tmp_path, demo_file):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "[run]\n"
            "total_steps = 150\n"
            "eval_period = 0\n"
            "start_steps = 50\n"
            f"out_dir = {tmp_path / 'run'}\n"
            f"demo_path = {demo_file}\n"
            "[agent]\n"
            "batch_size = 32\n"
            "hidden = 8,8\n"
            "[regularizer]\n"
            "kde_max_ref = 50\n")
        res = run_cli("train", "--config", str(cfg), "--seed", "2")
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "run" / "metrics.csv").exists()
