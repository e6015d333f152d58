import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from predictron import cli
from predictron.io import read_manifest, read_metrics, read_samples

TINY = ["--set", "steps=4", "--set", "eval_every=2", "--set", "batch_size=4", "--set", "eval_size=8",
        "--set", "norm_samples=32", "--set", "maze_size=5", "--set", "K=2", "--set", "channels=4",
        "--set", "hidden=8"]
POOL = ["--set", "domain=pool", "--set", "pool_size=8", "--set", "pool_episodes=12",
        "--set", "decision_positions=1", "--set", "decision_angles=4", "--set", "decision_speeds=1"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def maze_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    assert run("train", "--out-dir", out, "--seed", 0, *TINY) == 0
    return out / "run_seed0"


def test_gen_data(tmp_path, capsys):
    assert run("gen-data", "--out-dir", tmp_path, "--n", 5, "--seed", 3, *TINY) == 0
    s = read_samples(tmp_path / "maze2_seed3.bin")
    assert s.planes.shape == (5, 1, 5, 5) and s.targets.shape == (5, 5)
    m = read_manifest(tmp_path / "maze2_seed3.txt")["dataset"]
    assert m["count"] == "5" and m["task_id"] == "2"


def test_train_writes_run(maze_run, capsys):
    assert len(read_metrics(maze_run / "metrics.csv")) == 2
    assert (maze_run / "checkpoint.bin").exists()


def test_eval_exit_codes(maze_run, capsys):
    assert run("eval", "--run-dir", maze_run) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["rmse"] >= 0 and report["zero_predictor_rmse"] > 0
    assert run("eval", "--run-dir", maze_run, "--assert", "--max-rmse", 0.0) == 3
    assert run("eval", "--run-dir", maze_run, "--assert", "--max-rmse", 1e9) == 0


def test_train_from_manifest_reproduces(maze_run, tmp_path, capsys):
    assert run("train", "--from-manifest", maze_run / "manifest.txt", "--out-dir", tmp_path) == 0
    assert (tmp_path / "run_seed0" / "metrics.csv").read_bytes() == (maze_run / "metrics.csv").read_bytes()


def test_config_errors_exit_1(tmp_path, capsys):
    assert run("train", "--set", "use_lambda=maybe") == 1
    assert "use_lambda" in capsys.readouterr().err
    cfg = tmp_path / "c.txt"
    cfg.write_text("steps=3\nbogus=1\n")
    assert run("train", "--config", cfg) == 1
    assert ":2:" in capsys.readouterr().err
    assert run("train", "--config", tmp_path / "missing.txt") == 1


def test_runtime_errors_exit_2(tmp_path, capsys):
    assert run("eval", "--run-dir", tmp_path / "nothing") == 2
    assert run("depth-analysis", "--run-dir", tmp_path / "nothing") == 2


def test_wrong_domain_commands(maze_run, capsys):
    assert run("depth-analysis", "--run-dir", maze_run) == 2
    assert run("decide", "--run-dir", maze_run) == 2
    assert run("plan-dump", "--run-dir", maze_run) == 2


def test_plot_emits_parseable_svg(maze_run, tmp_path, capsys):
    out = tmp_path / "c.svg"
    assert run("plot", maze_run, "--output", out, "--logy") == 0
    assert ET.parse(out).getroot().tag.endswith("svg")


def test_semi_sup_and_cube(tmp_path, capsys):
    assert run("semi-sup", "--out-dir", tmp_path / "s", "--seed", 0, *TINY) == 0
    summary = json.loads((tmp_path / "s" / "summary.json").read_text())
    assert sorted(summary) == ["run-c0", "run-c1", "run-c9"]
    ET.parse(tmp_path / "s" / "curves.svg")
    assert run("cube", "--kind", "architecture", "--out-dir", tmp_path / "a", "--seed", 0, *TINY) == 0
    assert len(json.loads((tmp_path / "a" / "summary.json").read_text())) == 8


def test_depth_sweep_and_capacity(tmp_path, capsys):
    assert run("depth-sweep", "--depths", "1,2", "--out-dir", tmp_path / "d", "--seed", 0, *TINY) == 0
    assert len(json.loads((tmp_path / "d" / "summary.json").read_text())) == 8
    assert run("capacity-sweep", "--out-dir", tmp_path / "c", "--seed", 0, *TINY,
               "--set", "steps=2", "--set", "eval_every=2") == 0
    summary = json.loads((tmp_path / "c" / "summary.json").read_text())
    assert len(summary) == 5


def test_plan_dump(tmp_path, capsys):
    assert run("train", "--out-dir", tmp_path, "--seed", 0, *TINY, "--set", "domain=maze1") == 0
    assert run("plan-dump", "--run-dir", tmp_path / "run_seed0", "--n", 2) == 0
    plans = np.load(tmp_path / "run_seed0" / "plans" / "plans.npz")
    assert plans["layers"].shape == (2, 3, 5, 5)
    ET.parse(tmp_path / "run_seed0" / "plans" / "plan1.svg")


def test_pool_commands(tmp_path, capsys):
    assert run("train", "--out-dir", tmp_path, "--seed", 0, *TINY, *POOL) == 0
    rd = tmp_path / "run_seed0"
    assert run("depth-analysis", "--run-dir", rd) == 0
    assert len((rd / "depth.csv").read_text().splitlines()) == 281
    capsys.readouterr()
    assert run("decide", "--run-dir", rd, "--baseline-run-dir", rd) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["predictron"] == res["deepnet"]
    assert 0 <= res["random_expected"] <= res["oracle_best"]
