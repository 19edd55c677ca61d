"""Command-line contract: artifacts, exit codes, recomputation identity."""

import json
from pathlib import Path

import pytest

from banditlab.cli import main

CFG_SMALL = """\
n_users = 150
k_topics = 6
phase1_days = 3
phase2_days = 2
mc_samples = 30
activity_median = 0.6
seed = 4
"""


@pytest.fixture()
def cfg_path(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(CFG_SMALL)
    return path


def test_simulate_writes_documented_files(cfg_path, tmp_path):
    out = tmp_path / "run"
    code = main(["simulate", "--config", str(cfg_path), "--out", str(out), "--quiet"])
    assert code == 0
    for name in ("impressions.jsonl", "metrics.csv", "effects.csv",
                 "buckets.csv", "run_manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["seed"] == 4
    for name in manifest["outputs"]:
        assert (out / name).exists()


def test_seed_override_and_manifest_stability(cfg_path, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg_path), "--seed", "7",
                 "--out", str(out_a), "--quiet"]) == 0
    assert main(["simulate", "--config", str(cfg_path), "--seed", "7",
                 "--out", str(out_b), "--quiet"]) == 0
    man_a = json.loads((out_a / "run_manifest.json").read_text())
    man_b = json.loads((out_b / "run_manifest.json").read_text())
    man_a.pop("duration_seconds")
    man_b.pop("duration_seconds")
    assert man_a == man_b
    assert man_a["seed"] == 7
    assert (out_a / "impressions.jsonl").read_bytes() == \
        (out_b / "impressions.jsonl").read_bytes()


def test_bad_config_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("gamma = -3.0\n")
    code = main(["simulate", "--config", str(bad), "--out",
                 str(tmp_path / "x"), "--quiet"])
    assert code == 2


def test_missing_config_exit_2(tmp_path):
    code = main(["simulate", "--config", str(tmp_path / "nope.toml"),
                 "--out", str(tmp_path / "x"), "--quiet"])
    assert code == 2


def test_metrics_recompute_byte_identical(cfg_path, tmp_path):
    run_dir = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg_path), "--out",
                 str(run_dir), "--quiet"]) == 0
    re_dir = tmp_path / "re"
    assert main(["metrics", "--config", str(cfg_path),
                 "--log", str(run_dir / "impressions.jsonl"),
                 "--out", str(re_dir), "--quiet"]) == 0
    for name in ("metrics.csv", "effects.csv", "buckets.csv"):
        assert (run_dir / name).read_bytes() == (re_dir / name).read_bytes(), name


def test_metrics_empty_log(cfg_path, tmp_path):
    log = tmp_path / "empty.jsonl"
    log.write_text("")
    out = tmp_path / "out"
    assert main(["metrics", "--config", str(cfg_path), "--log", str(log),
                 "--out", str(out), "--quiet"]) == 0
    assert (out / "metrics.csv").read_text() == "day,group,phase,metric,value\n"
    assert (out / "effects.csv").read_text().startswith("day,phase,metric,value")


def test_metrics_malformed_log_exit_2(cfg_path, tmp_path):
    log = tmp_path / "bad.jsonl"
    log.write_text('{"day":0,"user":1}\n')
    assert main(["metrics", "--config", str(cfg_path), "--log", str(log),
                 "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_metrics_unknown_topic_exit_2(cfg_path, tmp_path):
    # k_topics=6 in config; topic index 17 must be rejected
    log = tmp_path / "oob.jsonl"
    log.write_text(
        '{"day":0,"user":1,"topic":17,"group":"test","phase":1,'
        '"outcomes":{"play":true,"loop":false,"skip":false,"comment":false,'
        '"share":false,"like":false,"completed":true},"score":0.5}\n')
    assert main(["metrics", "--config", str(cfg_path), "--log", str(log),
                 "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_sweep_grid(cfg_path, tmp_path):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(cfg_path), "--param", "gamma",
                 "--values", "0,1", "--seeds", "1,2,3", "--out", str(out),
                 "--quiet"])
    assert code == 0
    run_dirs = sorted(p for p in out.iterdir() if p.is_dir())
    assert len(run_dirs) == 6
    for d in run_dirs:
        assert (d / "run_manifest.json").exists()
    sweep = (out / "sweep.csv").read_text().splitlines()
    assert sweep[0] == "param,value,seed,metric,phase,value"
    assert all(line.startswith("gamma,") for line in sweep[1:])


def test_sweep_unknown_param_exit_2(cfg_path, tmp_path):
    assert main(["sweep", "--config", str(cfg_path), "--param", "bananas",
                 "--values", "1", "--seeds", "1", "--out",
                 str(tmp_path / "s"), "--quiet"]) == 2


def test_report_pivot(cfg_path, tmp_path):
    run_dir = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg_path), "--out",
                 str(run_dir), "--quiet"]) == 0
    assert main(["report", "--out", str(run_dir), "--quiet"]) == 0
    lines = (run_dir / "report.csv").read_text().splitlines()
    assert lines[0] == "day,phase,metric,production,control,test,effect"
    assert len(lines) > 10


def test_workers_flag_identical_output(cfg_path, tmp_path):
    out_a, out_b = tmp_path / "w1", tmp_path / "w2"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out_a),
                 "--workers", "1", "--quiet"]) == 0
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out_b),
                 "--workers", "3", "--quiet"]) == 0
    assert (out_a / "impressions.jsonl").read_bytes() == \
        (out_b / "impressions.jsonl").read_bytes()
    assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
