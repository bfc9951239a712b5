from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from dfcopt.circuit import Layout
from dfcopt.cli import main
from dfcopt.metrics import PassbandSpec
from dfcopt.pipeline import (BANDWIDTH_BUCKETS, DUAL_BAND_SPECS, EXIT_ERROR, EXIT_INCOMPLETE, DesignTask, RunConfig,
                             RunLog, batch_evaluate, bucket_counts, design_end_to_end, empirical_cdf,
                             evaluate_layout, load_config, read_tasks_csv, sample_tasks)
from dfcopt.ppo import PPOConfig

from _published import DUAL_BAND_TARGETS

FAST = replace(RunConfig(), ppo=PPOConfig(hidden=32, rollout_length=128), bri_k=40, rounds=2, steps_per_round=128)
FAST_JSON = {"ppo": {"hidden": 32, "rollout_length": 128}, "bri_k": 40, "rounds": 2, "steps_per_round": 128}


# -- configuration ------------------------------------------------------------

def test_config_round_trip_keeps_every_value(tmp_path):
    cfg = RunConfig.from_dict(json.loads(FAST.to_json()))
    assert cfg == FAST
    (tmp_path / "c.json").write_text(json.dumps({"env": {"eps_invalid": 0.0}, "template": {"N": 5}}))
    partial = load_config(tmp_path / "c.json")
    assert partial.env.eps_invalid == 0.0 and partial.template.N == 5
    assert partial.env.delta_x == 0.1 and partial.ppo == PPOConfig()


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown keys"):
        RunConfig.from_dict({"ppo": {"learning_rate": 1}})


def test_runlog_snapshot_is_effective_config(tmp_path):
    task = DesignTask.from_config([(290, 305)], FAST, seed=1, rounds=0)
    run = design_end_to_end(task, FAST, tmp_path)
    assert RunConfig.from_dict(run.config) == FAST
    back = RunLog.from_json((tmp_path / "runlog.json").read_text())
    assert back.to_dict() == run.to_dict()


# -- tasks --------------------------------------------------------------------

def test_bucket_counts():
    assert bucket_counts(15) == [5, 2, 3, 5]
    assert bucket_counts(1500) == [500, 200, 300, 500]
    assert sum(bucket_counts(7)) == 7
    with pytest.raises(ValueError):
        bucket_counts(0)


def test_sampled_tasks_respect_buckets_and_are_reproducible():
    a, b = sample_tasks(15, 3, FAST), sample_tasks(15, 3, FAST)
    assert a == b
    for bucket, task in a:
        (lo, hi), = task.bands
        bw_lo, bw_hi = BANDWIDTH_BUCKETS[bucket][0]
        assert bw_lo <= hi - lo <= bw_hi and lo >= 230 and hi <= 370
    assert len({t.seed for _, t in a}) == 15


def test_task_validation():
    with pytest.raises(ValueError):
        DesignTask([(240, 250), (260, 270), (280, 290)])
    with pytest.raises(ValueError):
        DesignTask([(250, 240)])
    with pytest.raises(ValueError):
        DesignTask([(240, 250)], rounds=-1)
    assert [list(map(list, s)) for s in DUAL_BAND_SPECS] == [list(map(list, s)) for s in DUAL_BAND_TARGETS]


# -- design runs --------------------------------------------------------------

def test_zero_rounds_reports_bri_only(tmp_path):
    task = DesignTask.from_config([(290, 305)], FAST, seed=2, rounds=0)
    run = design_end_to_end(task, FAST, tmp_path)
    assert run.pre == run.post and run.steps == 0 and run.rounds == []
    assert (tmp_path / "layout.json").read_text() == (tmp_path / "layout_initial.json").read_text()
    assert not (tmp_path / "curves.csv").exists()
    assert run.exit_code == EXIT_INCOMPLETE and run.status == "completed"


def test_design_is_byte_deterministic(tmp_path):
    task = DesignTask.from_config([(290, 305)], FAST, seed=4)
    for d in ("a", "b"):
        design_end_to_end(task, FAST, tmp_path / d)
    for name in ("layout.json", "s21.csv", "curves.csv", "layout_initial.json", "s21.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_dual_band_run_reports_before_and_after(tmp_path):
    task = DesignTask.from_config(DUAL_BAND_SPECS[0], FAST, seed=0)
    run = design_end_to_end(task, FAST, tmp_path)
    d = json.loads((tmp_path / "runlog.json").read_text())
    assert d["pre_iou"] == run.pre["iou_percent"] and d["post_iou"] == run.post["iou_percent"]
    assert d["task"]["bands"] == [[240.0, 250.0], [300.0, 310.0]]
    assert set(run.files) >= {"layout", "s21", "curves", "layout_svg", "s21_svg", "runlog"}


def test_errors_are_recorded_not_raised(tmp_path):
    run = design_end_to_end(DesignTask([(150, 170)], rounds=0), FAST, tmp_path)
    assert run.exit_code == EXIT_ERROR and "outside the grid" in run.error
    assert json.loads((tmp_path / "runlog.json").read_text())["status"] == "error"


# -- batch ----------------------------------------------------------------------

def test_empirical_cdf_monotone():
    cdf = empirical_cdf([3.0, 1.0, 2.0, 2.0])
    assert [v for v, _ in cdf] == [1.0, 2.0, 2.0, 3.0]
    assert all(b[1] >= a[1] for a, b in zip(cdf, cdf[1:])) and cdf[-1][1] == 1.0


def test_batch_summary_recomputes_from_csv(tmp_path):
    summary = batch_evaluate(4, 1, FAST, tmp_path, rounds=1)
    rows = read_tasks_csv((tmp_path / "tasks.csv").read_text())
    assert len(rows) == 4
    s = json.loads((tmp_path / "summary.json").read_text())
    assert abs(s["mean_iou"] - np.mean([r["iou"] for r in rows])) <= 1e-9
    assert abs(s["mean_loss_db"] - np.mean([r["loss_db"] for r in rows])) <= 1e-9
    cum = {}
    for line in (tmp_path / "cdf.csv").read_text().splitlines()[1:]:
        metric, v, c = line.split(",")
        cum.setdefault(metric, []).append((float(v), float(c)))
    for metric, pts in cum.items():
        assert all(b[1] >= a[1] and b[0] >= a[0] for a, b in zip(pts, pts[1:]))
    # every CDF point is a per-task CSV value
    assert sorted(r["iou"] for r in rows) == [v for v, _ in cum["iou"]]
    assert {p.name for p in tmp_path.glob("cdf_*.svg")} == {"cdf_iou.svg", "cdf_loss_db.svg",
                                                            "cdf_reward_init.svg"}
    assert summary.n_failed == 0


# -- CLI ------------------------------------------------------------------------

@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.json"
    path.write_text(json.dumps(FAST_JSON))
    return str(path)


def test_cli_design_then_evaluate_reproduces_breakdown(tmp_path, fast_config, capsys):
    out = tmp_path / "run"
    code = main(["design", "--band", "290", "305", "--seed", "3", "--config", fast_config, "--out", str(out)])
    assert code in (0, 2)
    capsys.readouterr()
    assert main(["evaluate", str(out / "layout.json"), "--runlog", str(out / "runlog.json")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads((out / "runlog.json").read_text())["post"]


def test_cli_default_run_directory(tmp_path, fast_config, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["--seed", "7", "design", "--band", "290", "305", "--config", fast_config, "--rounds", "0"]) == 2
    dirs = list((tmp_path / "runs").iterdir())
    assert len(dirs) == 1 and dirs[0].name.endswith("-7")
    assert (dirs[0] / "runlog.json").exists()


def test_cli_seed_from_environment(tmp_path, fast_config, monkeypatch):
    monkeypatch.setenv("DFCOPT_SEED", "12")
    assert main(["bri", "--band", "290", "305", "--config", fast_config, "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "bri.json").read_text())["index"] >= 0
    monkeypatch.chdir(tmp_path)
    main(["bri", "--band", "290", "305", "--config", fast_config])
    assert next((tmp_path / "runs").iterdir()).name.endswith("-12")


def test_cli_plot_one_svg_per_kind(tmp_path, fast_config):
    out = tmp_path / "run"
    main(["design", "--band", "290", "305", "--config", fast_config, "--out", str(out), "--rounds", "0"])
    plots = tmp_path / "plots"
    assert main(["plot", "--layout", str(out / "layout.json"), "--s21", str(out / "s21.csv"),
                 "--band", "290", "305", "--out", str(plots)]) == 0
    svgs = sorted(p.name for p in plots.glob("*.svg"))
    assert svgs == ["layout.svg", "s21.svg"]
    for name in svgs:
        assert (plots / name).read_text().startswith("<svg")


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["frobnicate"]) == 1
    assert main(["design"]) == 1
    assert main(["evaluate", str(tmp_path / "missing.json"), "--band", "290", "305"]) == 1
    assert main(["--version"]) == 0
    capsys.readouterr()


def test_cli_dataset_and_surrogate_training(tmp_path, capsys):
    cfg = tmp_path / "gat.json"
    cfg.write_text(json.dumps({"gat": {"d_head": 8, "head_hidden": 16},
                               "surrogate_train": {"epochs": 3, "patience": 2, "batch_size": 8}}))
    assert main(["gen-dataset", "--n", "20", "--seed", "1", "--out", str(tmp_path / "d")]) == 0
    lines = (tmp_path / "d" / "dataset.jsonl").read_text().splitlines()
    assert len(lines) == 20
    assert main(["train-surrogate", str(tmp_path / "d" / "dataset.jsonl"), "--config", str(cfg),
                 "--out", str(tmp_path / "m")]) == 0
    report = json.loads((tmp_path / "m" / "train_report.json").read_text())
    assert len(report["history"]) <= 3
    # the trained checkpoint plugs in as the oracle
    cfg2 = tmp_path / "use.json"
    cfg2.write_text(json.dumps({"gat": {"d_head": 8, "head_hidden": 16}, "gnn_checkpoint": str(tmp_path / "m" /
                                "gat.json"), **FAST_JSON}))
    code = main(["design", "--band", "290", "305", "--oracle", "gnn", "--config", str(cfg2), "--rounds", "0",
                 "--out", str(tmp_path / "g")])
    assert code in (0, 2)
    run = json.loads((tmp_path / "g" / "runlog.json").read_text())
    assert run["task"]["oracle"] == "gnn" and run["status"] != "error"
