import json
import subprocess
import sys
import time

import pytest

from viewcast.cli import main


def synth(tmp_path, n=200, extra=""):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(f"n = {n}\nhorizon_days = 30\narchetypes = power:0.5, logistic:0.5\nnoise = 0.3\n"
                   f"seed = 3\nsocial = true\nname = syn\n{extra}")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    return tmp_path / "syn.csv"


def experiment(tmp_path, dataset, body=""):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(f"# experiment\ndataset = {dataset}\nseed = 1\nt_r = 6d\nt_t = 30d\nfolds = 5\n"
                   f"mrbf.n_centers = 20\n{body}")
    return cfg


def test_synth_then_evaluate(tmp_path):
    t0 = time.perf_counter()
    data = synth(tmp_path)
    cfg = experiment(tmp_path, data)
    out = tmp_path / "res"
    assert main(["evaluate", "--config", str(cfg), "--out", str(out)]) == 0
    assert time.perf_counter() - t0 < 60
    lines = (out / "scores.csv").read_text().splitlines()
    assert lines[0] == "features,method,mean,ci95,ci95_normal"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["UL", "ML", "MRBF", "PSVR"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_records"] == 200 and summary["seed"] == 1
    assert (out / "folds.csv").exists()


def test_three_feature_sets(tmp_path):
    data = synth(tmp_path, n=80)
    cfg = experiment(tmp_path, data, "feature_sets = views; social; views+social\nmethods = ML, PSVR\n")
    assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    rows = (tmp_path / "r" / "scores.csv").read_text().splitlines()[1:]
    assert len(rows) == 3 * 2
    for m in ("ML", "PSVR"):
        assert sum(r.split(",")[1] == m for r in rows) == 3


def test_scores_byte_identical_and_inputs_untouched(tmp_path):
    data = synth(tmp_path, n=80)
    before = data.read_bytes()
    cfg = experiment(tmp_path, data)
    cfg_before = cfg.read_bytes()
    for name in ("a", "b"):
        assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / name), "--threads", "2"]) == 0
    assert (tmp_path / "a" / "scores.csv").read_bytes() == (tmp_path / "b" / "scores.csv").read_bytes()
    assert data.read_bytes() == before and cfg.read_bytes() == cfg_before


def test_missing_dataset_is_config_error(tmp_path, capsys):
    cfg = experiment(tmp_path, tmp_path / "nowhere.csv")
    assert main(["evaluate", "--config", str(cfg)]) == 2
    assert "nowhere.csv" in capsys.readouterr().err


def test_missing_seed_and_bad_threads(tmp_path, capsys):
    data = synth(tmp_path, n=30)
    cfg = tmp_path / "noseed.cfg"
    cfg.write_text(f"dataset = {data}\nt_r = 6d\nt_t = 30d\n")
    assert main(["evaluate", "--config", str(cfg)]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["evaluate", "--config", str(cfg), "--seed", "1", "--threads", "0"]) == 2


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("video_id,published_at_epoch,metric,t_offset_seconds,value\na,1,views,zero,5\n")
    assert main(["evaluate", "--config", str(experiment(tmp_path, bad))]) == 3


def test_experiment_error_exit_code(tmp_path):
    data = synth(tmp_path, n=30)
    cfg = experiment(tmp_path, data, "methods = MRBF\n")
    # more centers than training rows fails every fold
    assert main(["evaluate", "--config", str(cfg), "--set", "mrbf.n_centers=500"]) == 4


def test_sweep_bench_gridsearch(tmp_path):
    data = synth(tmp_path, n=60)
    cfg = experiment(tmp_path, data, "methods = UL, ML\nsweep.t_r = 1, 5, 29\nbench.sizes = 20, 40\n"
                                     "bench.repeats = 1\nbench.probe = 10\ngrid.method = MRBF\n"
                                     "grid.n_centers = 5, 10\ngrid.lambda = 0.1, 1\n")
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    sweep = (out / "sweep.csv").read_text().splitlines()
    assert sweep[0] == "method,t_r,fold,score"
    assert len(sweep) == 1 + 2 * 3 * 5
    assert {float(ln.split(",")[1]) for ln in sweep[1:]} == {1.0, 5.0, 29.0}
    assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
    assert len((out / "bench.csv").read_text().splitlines()) == 1 + 2 * 2
    assert main(["gridsearch", "--config", str(cfg), "--out", str(out)]) == 0
    assert len((out / "grid.csv").read_text().splitlines()) == 1 + 4
    best = json.loads((out / "best.json").read_text())
    assert best["method"] == "MRBF" and set(best["params"]) == {"n_centers", "lambda"}


def test_help_exits_zero():
    r = subprocess.run([sys.executable, "-m", "viewcast.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("evaluate", "sweep", "bench", "gridsearch", "synth"):
        assert cmd in r.stdout
    with pytest.raises(SystemExit) as info:
        main(["evaluate", "--help"])
    assert info.value.code == 0
