import json
import subprocess
import sys

import numpy as np
import pytest

from robustgp.cli import main
from robustgp.data import CorruptionSpec, corrupt, gen_function, save_csv


@pytest.fixture
def sine_csv(tmp_path):
    ds, latent = gen_function("sine", 30, noise_sigma=0.05, seed=5)
    ds, idx = corrupt(ds, latent, CorruptionSpec("constant", 0.1, {"value": 4.0}, seed=2))
    path = tmp_path / "train.csv"
    save_csv(path, ds)
    return path, idx


def test_fit_predict(tmp_path, sine_csv):
    data, _ = sine_csv
    model = tmp_path / "model.json"
    assert main(["fit", "--data", str(data), "--out", str(model)]) == 0
    grid = tmp_path / "grid.csv"
    grid.write_text("x1\n0.1\n0.5\n0.9\n")
    pred = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model), "--data", str(grid), "--observational", "--out", str(pred)]) == 0
    lines = pred.read_text().splitlines()
    assert lines[0] == "x1,mean,variance" and len(lines) == 4


def test_detect_then_fit_with_rho(tmp_path, sine_csv):
    data, idx = sine_csv
    out = tmp_path / "detect.json"
    assert main(["detect", "--data", str(data), "--prior", "exp:2", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert set(idx.tolist()) <= set(report["indices"])
    assert len(report["rho"]) == 30
    model = tmp_path / "m.json"
    assert main(["fit", "--data", str(data), "--rho-file", str(out), "--out", str(model)]) == 0
    assert json.loads(model.read_text())["support"] == report["indices"]


def test_exit_codes(tmp_path, sine_csv):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n0.5,NaN\n")
    assert main(["fit", "--data", str(bad), "--out", str(tmp_path / "m.json")]) == 2
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "m.json")]) == 2
    data, _ = sine_csv
    assert main(["detect", "--data", str(data), "--schedule", "zigzag", "--out", str(tmp_path / "d.json")]) == 2
    assert main(["theory-check", "--instances", "0", "--out", str(tmp_path / "t.json")]) == 2
    rho = tmp_path / "rho.json"
    rho.write_text(json.dumps({"rho": [1.0, 2.0]}))
    assert main(["fit", "--data", str(data), "--rho-file", str(rho), "--out", str(tmp_path / "m.json")]) == 2


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from robustgp import cli
    from robustgp.errors import NotPositiveDefinite

    def boom(*a, **k):
        raise NotPositiveDefinite("synthetic", last_pivot=1)

    monkeypatch.setattr(cli.RobustGPModel, "fit", boom)
    data = tmp_path / "d.csv"
    data.write_text("x1,y\n0,1\n1,2\n")
    assert main(["fit", "--data", str(data), "--out", str(tmp_path / "m.json")]) == 3


def test_module_entry_point(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n0.5,NaN\n")
    proc = subprocess.run([sys.executable, "-m", "robustgp", "fit", "--data", str(bad), "--out", str(tmp_path / "m.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "row 1" in proc.stderr and "y" in proc.stderr


def test_theory_check_writes_report(tmp_path):
    out = tmp_path / "t.json"
    assert main(["theory-check", "--instances", "2", "--seed", "1", "--sweep-points", "10", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["all_pass"] is True


def test_benchmark_outputs(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"function": "sine", "n_train": 20, "n_test": 10, "replications": 1,
                               "corruption": {"kind": "uniform_in_range", "probability": 0.1}, "prior": "exp:2"}))
    assert main(["benchmark", "--config", str(cfg), "--out-dir", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "results.csv").exists() and (tmp_path / "out" / "summary.json").exists()
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["benchmark", "--config", str(bad), "--out-dir", str(tmp_path / "o2")]) == 2
