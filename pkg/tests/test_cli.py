"""End-to-end CLI smoke tests (reduced epochs, in-process invocation)."""

import json
import os

import numpy as np
import pytest

from multiwell import cli


def run(argv):
    return cli.main(argv)


def test_generate_wells_csv(tmp_path):
    code = run(["generate", "wells1d", "--out-dir", str(tmp_path)])
    assert code == 0
    table = np.loadtxt(tmp_path / "wells1d.csv", delimiter=",", skiprows=1)
    assert table.shape == (200, 2)


def test_generate_requires_out_dir(tmp_path):
    code = run(["generate", "wells1d", "--out-dir",
                str(tmp_path / "missing")])
    assert code == 2


def test_train_eval_roundtrip(tmp_path):
    out = tmp_path / "run"
    code = run(["train", "wells1d", "--epochs", "60", "--seed", "1",
                "--out-dir", str(out)])
    assert code == 0
    for name in ("checkpoint.json", "history.csv", "metrics.json",
                 "wells1d.csv", "predictions.csv"):
        assert (out / name).exists(), name
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["experiment"] == "wells1d"
    assert metrics["epochs"] == 60

    # evaluate on the training inputs: reproduces model outputs exactly
    pred_csv = tmp_path / "eval.csv"
    code = run(["eval", str(out / "checkpoint.json"),
                str(out / "wells1d.csv"), "--output", str(pred_csv)])
    assert code == 0
    table = np.loadtxt(pred_csv, delimiter=",", skiprows=1)
    from multiwell import io
    model, _, _ = io.load_checkpoint(out / "checkpoint.json")
    x = np.loadtxt(out / "wells1d.csv", delimiter=",", skiprows=1)[:, :1]
    assert np.array_equal(table[:, 0], model.forward(x))
    # membership columns sum to 1
    M = model.config.n_modes
    w = table[:, 2:2 + M]
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-9)


def test_rerun_same_seed_is_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["train", "wells1d", "--epochs", "40", "--seed", "3",
                    "--out-dir", str(out)]) == 0
    assert (a / "checkpoint.json").read_bytes() == (b / "checkpoint.json").read_bytes()
    assert (a / "metrics.json").read_text() != ""  # exists and parses
    ma = json.loads((a / "metrics.json").read_text())
    mb = json.loads((b / "metrics.json").read_text())
    ma.pop("wall_time_s"), mb.pop("wall_time_s")
    assert ma == mb


def test_config_file_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"experiment": "wells1d", "bogus": 1}))
    assert run(["train", "--config", str(cfg), "--out-dir",
                str(tmp_path / "o")]) == 2
    cfg.write_text(json.dumps({"experiment": "wells1d",
                               "train": {"nope": 2}}))
    assert run(["train", "--config", str(cfg), "--out-dir",
                str(tmp_path / "o")]) == 2


def test_config_file_overrides_apply(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"experiment": "wells1d", "variant": "minmix",
                               "epochs": 30, "n_modes": 4}))
    out = tmp_path / "o"
    assert run(["train", "--config", str(cfg), "--out-dir", str(out)]) == 0
    ck = json.loads((out / "checkpoint.json").read_text())
    assert ck["config"]["n_modes"] == 4
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["variant"] == "minmix"
    assert metrics["epochs"] == 30


def test_numerical_failure_exit_code(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"experiment": "wells1d", "epochs": 200,
                               "train": {"lr_network": 1e160}}))
    code = run(["train", "--config", str(cfg), "--out-dir",
                str(tmp_path / "o")])
    assert code == 1


def test_sweep_writes_per_seed_dirs(tmp_path):
    out = tmp_path / "sweep"
    code = run(["sweep", "wells1d", "--epochs", "30", "--n-seeds", "2",
                "--out-dir", str(out)])
    assert code == 0
    for seed in (0, 1):
        assert (out / f"seed{seed}" / "metrics.json").exists()


def test_unknown_experiment_rejected():
    with pytest.raises(SystemExit):
        run(["train", "not-an-experiment"])


def test_missing_experiment_is_config_error(tmp_path):
    assert run(["train", "--out-dir", str(tmp_path)]) == 2
