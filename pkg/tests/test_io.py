"""Checkpoint serialization round-trips."""

import json

import numpy as np

from multiwell import io
from multiwell.mixture import LSEConfig, LSEModel


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    model = LSEModel.create(LSEConfig(3, 4, 2, 6), seed=9)
    # make the values "ugly" so repr round-tripping is actually exercised
    model.params.values[:] *= np.pi
    path = tmp_path / "ck.json"
    io.save_checkpoint(path, model, normalizers={"x_mean": np.arange(3.0)},
                       generator={"well": "double"})
    loaded, norms, gen = io.load_checkpoint(path)
    assert loaded.config == model.config
    assert np.array_equal(loaded.params.values, model.params.values)
    assert norms["x_mean"] == [0.0, 1.0, 2.0]
    assert gen == {"well": "double"}


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"format_version": 99}))
    try:
        io.load_checkpoint(path)
    except ValueError as err:
        assert "version" in str(err)
    else:
        raise AssertionError("expected ValueError")


def test_checkpoint_preserves_predictions(tmp_path):
    model = LSEModel.create(LSEConfig(2, 3), seed=2)
    X = np.random.default_rng(0).standard_normal((10, 2))
    y = model.forward(X)
    path = tmp_path / "ck.json"
    io.save_checkpoint(path, model)
    loaded, _, _ = io.load_checkpoint(path)
    assert np.array_equal(loaded.forward(X), y)


def test_write_metrics_serializes_numpy(tmp_path):
    path = tmp_path / "metrics.json"
    io.write_metrics(path, {"a": np.float64(1.5), "b": np.arange(3),
                            "c": {"d": np.int64(2)}})
    doc = json.loads(path.read_text())
    assert doc == {"a": 1.5, "b": [0, 1, 2], "c": {"d": 2}}
