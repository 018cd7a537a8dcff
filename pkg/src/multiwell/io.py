"""Checkpoint and metrics serialization.

Checkpoints are JSON with full-precision decimal floats (Python's repr
round-trips IEEE doubles exactly), so load(save(model)) reproduces every
parameter bit-for-bit.
"""

import json

import numpy as np

from .mixture import LSEConfig, LSEModel

FORMAT_VERSION = 1


def save_checkpoint(path, model, normalizers=None, generator=None):
    cfg = model.config
    doc = {
        "format_version": FORMAT_VERSION,
        "config": {
            "input_dim": cfg.input_dim,
            "n_modes": cfg.n_modes,
            "n_hidden_layers": cfg.n_hidden_layers,
            "hidden_width": cfg.hidden_width,
        },
        "slices": {
            name: {
                "shape": list(model.params.shape_of(name)),
                "data": model.params.view(name).ravel().tolist(),
            }
            for name in model.params.names
        },
        "normalizers": _jsonable(normalizers),
        "generator": _jsonable(generator),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')}")
    c = doc["config"]
    model = LSEModel(LSEConfig(c["input_dim"], c["n_modes"],
                               c["n_hidden_layers"], c["hidden_width"]))
    for name, payload in doc["slices"].items():
        model.params.set(name, np.array(payload["data"],
                                        dtype=np.float64).reshape(payload["shape"]))
    return model, doc.get("normalizers"), doc.get("generator")


def _jsonable(obj):
    if obj is None:
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def write_metrics(path, metrics):
    with open(path, "w") as fh:
        json.dump(_jsonable(metrics), fh, indent=2)
