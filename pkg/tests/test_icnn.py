"""Convex mode network: shape, convexity, gradient recursion."""

import numpy as np
import pytest

from multiwell import autodiff as ad
from multiwell.icnn import (ICNNConfig, icnn_forward, icnn_init,
                            icnn_input_gradient, project_nonnegative)


def make(config, seed=0):
    return icnn_init(config, np.random.default_rng(seed))


def test_param_count_small_config():
    # one input, two hidden layers of 10: 152 trainable scalars
    cfg = ICNNConfig(1, 2, 10)
    assert make(cfg).n_params() == 152


def test_forward_returns_scalar_and_rejects_bad_shape():
    cfg = ICNNConfig(3, 2, 6)
    p = make(cfg)
    y = icnn_forward(p, np.array([0.1, -0.2, 0.3]))
    assert isinstance(y, float)
    with pytest.raises(ValueError):
        icnn_forward(p, np.zeros(4))


def test_hidden_weights_initialized_nonnegative():
    cfg = ICNNConfig(2, 3, 8)
    p = make(cfg, seed=5)
    for w in p.W:
        if w is not None:
            assert np.all(w >= 0.0)


def test_midpoint_convexity_random_params():
    # convexity must hold for arbitrary parameters once W >= 0
    cfg = ICNNConfig(2, 2, 10)
    rng = np.random.default_rng(7)
    p = make(cfg, seed=7)
    # scramble, then project back to the feasible set
    for k in range(len(p.V)):
        p.V[k][:] = rng.standard_normal(p.V[k].shape)
        p.b[k][:] = rng.standard_normal(p.b[k].shape)
        if p.W[k] is not None:
            p.W[k][:] = rng.standard_normal(p.W[k].shape)
    project_nonnegative(p)
    for _ in range(200):
        a = rng.uniform(-4, 4, size=2)
        b = rng.uniform(-4, 4, size=2)
        fm = icnn_forward(p, 0.5 * (a + b))
        assert fm <= 0.5 * (icnn_forward(p, a) + icnn_forward(p, b)) + 1e-10


def test_input_gradient_matches_dual_numbers():
    from multiwell.mixture import icnn_scalar

    cfg = ICNNConfig(3, 2, 5)
    p = make(cfg, seed=2)
    x = np.array([0.3, -1.1, 0.8])
    g = icnn_input_gradient(p, x)
    g_dual = ad.input_gradient(lambda q: icnn_scalar(p, q), x)
    assert np.allclose(g, g_dual, rtol=0, atol=1e-12)


def test_input_gradient_matches_finite_differences():
    cfg = ICNNConfig(2, 3, 4)
    p = make(cfg, seed=3)
    x = np.array([0.5, -0.25])
    g = icnn_input_gradient(p, x)
    for j in range(2):
        e = np.zeros(2)
        e[j] = 1e-6
        num = (icnn_forward(p, x + e) - icnn_forward(p, x - e)) / 2e-6
        assert abs(g[j] - num) < 1e-6


def test_project_nonnegative_clamps():
    cfg = ICNNConfig(1, 2, 4)
    p = make(cfg)
    p.W[1][:] = -1.0
    project_nonnegative(p)
    assert np.all(p.W[1] == 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        ICNNConfig(0, 2, 10)
    with pytest.raises(ValueError):
        ICNNConfig(1, 2, 0)
