"""Optimizer and training loop: gradient correctness, constraint
projection, determinism, and loss plumbing."""

import numpy as np
import pytest

from multiwell import training
from multiwell.mixture import LSEConfig, LSEModel
from multiwell.training import (AdamState, Dataset, TrainConfig, TrainingError,
                                adam_step, learning_rates, loss_gradient_mse,
                                loss_value_mse, train, trapezoid_weights)


def tiny_dataset(n=20, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, size=(n, 1))
    return Dataset(x, x ** 2)


def param_grad(model, dataset, config):
    """Loss gradient via the tape, as the training loop computes it."""
    leaves = model.leaf_vars()
    total, _, _ = training._loss_graph(leaves, dataset, config, model.config)
    total.backward()
    g = np.zeros(model.params.size)
    for name, leaf in leaves.items():
        if leaf.grad is not None:
            g[model.params.slice_of(name)] = leaf.grad.ravel()
    return float(total.data), g


def numeric_grad(model, dataset, config, idx, h=1e-6):
    p = model.params.values
    out = np.empty(len(idx))
    for k, i in enumerate(idx):
        old = p[i]
        p[i] = old + h
        hi, _, _ = training._loss_graph(model.params, dataset, config,
                                        model.config)
        p[i] = old - h
        lo, _, _ = training._loss_graph(model.params, dataset, config,
                                        model.config)
        p[i] = old
        out[k] = (float(hi) - float(lo)) / (2 * h)
    return out


@pytest.mark.parametrize("loss_kind", ["value", "gradient"])
def test_param_gradients_match_finite_differences(loss_kind):
    model = LSEModel.create(LSEConfig(1, 2, 2, 5), seed=0)
    ds = tiny_dataset()
    if loss_kind == "gradient":
        ds = Dataset(ds.inputs, 2.0 * ds.inputs)   # targets: d/dx x^2
    cfg = TrainConfig(epochs=1, loss_kind=loss_kind)
    _, g = param_grad(model, ds, cfg)
    rng = np.random.default_rng(1)
    idx = rng.choice(model.params.size, size=25, replace=False)
    num = numeric_grad(model, ds, cfg, idx)
    denom = np.maximum(np.abs(g[idx]), np.maximum(np.abs(num), 1e-8))
    assert np.max(np.abs(g[idx] - num) / denom) < 1e-5


def test_elbo_gradients_match_finite_differences():
    model = LSEModel.create(LSEConfig(1, 2, 2, 5), seed=2)
    rng = np.random.default_rng(3)
    samples = rng.uniform(0.2, 0.8, size=(30, 1))
    grid = np.linspace(0.0, 1.0, 64)
    cfg = TrainConfig(epochs=1, loss_kind="elbo", grid=grid, kl_weight=0.01)
    ds = Dataset(samples)
    _, g = param_grad(model, ds, cfg)
    idx = rng.choice(model.params.size, size=15, replace=False)
    num = numeric_grad(model, ds, cfg, idx)
    denom = np.maximum(np.abs(g[idx]), np.maximum(np.abs(num), 1e-8))
    assert np.max(np.abs(g[idx] - num) / denom) < 1e-4


def test_adam_first_step_size_is_lr():
    # with bias correction, |step 1| = lr per coordinate (up to eps)
    model = LSEModel.create(LSEConfig(1, 2), seed=0)
    before = model.params.values.copy()
    grads = np.ones(model.params.size)
    cfg = TrainConfig(epochs=1)
    adam_step(model, grads, AdamState.for_params(model.params), cfg)
    step = before - model.params.values
    lr = learning_rates(model, cfg)
    # W slices may be clamped, so check an unclamped slice (V0) and alpha
    s = model.params.slice_of("V0")
    assert np.allclose(step[s], lr[s], rtol=1e-6)
    s = model.params.slice_of("alpha")
    assert np.allclose(step[s], cfg.lr_gate_scale, rtol=1e-6)


def test_adam_step_clamps_hidden_weights():
    model = LSEModel.create(LSEConfig(1, 2), seed=0)
    model.params.view("W1")[:] = 1e-9   # about to be pushed negative
    grads = np.zeros(model.params.size)
    grads[model.params.slice_of("W1")] = 1.0
    adam_step(model, grads, AdamState.for_params(model.params),
              TrainConfig(epochs=1))
    assert np.all(model.params.view("W1") >= 0.0)


def test_gate_and_rho_learning_rate_is_smaller():
    model = LSEModel.create(LSEConfig(1, 3), seed=0)
    cfg = TrainConfig(epochs=1)
    lr = learning_rates(model, cfg)
    assert np.all(lr[model.params.slice_of("alpha")] == cfg.lr_gate_scale)
    assert np.all(lr[model.params.slice_of("rho_raw")] == cfg.lr_gate_scale)
    assert np.all(lr[model.params.slice_of("V0")] == cfg.lr_network)


def test_train_reduces_loss_and_keeps_convexity():
    model = LSEModel.create(LSEConfig(1, 3), seed=0)
    ds = tiny_dataset(50)
    before = loss_value_mse(model, ds)
    model, hist = train(model, ds, TrainConfig(epochs=300, record_every=50))
    after = loss_value_mse(model, ds)
    assert after < before
    for name in model.params.names:
        if name.startswith("W"):
            assert np.all(model.params.view(name) >= 0.0)
    assert hist.loss[-1] < hist.loss[0]
    assert hist.epoch[-1] == 299


def test_train_is_deterministic():
    ds = tiny_dataset(30)
    outs = []
    for _ in range(2):
        model = LSEModel.create(LSEConfig(1, 2), seed=4)
        model, _ = train(model, ds, TrainConfig(epochs=100, record_every=100))
        outs.append(model.params.values.copy())
    assert np.array_equal(outs[0], outs[1])


def test_l1_term_adds_sign_gradient_on_alpha():
    model = LSEModel.create(LSEConfig(1, 4), seed=1)
    ds = tiny_dataset(40)
    eps = 0.123
    _, g0 = param_grad(model, ds, TrainConfig(epochs=1, l1_epsilon=0.0))
    _, g1 = param_grad(model, ds, TrainConfig(epochs=1, l1_epsilon=eps))
    s = model.params.slice_of("alpha")
    assert np.allclose(g1[s] - g0[s], eps * np.sign(model.alpha), atol=1e-12)
    # no other slice is touched by the penalty
    mask = np.ones(model.params.size, dtype=bool)
    mask[s] = False
    assert np.allclose(g1[mask], g0[mask], atol=1e-12)


def test_history_csv_roundtrip(tmp_path):
    model = LSEModel.create(LSEConfig(1, 2), seed=0)
    model, hist = train(model, tiny_dataset(), TrainConfig(epochs=20,
                                                           record_every=5))
    path = tmp_path / "history.csv"
    hist.to_csv(path)
    table = np.loadtxt(path, delimiter=",", skiprows=1)
    assert table.shape[1] == 6 + 2    # fixed columns + 2 gate columns
    assert np.allclose(table[:, 1], hist.loss)


def test_shape_validation_errors():
    model = LSEModel.create(LSEConfig(2, 2), seed=0)
    x = np.zeros((5, 2))
    with pytest.raises(ValueError):
        train(model, Dataset(x, np.zeros((5, 2))), TrainConfig(loss_kind="value"))
    with pytest.raises(ValueError):
        train(model, Dataset(x, np.zeros((5, 1))),
              TrainConfig(loss_kind="gradient"))
    with pytest.raises(ValueError):
        TrainConfig(loss_kind="nonsense")
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf]]), np.array([[1.0]]))


def test_elbo_requires_samples_inside_grid():
    model = LSEModel.create(LSEConfig(1, 2), seed=0)
    grid = np.linspace(0.0, 1.0, 32)
    with pytest.raises(ValueError):
        train(model, Dataset(np.array([[2.0]])),
              TrainConfig(epochs=1, loss_kind="elbo", grid=grid))


def test_grad_mask_ignores_masked_component():
    # with mask (1, 0) the loss must not depend on the second target column
    model = LSEModel.create(LSEConfig(2, 2), seed=0)
    rng = np.random.default_rng(5)
    X = rng.standard_normal((10, 2))
    Y1 = rng.standard_normal((10, 2))
    Y2 = Y1.copy()
    Y2[:, 1] = 99.0
    mask = np.array([1.0, 0.0])
    l1 = loss_gradient_mse(model, Dataset(X, Y1), grad_mask=mask)
    l2 = loss_gradient_mse(model, Dataset(X, Y2), grad_mask=mask)
    assert l1 == pytest.approx(l2, abs=1e-12)


def test_trapezoid_weights_integrate_linear_exactly():
    g = np.linspace(0.0, 2.0, 37)
    w = trapezoid_weights(g)
    assert np.trapezoid(g, g) == pytest.approx(float((w * g).sum()), abs=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_error_reports_epoch():
    model = LSEModel.create(LSEConfig(1, 2), seed=0)
    # poison the parameters so the first forward pass blows up
    model.params.view("V0")[:] = 1e300
    with pytest.raises((TrainingError, FloatingPointError)):
        train(model, tiny_dataset(), TrainConfig(epochs=5))
