"""Full-batch ADAM training of the gated mixture model.

Three loss families share one code path: value MSE, gradient-matching MSE
(targets are input-gradients of the potential), and negative ELBO for
density fits.  Each is augmented with an L1 penalty on the gate parameters
alpha, which is what drives redundant modes toward inactivity.

Network weights and the gate/scale parameters use separate learning rates
(defaults 1e-3 and 1e-4).  After every ADAM step the hidden weights W are
clamped non-negative to preserve convexity.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import autodiff as ad
from . import mixture
from .mixture import LSEModel


class TrainingError(RuntimeError):
    """Numerical failure during training, annotated with the epoch index."""


@dataclass
class Dataset:
    inputs: np.ndarray            # (n, d_in)
    targets: np.ndarray = None    # (n, d_out); None for density fits

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=np.float64)
            if self.targets.ndim == 1:
                self.targets = self.targets[:, None]
            if self.targets.shape[0] != self.inputs.shape[0]:
                raise ValueError("inputs and targets row counts differ")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("non-finite inputs")

    @property
    def n(self):
        return self.inputs.shape[0]


@dataclass
class TrainConfig:
    epochs: int = 30000
    lr_network: float = 1e-3
    lr_gate_scale: float = 1e-4
    l1_epsilon: float = 1e-4
    loss_kind: str = "value"            # value | gradient | elbo
    seed: int = 0
    # gradient loss: optional 0/1 weights per input component
    grad_mask: np.ndarray = None
    # elbo loss: quadrature grid and KL regularization weight
    grid: np.ndarray = None
    kl_weight: float = 0.01
    record_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr_network <= 0 or self.lr_gate_scale <= 0:
            raise ValueError("learning rates must be positive")
        if self.l1_epsilon < 0:
            raise ValueError("l1_epsilon must be >= 0")
        if self.loss_kind not in ("value", "gradient", "elbo"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, store):
        return cls(np.zeros(store.size), np.zeros(store.size))


@dataclass
class TrainHistory:
    loss: np.ndarray
    data_term: np.ndarray
    l1_term: np.ndarray
    rho: np.ndarray
    gates: np.ndarray          # (n_records, n_modes)
    active_modes: np.ndarray
    epoch: np.ndarray

    def to_csv(self, path):
        n_modes = self.gates.shape[1]
        header = "epoch,loss,data_term,l1_term,rho,active_modes," + \
            ",".join(f"gate_{i}" for i in range(n_modes))
        table = np.column_stack([self.epoch, self.loss, self.data_term,
                                 self.l1_term, self.rho, self.active_modes,
                                 self.gates])
        np.savetxt(path, table, delimiter=",", header=header, comments="")


# ---------------------------------------------------------------------------
# loss graphs (generic: p may be a ParamStore or a dict of Var leaves)


def _gate_and_scale(p, config):
    get = mixture._getter(p)
    alpha = get("alpha")
    rho = ad.softplus(get("rho_raw"))
    return alpha, rho


def _l1_term(alpha, epsilon):
    return epsilon * ad.absval(alpha).sum()


def _value_data_term(p, X, Y, model_config):
    alpha, rho = _gate_and_scale(p, model_config)
    f = mixture.mode_values(p, X, model_config)
    pred = mixture.lse_reduce(f, alpha, rho, model_config.n_modes)
    return ((pred - Y[:, 0]) ** 2).mean()


def _gradient_data_term(p, X, Y, model_config, mask=None):
    alpha, rho = _gate_and_scale(p, model_config)
    f, g = mixture.mode_values_and_gradients(p, X, model_config)
    pred = mixture.lse_input_gradient_from_parts(f, g, alpha, rho)
    sq = (pred - Y) ** 2
    if mask is not None:
        sq = sq * np.asarray(mask, dtype=np.float64)[None, :]
    return sq.sum(axis=1).mean()


def _elbo_data_term(p, X, model_config, grid, kl_weight):
    """Negative log-likelihood under the grid-normalized density, plus a
    KL(q || uniform) regularizer evaluated by trapezoid quadrature."""
    alpha, rho = _gate_and_scale(p, model_config)
    f_s = mixture.mode_values(p, X, model_config)
    logq_s = mixture.lse_reduce(f_s, alpha, rho, model_config.n_modes)
    f_g = mixture.mode_values(p, grid[:, None], model_config)
    logq_g = mixture.lse_reduce(f_g, alpha, rho, model_config.n_modes)
    w = trapezoid_weights(grid)
    t = logq_g + np.log(w)
    m = float(np.max(ad.value_of(t)))
    logZ = ad.log(ad.exp(t - m).sum()) + m
    nll = logZ - logq_s.mean()
    if kl_weight == 0.0:
        return nll
    centered = logq_g - logZ
    kl = (ad.exp(centered) * centered * w).sum() + math.log(grid[-1] - grid[0])
    return nll + kl_weight * kl


def trapezoid_weights(grid):
    w = np.empty_like(grid)
    w[1:-1] = (grid[2:] - grid[:-2]) / 2.0
    w[0] = (grid[1] - grid[0]) / 2.0
    w[-1] = (grid[-1] - grid[-2]) / 2.0
    return w


def _check_shapes(model, dataset, config):
    d = model.config.input_dim
    if dataset.inputs.shape[1] != d:
        raise ValueError(f"dataset input dim {dataset.inputs.shape[1]} != model dim {d}")
    if config.loss_kind == "value":
        if dataset.targets is None or dataset.targets.shape[1] != 1:
            raise ValueError("value loss needs (n, 1) targets")
    elif config.loss_kind == "gradient":
        if dataset.targets is None or dataset.targets.shape[1] != d:
            raise ValueError(f"gradient loss needs (n, {d}) targets")
    else:
        if config.grid is None:
            raise ValueError("elbo loss needs a quadrature grid")
        lo, hi = config.grid[0], config.grid[-1]
        x = dataset.inputs[:, 0]
        if np.any(x < lo) or np.any(x > hi):
            raise ValueError("samples fall outside the density grid support")


def _loss_graph(p, dataset, config, model_config):
    if config.loss_kind == "value":
        data = _value_data_term(p, dataset.inputs, dataset.targets, model_config)
    elif config.loss_kind == "gradient":
        data = _gradient_data_term(p, dataset.inputs, dataset.targets,
                                   model_config, config.grad_mask)
    else:
        data = _elbo_data_term(p, dataset.inputs, model_config,
                               config.grid, config.kl_weight)
    alpha, _ = _gate_and_scale(p, model_config)
    l1 = _l1_term(alpha, config.l1_epsilon)
    return data + l1, data, l1


# public loss evaluators (plain numbers, no tape)

def loss_value_mse(model, dataset, l1_epsilon=1e-4):
    cfg = TrainConfig(epochs=1, loss_kind="value", l1_epsilon=l1_epsilon)
    _check_shapes(model, dataset, cfg)
    total, _, _ = _loss_graph(model.params, dataset, cfg, model.config)
    return float(total)


def loss_gradient_mse(model, dataset, l1_epsilon=1e-4, grad_mask=None):
    cfg = TrainConfig(epochs=1, loss_kind="gradient", l1_epsilon=l1_epsilon,
                      grad_mask=grad_mask)
    _check_shapes(model, dataset, cfg)
    total, _, _ = _loss_graph(model.params, dataset, cfg, model.config)
    return float(total)


def loss_elbo(model, dataset, grid, kl_weight=0.01, l1_epsilon=1e-4):
    cfg = TrainConfig(epochs=1, loss_kind="elbo", l1_epsilon=l1_epsilon,
                      grid=np.asarray(grid, dtype=np.float64), kl_weight=kl_weight)
    _check_shapes(model, dataset, cfg)
    total, _, _ = _loss_graph(model.params, dataset, cfg, model.config)
    return float(total)


# ---------------------------------------------------------------------------
# optimizer


def learning_rates(model, config):
    """Per-parameter learning rate vector (network vs gate/scale slices)."""
    lr = np.full(model.params.size, config.lr_network)
    lr[model.params.slice_of("alpha")] = config.lr_gate_scale
    lr[model.params.slice_of("rho_raw")] = config.lr_gate_scale
    return lr


def adam_step(model, grads, state, config, lr=None):
    """One bias-corrected ADAM update in place, then clamp all W >= 0."""
    if lr is None:
        lr = learning_rates(model, config)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    mhat = state.m / (1.0 - state.beta1 ** state.t)
    vhat = state.v / (1.0 - state.beta2 ** state.t)
    model.params.values -= lr * mhat / (np.sqrt(vhat) + state.eps)
    for name in model.params.names:
        if name.startswith("W"):
            w = model.params.view(name)
            np.maximum(w, 0.0, out=w)
    return state


# ---------------------------------------------------------------------------
# training loop


def train(model, dataset, config):
    """Full-batch gradient descent; returns the model and epoch telemetry.

    Deterministic given (initial parameters, dataset, config): there is no
    stochastic element in the loop itself.
    """
    _check_shapes(model, dataset, config)
    store = model.params
    state = AdamState.for_params(store)
    lr = learning_rates(model, config)
    n_rec = (config.epochs + config.record_every - 1) // config.record_every
    hist = TrainHistory(
        loss=np.empty(n_rec), data_term=np.empty(n_rec), l1_term=np.empty(n_rec),
        rho=np.empty(n_rec), gates=np.empty((n_rec, model.config.n_modes)),
        active_modes=np.empty(n_rec, dtype=int), epoch=np.empty(n_rec, dtype=int))
    r = 0
    for epoch in range(config.epochs):
        try:
            leaves = model.leaf_vars()
            total, data, l1 = _loss_graph(leaves, dataset, config, model.config)
            if not np.isfinite(total.data):
                raise FloatingPointError("non-finite loss")
            total.backward()
            store.grad[:] = 0.0
            for name, leaf in leaves.items():
                if leaf.grad is not None:
                    store.grad[store.slice_of(name)] = leaf.grad.ravel()
            adam_step(model, store.grad, state, config, lr)
        except FloatingPointError as err:
            raise TrainingError(f"epoch {epoch}: {err}") from err
        if epoch % config.record_every == 0 or epoch == config.epochs - 1:
            if r < n_rec:
                hist.epoch[r] = epoch
                hist.loss[r] = float(total.data)
                hist.data_term[r] = float(data.data)
                hist.l1_term[r] = float(l1.data)
                hist.rho[r] = model.rho
                hist.gates[r] = model.gates
                hist.active_modes[r] = mixture.active_mode_count(model)
                r += 1
    # make sure the last record reflects the final parameters
    hist.epoch[r - 1] = config.epochs - 1
    hist.rho[r - 1] = model.rho
    hist.gates[r - 1] = model.gates
    hist.active_modes[r - 1] = mixture.active_mode_count(model)
    return model, _trim(hist, r)


def _trim(hist, r):
    return TrainHistory(hist.loss[:r], hist.data_term[:r], hist.l1_term[:r],
                        hist.rho[:r], hist.gates[:r], hist.active_modes[:r],
                        hist.epoch[:r])
