"""Gated log-sum-exponential mixture of convex modes.

The model value is

    -(1/rho) log( (1/M) sum_i gate(alpha_i) exp(-rho f_i(x)) )

with gate(a) = sigmoid(10 (a/2 - 1)) in (0, 1) and rho = softplus(rho_raw)
> 0, so the mixture is a smooth lower envelope of the mode functions and
stays convex inside each basin.  Evaluation always uses the max-subtraction
trick on the shifted exponents -rho f_i + log gate_i; rho grows during
training and the naive form underflows.

The same forward code runs on plain ndarrays (inference) and on tape
``Var`` nodes (training), batched over samples and modes.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Var
from .icnn import ICNNConfig, ICNNParams, icnn_init

# alpha solving gate(alpha) = 0.99; gates start almost fully open
ALPHA_INIT = 2.0 + math.log(99.0) / 5.0
# raw scale solving softplus(raw) = 2
RHO_RAW_INIT = math.log(math.exp(2.0) - 1.0)


def gate(a):
    """Shifted and scaled sigmoid, strictly increasing, range (0, 1)."""
    return ad.sigmoid(5.0 * a - 10.0)


def log_gate(a):
    """log(gate(a)) evaluated stably as -softplus(10 - 5a)."""
    return -ad.softplus(-(5.0 * a - 10.0))


@dataclass
class LSEConfig:
    input_dim: int
    n_modes: int
    n_hidden_layers: int = 2
    hidden_width: int = 10

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")

    @property
    def icnn(self):
        return ICNNConfig(self.input_dim, self.n_hidden_layers, self.hidden_width)

    @property
    def widths(self):
        return self.icnn.widths


def param_layout(config):
    """Named slices of the flat trainable vector, modes stacked per layer."""
    layout = []
    d = config.input_dim
    prev = 0
    for k, w in enumerate(config.widths):
        layout.append((f"V{k}", (config.n_modes, w, d)))
        if k > 0:
            layout.append((f"W{k}", (config.n_modes, w, prev)))
        layout.append((f"b{k}", (config.n_modes, w)))
        prev = w
    layout.append(("alpha", (config.n_modes,)))
    layout.append(("rho_raw", ()))
    return layout


class LSEModel:
    """Mode networks plus gate weights alpha and the raw scale parameter."""

    def __init__(self, config, params=None):
        self.config = config
        self.params = params if params is not None else ParamStore(param_layout(config))

    @classmethod
    def create(cls, config, seed=0):
        """Initialize all modes from one seeded rng (modes drawn in order)."""
        model = cls(config)
        rng = np.random.default_rng(seed)
        for i in range(config.n_modes):
            mode = icnn_init(config.icnn, rng)
            for k in range(len(config.widths)):
                model.params.view(f"V{k}")[i] = mode.V[k]
                model.params.view(f"b{k}")[i] = mode.b[k]
                if k > 0:
                    model.params.view(f"W{k}")[i] = mode.W[k]
        model.params.view("alpha")[:] = ALPHA_INIT
        model.params.view("rho_raw")[()] = RHO_RAW_INIT
        return model

    # -- parameter access

    @property
    def alpha(self):
        return self.params.view("alpha")

    @property
    def rho(self):
        return float(np.logaddexp(0.0, self.params.view("rho_raw")[()]))

    @property
    def gates(self):
        return gate(self.alpha)

    def mode(self, i):
        """ICNNParams view of mode i (shares storage with the flat vector)."""
        cfg = self.config
        p = ICNNParams(cfg.icnn)
        for k in range(len(cfg.widths)):
            p.V.append(self.params.view(f"V{k}")[i])
            p.b.append(self.params.view(f"b{k}")[i])
            p.W.append(self.params.view(f"W{k}")[i] if k > 0 else None)
        return p

    @property
    def modes(self):
        return [self.mode(i) for i in range(self.config.n_modes)]

    def network_slice_names(self):
        return [n for n in self.params.names if n[0] in "VWb"]

    def leaf_vars(self):
        return {name: Var(self.params.view(name)) for name in self.params.names}

    # -- evaluation (numpy path; X is (n, d) or (d,))

    def forward(self, X):
        X, single = _as_batch(X, self.config.input_dim)
        f = mode_values(self.params, X, self.config)
        out = lse_reduce(f, self.alpha, self.rho, self.config.n_modes)
        return float(out[0]) if single else out

    def input_gradient(self, X):
        X, single = _as_batch(X, self.config.input_dim)
        f, g = mode_values_and_gradients(self.params, X, self.config)
        w = membership_from_values(f, self.alpha, self.rho)
        out = np.sum(w[:, :, None] * g, axis=0)
        return out[0] if single else out

    def membership(self, X):
        X, single = _as_batch(X, self.config.input_dim)
        f = mode_values(self.params, X, self.config)
        w = membership_from_values(f, self.alpha, self.rho).T
        return w[0] if single else w


def _as_batch(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        if X.shape != (d,):
            raise ValueError(f"expected input dimension {d}, got {X.shape}")
        return X[None, :], True
    if X.shape[1] != d:
        raise ValueError(f"expected input dimension {d}, got {X.shape}")
    return X, False


# ---------------------------------------------------------------------------
# batched mode evaluation, generic over ndarray / Var parameters


def _swap(a):
    return a.swapaxes(-1, -2) if isinstance(a, Var) else np.swapaxes(a, -1, -2)


def _reshape(a, shape):
    return a.reshape(shape) if isinstance(a, Var) else np.reshape(a, shape)


def mode_values(p, X, config):
    """All mode outputs, shape (n_modes, n). p: ParamStore or dict of Vars."""
    get = _getter(p)
    M = config.n_modes
    n = X.shape[0]
    h = None
    widths = config.widths
    for k, w in enumerate(widths):
        z = ad.matmul(X, _swap(get(f"V{k}"))) + _reshape(get(f"b{k}"), (M, 1, w))
        if k > 0:
            z = z + ad.matmul(h, _swap(get(f"W{k}")))
        h = ad.softplus(z) if k < len(widths) - 1 else z
    return _reshape(h, (M, n))


def mode_values_and_gradients(p, X, config):
    """Mode outputs (M, n) and input gradients (M, n, d), one pass.

    The gradient uses the same closed-form layer-Jacobian recursion as
    ``icnn_input_gradient``; on the Var path the recursion itself is part
    of the tape, so parameter gradients of expressions containing these
    input gradients come out of ordinary reverse mode.
    """
    get = _getter(p)
    M, d = config.n_modes, config.input_dim
    n = X.shape[0]
    h, G = None, None
    widths = config.widths
    for k, w in enumerate(widths):
        Vk = get(f"V{k}")
        z = ad.matmul(X, _swap(Vk)) + _reshape(get(f"b{k}"), (M, 1, w))
        A = _reshape(Vk, (M, 1, w, d))
        if k > 0:
            Wk = get(f"W{k}")
            z = z + ad.matmul(h, _swap(Wk))
            A = A + ad.matmul(_reshape(Wk, (M, 1, w, widths[k - 1])), G)
        if k < len(widths) - 1:
            s = ad.sigmoid(z)
            h = ad.softplus(z)
            G = _reshape(s, (M, n, w, 1)) * A
        else:
            h, G = z, A
    return _reshape(h, (M, n)), _reshape(G, (M, n, d))


def _getter(p):
    if isinstance(p, ParamStore):
        return p.view
    return p.__getitem__


def lse_reduce(f, alpha, rho, n_modes):
    """Stable gated log-sum-exp over the mode axis; f is (M, n)."""
    a = _reshape(log_gate(alpha), (n_modes, 1)) - rho * f
    m = np.max(ad.value_of(a), axis=0)
    s = ad.exp(a - m).sum(axis=0)
    return -((ad.log(s) + (m - math.log(n_modes))) / rho)


def membership_from_values(f, alpha, rho):
    """Softmin responsibilities w_i(x), shape (M, n); columns sum to 1."""
    a = _reshape(log_gate(alpha), (-1, 1)) - rho * f
    m = np.max(ad.value_of(a), axis=0)
    e = ad.exp(a - m)
    return e / _reshape(e.sum(axis=0), (1, -1))


def lse_input_gradient_from_parts(f, g, alpha, rho):
    """Mixture input gradient sum_i w_i grad f_i, shape (n, d)."""
    w = membership_from_values(f, alpha, rho)
    M, n = ad.value_of(f).shape
    d = ad.value_of(g).shape[-1]
    return (_reshape(w, (M, n, 1)) * g).sum(axis=0)


def active_mode_count(model, threshold=1e-6):
    """Number of modes whose gate exceeds the activity threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return int(np.sum(gate(model.alpha) > threshold))


# ---------------------------------------------------------------------------
# scalar path (Dual-compatible), used as an independent cross-check


def icnn_scalar(mode, x):
    """Scalar ICNN forward over generic scalars (floats or Duals)."""
    widths = mode.config.widths
    h = None
    for k, w in enumerate(widths):
        z = []
        for j in range(w):
            acc = mode.b[k][j]
            for i, xi in enumerate(x):
                acc = acc + mode.V[k][j, i] * xi
            if mode.W[k] is not None:
                for i, hi in enumerate(h):
                    acc = acc + mode.W[k][j, i] * hi
            z.append(acc)
        h = [ad.softplus(zj) for zj in z] if k < len(widths) - 1 else z
    return h[0]


def lse_scalar(model, x):
    """Scalar mixture forward over generic scalars (floats or Duals)."""
    rho = model.rho
    lg = ad.value_of(log_gate(model.alpha))
    terms = [lg[i] - rho * icnn_scalar(model.mode(i), x)
             for i in range(model.config.n_modes)]
    m = max(t.value if isinstance(t, ad.Dual) else t for t in terms)
    s = terms[0] * 0.0
    for t in terms:
        s = s + ad.exp(t - m)
    return -(ad.log(s) + (m - math.log(model.config.n_modes))) / rho
