"""Single convex mode: input convex neural network.

Feedforward stack with input skip connections at every layer:

    h_1 = softplus(V_1 x + b_1)
    h_k = softplus(V_k x + W_k h_{k-1} + b_k)     k = 2..L
    y   = V_out x + W_out h_L + b_out             (affine output)

Convexity of y in x holds whenever every entry of every W is non-negative,
because softplus is convex and non-decreasing.  The constraint is enforced
by projection (clamping) after each optimizer step, not by
reparameterization.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


@dataclass
class ICNNConfig:
    input_dim: int
    n_hidden_layers: int = 2
    hidden_width: int = 10
    init_seed: int = 0

    def __post_init__(self):
        if min(self.input_dim, self.n_hidden_layers, self.hidden_width) < 1:
            raise ValueError("all ICNN dimensions must be >= 1")

    @property
    def widths(self):
        """Output width of each affine stage (hidden layers then output)."""
        return [self.hidden_width] * self.n_hidden_layers + [1]


@dataclass
class ICNNParams:
    """Weights of one mode.  W[0] is None (first layer has no hidden input)."""

    config: ICNNConfig
    V: list = field(default_factory=list)   # V[k]: (w_k, input_dim)
    W: list = field(default_factory=list)   # W[k]: (w_k, w_{k-1}) or None
    b: list = field(default_factory=list)   # b[k]: (w_k,)

    def n_params(self):
        n = 0
        for k in range(len(self.V)):
            n += self.V[k].size + self.b[k].size
            if self.W[k] is not None:
                n += self.W[k].size
        return n


def icnn_init(config, rng):
    """Random initialization keeping the W >= 0 invariant from birth.

    V, b ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)); W ~ U(0, sqrt(1/fan_in)),
    where fan_in counts all inputs feeding the layer (skip + hidden).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    d = config.input_dim
    params = ICNNParams(config)
    prev = 0
    for k, w in enumerate(config.widths):
        fan_in = d + prev
        bound = np.sqrt(1.0 / fan_in)
        params.V.append(rng.uniform(-bound, bound, size=(w, d)))
        params.b.append(rng.uniform(-bound, bound, size=w))
        params.W.append(rng.uniform(0.0, bound, size=(w, prev)) if k > 0 else None)
        prev = w
    return params


def icnn_forward(params, x):
    """Network output for one input vector x of length input_dim."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.config.input_dim,):
        raise ValueError(f"expected input of shape ({params.config.input_dim},), "
                         f"got {x.shape}")
    h = None
    n_layers = len(params.V)
    for k in range(n_layers):
        z = params.V[k] @ x + params.b[k]
        if params.W[k] is not None:
            z = z + params.W[k] @ h
        h = np.logaddexp(0.0, z) if k < n_layers - 1 else z
    return float(h[0])


def icnn_input_gradient(params, x):
    """Closed-form gradient of the output with respect to the input.

    Forward recursion on the layer Jacobians:
        G_1 = diag(sigmoid(z_1)) V_1
        G_k = diag(sigmoid(z_k)) (V_k + W_k G_{k-1})
        grad = V_out + W_out G_L
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.config.input_dim,):
        raise ValueError(f"expected input of shape ({params.config.input_dim},), "
                         f"got {x.shape}")
    h = None
    G = None
    n_layers = len(params.V)
    for k in range(n_layers):
        z = params.V[k] @ x + params.b[k]
        A = params.V[k]
        if params.W[k] is not None:
            z = z + params.W[k] @ h
            A = A + params.W[k] @ G
        if k < n_layers - 1:
            s = expit(z)
            h = np.logaddexp(0.0, z)
            G = s[:, None] * A
        else:
            G = A
    return G[0]


def project_nonnegative(params):
    """Clamp every W entry to be >= 0, in place.  V and b are untouched."""
    for W in params.W:
        if W is not None:
            np.maximum(W, 0.0, out=W)
    return params
