"""Differentiation machinery.

Two independent mechanisms live here:

* ``Var`` -- a reverse-mode tape over numpy arrays.  Objectives are built
  from a small set of primitives (+, -, *, /, matmul, exp, log, softplus,
  sigmoid, power, max-with-constant, abs, reductions) and differentiated
  with respect to named parameter slices in a ``ParamStore``.
* ``Dual`` -- scalar forward-mode dual numbers, used to take exact
  directional derivatives with respect to *inputs* and as an independent
  cross-check of the reverse-mode results.

Everything is 64-bit float and deterministic: identical inputs produce
bit-identical outputs within one build.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import expit


# ---------------------------------------------------------------------------
# reverse-mode tape


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """Node of the reverse-mode tape wrapping an ndarray (or scalar)."""

    __slots__ = ("data", "grad", "_parents", "_vjp")

    def __init__(self, data, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    # -- graph traversal

    def backward(self):
        if self.data.ndim != 0:
            raise ValueError("backward() requires a scalar output")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(topo):
            if node.grad is None or node._vjp is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None:
                    continue
                g = _unbroadcast(g, parent.data.shape)
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- arithmetic

    def __add__(self, other):
        o = _ensure(other)
        return Var(self.data + o.data, (self, o), lambda g: (g, g))

    __radd__ = __add__

    def __neg__(self):
        return Var(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        o = _ensure(other)
        return Var(self.data - o.data, (self, o), lambda g: (g, -g))

    def __rsub__(self, other):
        return _ensure(other) - self

    def __mul__(self, other):
        o = _ensure(other)
        return Var(self.data * o.data, (self, o),
                   lambda g: (g * o.data, g * self.data))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _ensure(other)
        if np.any(o.data == 0.0):
            raise FloatingPointError("division by zero in tape evaluation")
        inv = 1.0 / o.data
        return Var(self.data * inv, (self, o),
                   lambda g: (g * inv, -g * self.data * inv * inv))

    def __rtruediv__(self, other):
        return _ensure(other) / self

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise TypeError("only constant exponents are supported")
        c = float(exponent)
        out = self.data ** c
        return Var(out, (self,), lambda g: (g * c * self.data ** (c - 1.0),))

    def __matmul__(self, other):
        o = _ensure(other)
        out = np.matmul(self.data, o.data)

        def vjp(g):
            ga = np.matmul(g, np.swapaxes(o.data, -1, -2))
            gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
            return ga, gb

        return Var(out, (self, o), vjp)

    # -- shape ops

    def reshape(self, *shape):
        orig = self.data.shape
        return Var(self.data.reshape(*shape), (self,),
                   lambda g: (g.reshape(orig),))

    def swapaxes(self, a, b):
        return Var(np.swapaxes(self.data, a, b), (self,),
                   lambda g: (np.swapaxes(g, a, b),))

    def sum(self, axis=None):
        out = self.data.sum(axis=axis)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, self.data.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), self.data.shape).copy(),)

        return Var(out, (self,), vjp)

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    @property
    def shape(self):
        return self.data.shape


def _ensure(x):
    return x if isinstance(x, Var) else Var(x)


# ---------------------------------------------------------------------------
# scalar forward mode


class Dual:
    """Dual number a + a' eps for exact directional derivatives."""

    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent=0.0):
        self.value = float(value)
        self.tangent = float(tangent)

    def __add__(self, other):
        o = _dual(other)
        return Dual(self.value + o.value, self.tangent + o.tangent)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __sub__(self, other):
        o = _dual(other)
        return Dual(self.value - o.value, self.tangent - o.tangent)

    def __rsub__(self, other):
        return _dual(other) - self

    def __mul__(self, other):
        o = _dual(other)
        return Dual(self.value * o.value,
                    self.tangent * o.value + self.value * o.tangent)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _dual(other)
        if o.value == 0.0:
            raise FloatingPointError("division by zero in dual evaluation")
        v = self.value / o.value
        return Dual(v, (self.tangent - v * o.tangent) / o.value)

    def __rtruediv__(self, other):
        return _dual(other) / self

    def __pow__(self, exponent):
        c = float(exponent)
        v = self.value ** c
        return Dual(v, c * self.value ** (c - 1.0) * self.tangent)


def _dual(x):
    return x if isinstance(x, Dual) else Dual(x)


# ---------------------------------------------------------------------------
# generic primitives (dispatch on Var / Dual / ndarray)


def exp(x):
    if isinstance(x, Var):
        out = np.exp(x.data)
        return Var(out, (x,), lambda g: (g * out,))
    if isinstance(x, Dual):
        v = math.exp(x.value)
        return Dual(v, x.tangent * v)
    return np.exp(x)


def log(x):
    if isinstance(x, Var):
        if np.any(x.data <= 0.0):
            raise FloatingPointError("log of non-positive argument")
        return Var(np.log(x.data), (x,), lambda g: (g / x.data,))
    if isinstance(x, Dual):
        if x.value <= 0.0:
            raise FloatingPointError("log of non-positive argument")
        return Dual(math.log(x.value), x.tangent / x.value)
    if np.any(np.asarray(x) <= 0.0):
        raise FloatingPointError("log of non-positive argument")
    return np.log(x)


def softplus(x):
    # log(1 + exp(x)) via logaddexp; derivative is sigmoid(x)
    if isinstance(x, Var):
        return Var(np.logaddexp(0.0, x.data), (x,),
                   lambda g: (g * expit(x.data),))
    if isinstance(x, Dual):
        return Dual(np.logaddexp(0.0, x.value), x.tangent * expit(x.value))
    return np.logaddexp(0.0, x)


def sigmoid(x):
    if isinstance(x, Var):
        s = expit(x.data)
        return Var(s, (x,), lambda g: (g * s * (1.0 - s),))
    if isinstance(x, Dual):
        s = expit(x.value)
        return Dual(s, x.tangent * s * (1.0 - s))
    return expit(x)


def absval(x):
    # subgradient 0 at the kink
    if isinstance(x, Var):
        return Var(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))
    if isinstance(x, Dual):
        return Dual(abs(x.value), x.tangent * np.sign(x.value))
    return np.abs(x)


def maximum_const(x, c):
    """max(x, c) with constant c; derivative 0 on the clipped side."""
    c = float(c)
    if isinstance(x, Var):
        mask = (x.data > c).astype(np.float64)
        return Var(np.maximum(x.data, c), (x,), lambda g: (g * mask,))
    if isinstance(x, Dual):
        return Dual(max(x.value, c), x.tangent if x.value > c else 0.0)
    return np.maximum(x, c)


def matmul(a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        return _ensure(a) @ _ensure(b)
    return np.matmul(a, b)


def value_of(x):
    """Plain ndarray behind a Var (identity on ndarrays)."""
    return x.data if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# parameter store


class ParamStore:
    """Flat 64-bit parameter vector with named, disjoint slices.

    The slices cover the vector exactly; ``view(name)`` returns a writable
    reshaped view so in-place optimizer updates are reflected everywhere.
    """

    def __init__(self, layout):
        # layout: sequence of (name, shape)
        self._slices = {}
        offset = 0
        for name, shape in layout:
            size = int(np.prod(shape, dtype=int)) if shape else 1
            self._slices[name] = (offset, tuple(shape))
            offset += size
        self.values = np.zeros(offset, dtype=np.float64)
        self.grad = np.zeros(offset, dtype=np.float64)

    @property
    def names(self):
        return list(self._slices)

    @property
    def size(self):
        return self.values.size

    def slice_of(self, name):
        offset, shape = self._slices[name]
        size = int(np.prod(shape, dtype=int)) if shape else 1
        return slice(offset, offset + size)

    def shape_of(self, name):
        return self._slices[name][1]

    def view(self, name):
        offset, shape = self._slices[name]
        size = int(np.prod(shape, dtype=int)) if shape else 1
        return self.values[offset:offset + size].reshape(shape)

    def set(self, name, value):
        np.copyto(self.view(name), np.asarray(value, dtype=np.float64))

    def copy(self):
        other = ParamStore([(n, s[1]) for n, s in self._slices.items()])
        other.values[:] = self.values
        return other


def eval_with_param_grad(objective, params):
    """Value and full parameter gradient of a scalar objective.

    ``objective`` receives a dict mapping slice names to leaf ``Var`` nodes
    and must return a scalar ``Var`` built from the supported primitives.
    The gradient is written into ``params.grad`` and also returned.
    """
    leaves = {name: Var(params.view(name)) for name in params.names}
    out = objective(leaves)
    out.backward()
    params.grad[:] = 0.0
    for name, leaf in leaves.items():
        if leaf.grad is not None:
            params.grad[params.slice_of(name)] = leaf.grad.ravel()
    return float(out.data), params.grad.copy()


# ---------------------------------------------------------------------------
# input derivatives and the finite-difference oracle


def directional_input_derivative(f, x, d):
    """Exact directional derivative grad f(x) . d via one dual-number pass."""
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    seeded = [Dual(xi, di) for xi, di in zip(x, d)]
    out = f(seeded)
    return out.tangent if isinstance(out, Dual) else 0.0


def input_gradient(f, x):
    """Full input gradient of a scalar f, one dual pass per coordinate."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for j in range(x.size):
        d = np.zeros_like(x)
        d[j] = 1.0
        g[j] = directional_input_derivative(f, x, d)
    return g


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_index: int
    analytic: float
    numeric: float


def finite_difference_check(f, x, step=1e-5, grad=None):
    """Compare an analytic gradient against central finite differences.

    ``grad`` defaults to the dual-number gradient of ``f``.  Relative error
    uses denominator max(|analytic|, |numeric|, 1e-8) per component.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    analytic = np.asarray(grad(x) if grad is not None else input_gradient(f, x),
                          dtype=np.float64)
    report = GradCheckReport(0.0, 0, 0.0, 0.0)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        hi = f(list(x + e))
        lo = f(list(x - e))
        numeric = (float(hi) - float(lo)) / (2.0 * step)
        denom = max(abs(analytic[j]), abs(numeric), 1e-8)
        rel = abs(analytic[j] - numeric) / denom
        if rel >= report.max_rel_error:
            report = GradCheckReport(rel, j, float(analytic[j]), numeric)
    return report
