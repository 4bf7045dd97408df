"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Var`` wraps an ndarray and records, per producing operation, its
parents together with vector-Jacobian closures. ``backward`` walks the
recorded tape in reverse creation order, which is a valid topological
order because the graph is built strictly forward. Everything runs in
float64 and is deterministic.

Only the operations the regression model needs are provided; geometric
inputs enter the graph as constants, so all differentiable paths here
are smooth.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var",
    "constant",
    "concat",
    "take",
    "segment_sum",
    "vsum",
    "mean_all",
    "tanh",
    "sigmoid",
    "silu",
    "exp",
    "sqrt",
    "square",
    "layer_norm",
    "softmax_vec",
    "backward",
]


class Var:
    """A node in the computation graph holding a float64 ndarray."""

    __slots__ = ("value", "parents", "grad", "_order")

    _counter = 0

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        # parents: tuple of (Var, vjp) where vjp maps the output gradient
        # to this parent's gradient contribution.
        self.parents = parents
        self.grad = None
        Var._counter += 1
        self._order = Var._counter

    @property
    def shape(self):
        return self.value.shape

    # ---- arithmetic -------------------------------------------------

    def __add__(self, other):
        other = _as_var(other)
        a, b = self, other
        return Var(
            a.value + b.value,
            (
                (a, lambda g: _unbroadcast(g, a.value.shape)),
                (b, lambda g: _unbroadcast(g, b.value.shape)),
            ),
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_var(other)
        a, b = self, other
        return Var(
            a.value - b.value,
            (
                (a, lambda g: _unbroadcast(g, a.value.shape)),
                (b, lambda g: _unbroadcast(-g, b.value.shape)),
            ),
        )

    def __rsub__(self, other):
        return _as_var(other).__sub__(self)

    def __mul__(self, other):
        other = _as_var(other)
        a, b = self, other
        return Var(
            a.value * b.value,
            (
                (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
                (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_var(other)
        a, b = self, other
        return Var(
            a.value / b.value,
            (
                (a, lambda g: _unbroadcast(g / b.value, a.value.shape)),
                (b, lambda g: _unbroadcast(-g * a.value / b.value**2, b.value.shape)),
            ),
        )

    def __rtruediv__(self, other):
        return _as_var(other).__truediv__(self)

    def __neg__(self):
        a = self
        return Var(-a.value, ((a, lambda g: -g),))

    def __matmul__(self, other):
        other = _as_var(other)
        a, b = self, other
        return Var(
            a.value @ b.value,
            (
                (a, lambda g: g @ b.value.T),
                (b, lambda g: a.value.T @ g),
            ),
        )


def _as_var(x):
    return x if isinstance(x, Var) else Var(x)


def constant(x) -> Var:
    """Wrap an array as a graph leaf (gradients still accumulate, unused)."""
    return Var(x)


def _unbroadcast(grad, shape):
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---- structural ops -------------------------------------------------


def concat(parts, axis=-1) -> Var:
    parts = [_as_var(p) for p in parts]
    values = [p.value for p in parts]
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            index = [slice(None)] * g.ndim
            index[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
            return g[tuple(index)]

        return vjp

    return Var(
        np.concatenate(values, axis=axis),
        tuple((p, make_vjp(i)) for i, p in enumerate(parts)),
    )


def take(x: Var, idx) -> Var:
    """Row gather: out[k] = x[idx[k]]."""
    x = _as_var(x)
    idx = np.asarray(idx, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return out

    return Var(x.value[idx], ((x, vjp),))


def segment_sum(x: Var, segment_ids, num_segments: int) -> Var:
    """Scatter-add rows of ``x`` into ``num_segments`` buckets."""
    x = _as_var(x)
    seg = np.asarray(segment_ids, dtype=np.intp)
    out = np.zeros((num_segments,) + x.value.shape[1:])
    np.add.at(out, seg, x.value)
    return Var(out, ((x, lambda g: g[seg]),))


def vsum(x: Var, axis=None, keepdims=False) -> Var:
    x = _as_var(x)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, x.value.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, x.value.shape).copy()

    return Var(x.value.sum(axis=axis, keepdims=keepdims), ((x, vjp),))


def mean_all(x: Var) -> Var:
    x = _as_var(x)
    n = x.value.size
    return vsum(x) * (1.0 / n)


# ---- elementwise nonlinearities -------------------------------------


def tanh(x: Var) -> Var:
    x = _as_var(x)
    t = np.tanh(x.value)
    return Var(t, ((x, lambda g: g * (1.0 - t * t)),))


def sigmoid(x: Var) -> Var:
    x = _as_var(x)
    s = _sigmoid(x.value)
    return Var(s, ((x, lambda g: g * s * (1.0 - s)),))


def silu(x: Var) -> Var:
    x = _as_var(x)
    s = _sigmoid(x.value)
    return Var(x.value * s, ((x, lambda g: g * s * (1.0 + x.value * (1.0 - s))),))


def exp(x: Var) -> Var:
    x = _as_var(x)
    e = np.exp(x.value)
    return Var(e, ((x, lambda g: g * e),))


def sqrt(x: Var) -> Var:
    x = _as_var(x)
    r = np.sqrt(x.value)
    return Var(r, ((x, lambda g: g * 0.5 / r),))


def square(x: Var) -> Var:
    return x * x


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


# ---- composites ------------------------------------------------------


def layer_norm(x: Var, gain: Var, bias: Var, eps: float = 1e-5) -> Var:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.value.shape[-1]
    mu = vsum(x, axis=-1, keepdims=True) * (1.0 / d)
    xc = x - mu
    var = vsum(square(xc), axis=-1, keepdims=True) * (1.0 / d)
    inv = 1.0 / sqrt(var + eps)
    return xc * inv * gain + bias


def softmax_vec(x: Var) -> Var:
    """Softmax of a 1-D vector; the max-shift constant is detached."""
    shift = float(np.max(x.value))
    e = exp(x - shift)
    return e / vsum(e)


# ---- backward pass ---------------------------------------------------


def backward(root: Var) -> None:
    """Accumulate gradients of scalar ``root`` into every reachable Var."""
    if root.value.size != 1:
        raise ValueError("backward expects a scalar root")
    # Collect the reachable subgraph and process in reverse creation
    # order; creation order is a topological order by construction.
    seen = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node._order in seen:
            continue
        seen[node._order] = node
        for parent, _ in node.parents:
            if parent._order not in seen:
                stack.append(parent)
    root.grad = np.ones_like(root.value)
    for order in sorted(seen, reverse=True):
        node = seen[order]
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad = parent.grad + contrib
