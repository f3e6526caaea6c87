"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray plus an optional gradient buffer; operations build a
dynamic graph that ``Tensor.backward`` walks in reverse topological order.
Everything runs in float64 and gradient accumulation follows the graph
construction order, so repeated runs with equal inputs are bit-identical.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy import special as _special

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording (inference mode)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def backward(self, grad=None):
        """Reverse-mode sweep from this node; seeds a scalar root with 1."""
        if self._backward_fn is None:
            raise RuntimeError(
                "backward called on a tensor with no recorded forward computation"
            )
        if grad is None:
            if self.data.size != 1:
                raise RuntimeError("backward on a non-scalar requires an explicit seed")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen and parent._backward_fn is not None:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            parent_grads = node._backward_fn(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None:
                    continue
                if parent._backward_fn is None:
                    # Graph leaf: accumulate straight into the buffer.
                    if parent.requires_grad:
                        parent.grad = pg if parent.grad is None else parent.grad + pg
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(
        p.requires_grad or p._backward_fn is not None for p in parents
    ):
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast up from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def pow_const(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _node(
        a.data**exponent,
        (a,),
        lambda g: (g * exponent * a.data ** (exponent - 1.0),),
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return _node(out_data, (a,), lambda g: (g * out_data,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),))


def erf(a) -> Tensor:
    a = as_tensor(a)
    coeff = 2.0 / math.sqrt(math.pi)
    return _node(
        _special.erf(a.data),
        (a,),
        lambda g: (g * coeff * np.exp(-a.data * a.data),),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(np.matmul(a.data, b.data), (a, b), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = tuple(np.argsort(axes))
    return _node(
        a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),)
    )


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def gather(table, ids) -> Tensor:
    """Row lookup table[ids]; the backward pass scatter-adds into the table."""
    table = as_tensor(table)
    ids = np.asarray(ids)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _node(table.data[ids], (table,), backward)


def gather_positions(h, idx) -> Tensor:
    """Batched positional lookup: out[b, w] = h[b, idx[b, w]].

    ``h`` is (B, L, H) and ``idx`` an integer (B, W) array.
    """
    h = as_tensor(h)
    idx = np.asarray(idx)
    batch = np.arange(h.shape[0])[:, None]

    def backward(g):
        gh = np.zeros_like(h.data)
        np.add.at(gh, (batch, idx), g)
        return (gh,)

    return _node(h.data[batch, idx], (h,), backward)


def getitem(a, key) -> Tensor:
    """Basic (slice-based) indexing with gradient support."""
    a = as_tensor(a)

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[key] = g
        return (ga,)

    return _node(a.data[key], (a,), backward)


# ---------------------------------------------------------------------------
# Composites


def softmax_lastaxis(logits, additive_mask=None) -> Tensor:
    """Row softmax over the last axis with an optional additive mask.

    The per-row maximum is subtracted as a detached constant, which leaves
    gradients unchanged and keeps exp() in range; entries carrying a large
    negative mask underflow to exactly zero probability.
    """
    logits = as_tensor(logits)
    z = add(logits, additive_mask) if additive_mask is not None else logits
    row_max = np.max(z.data, axis=-1, keepdims=True)
    e = exp(sub(z, Tensor(row_max)))
    total = tsum(e, axis=-1, keepdims=True)
    return mul(e, pow_const(total, -1.0))


def log_softmax_lastaxis(logits) -> Tensor:
    logits = as_tensor(logits)
    row_max = np.max(logits.data, axis=-1, keepdims=True)
    shifted = sub(logits, Tensor(row_max))
    total = tsum(exp(shifted), axis=-1, keepdims=True)
    return sub(shifted, log(total))


def layer_norm(x, scale, shift, eps: float = 1e-12) -> Tensor:
    """Normalize over the last axis, then apply a learned affine map."""
    x = as_tensor(x)
    mu = tmean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    inv_std = pow_const(add(var, Tensor(eps)), -0.5)
    return add(mul(mul(centered, inv_std), scale), shift)


def gelu(x) -> Tensor:
    """Gaussian error linear unit, exact erf form."""
    x = as_tensor(x)
    inner = erf(mul(x, 1.0 / math.sqrt(2.0)))
    return mul(mul(x, 0.5), add(inner, Tensor(1.0)))
