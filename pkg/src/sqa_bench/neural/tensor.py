"""A small reverse-mode autodiff core over float64 numpy arrays.

Each op builds a Tensor holding its parents and a closure that pushes the
output gradient back to them. ``Tensor.backward`` runs the closures in reverse
topological order. Only the ops the span model needs are provided.
"""
from __future__ import annotations

import numpy as np

NEG_INF = -1e30


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    node.grad = None if node is not self else node.grad

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _result(data, parents, backward):
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, True, _parents=parents, _backward=backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _result(a.data + b.data, (a, b), backward)


def neg(a):
    def backward(g):
        _accum(a, -g)
    return _result(-a.data, (a,), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))
    return _result(a.data * b.data, (a, b), backward)


def matmul(a, b):
    """Matrix product for 2-D or batched 3-D operands (numpy semantics)."""
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            _accum(b, gb)
    return _result(a.data @ b.data, (a, b), backward)


def tanh(a):
    out = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - out * out))
    return _result(out, (a,), backward)


def sigmoid(a):
    out = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        _accum(a, g * out * (1.0 - out))
    return _result(out, (a,), backward)


def total(a, axis=None, keepdims=False):
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))
    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a):
    return mul(total(a), 1.0 / a.data.size)


def reshape(a, shape):
    def backward(g):
        _accum(a, g.reshape(a.shape))
    return _result(a.data.reshape(shape), (a,), backward)


def transpose(a, axes):
    inverse = np.argsort(axes)

    def backward(g):
        _accum(a, np.transpose(g, inverse))
    return _result(np.transpose(a.data, axes), (a,), backward)


def getitem(a, index):
    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accum(a, full)
    return _result(a.data[index], (a,), backward)


def take_rows(table, ids):
    """Row lookup ``table[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        _accum(table, full)
    return _result(table.data[ids], (table,), backward)


def gather_time(x, idx):
    """Per-row reordering along axis 1: ``out[b, t] = x[b, idx[b, t]]``."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(x.shape[0])[:, None]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, idx), g)
        _accum(x, full)
    return _result(x.data[rows, idx], (x,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _accum(t, piece)
    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                   backward)


def max_over(a, axis):
    """Max along ``axis``; the gradient goes to the first argmax only."""
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        _accum(a, full)
    return _result(out, (a,), backward)


def log_softmax(a, mask=None, axis=-1):
    """Log-softmax along ``axis``; ``mask`` (bool, True = keep) removes entries."""
    x = a.data if mask is None else np.where(mask, a.data, NEG_INF)
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        if mask is not None:
            g = np.where(mask, g, 0.0)
        grad = g - probs * g.sum(axis=axis, keepdims=True)
        if mask is not None:
            grad = np.where(mask, grad, 0.0)
        _accum(a, grad)
    return _result(out, (a,), backward)


def softmax(a, mask=None, axis=-1):
    x = a.data if mask is None else np.where(mask, a.data, NEG_INF)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        grad = out * (g - (g * out).sum(axis=axis, keepdims=True))
        if mask is not None:
            grad = np.where(mask, grad, 0.0)
        _accum(a, grad)
    return _result(out, (a,), backward)


def dropout(a, rate, rng, train):
    """Inverted dropout; identity outside training or at rate 0."""
    if not train or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)


def rnn_tanh(xw, U):
    """Elman recurrence ``h_t = tanh(xw_t + h_{t-1} U)`` from a zero state.

    ``xw`` is (B, T, H) with input projection and bias already applied.
    Fused into one node with hand-written backprop through time.
    """
    B, T, H = xw.shape
    hs = np.empty((B, T, H))
    h = np.zeros((B, H))
    for t in range(T):
        h = np.tanh(xw.data[:, t] + h @ U.data)
        hs[:, t] = h

    def backward(g):
        dxw = np.empty_like(hs)
        dU = np.zeros_like(U.data)
        carry = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            da = (g[:, t] + carry) * (1.0 - hs[:, t] ** 2)
            dxw[:, t] = da
            if t > 0:
                dU += hs[:, t - 1].T @ da
            carry = da @ U.data.T
        _accum(xw, dxw)
        _accum(U, dU)
    return _result(hs, (xw, U), backward)
