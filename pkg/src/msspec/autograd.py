"""A small reverse-mode differentiation tape over numpy arrays.

Only the operations the acoustic and duration models need are provided.
Every op records a closure that maps the output gradient to parent
gradients; :func:`backward` walks the graph in reverse topological order.
"""

from __future__ import annotations

import numpy as np

from msspec import kernels
from msspec.errors import NumericalError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


def _node(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, req, parents if req else (), backward if req else None)


def _accum(t: Tensor, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / linear algebra


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), bw)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        _accum(a, g * c)

    return _node(a.data * c, (a,), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), bw)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - out * out))

    return _node(out, (a,), bw)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        _accum(a, g * out * (1.0 - out))

    return _node(out, (a,), bw)


def linear(x, w, b=None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# ---------------------------------------------------------------------------
# shape ops


def concat(parts, axis=1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accum(p, piece)

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


def gather_rows(table, ids) -> Tensor:
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)

    def bw(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, ids, g)
            _accum(table, full)

    return _node(table.data[ids], (table,), bw)


def flip_rows(x) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        _accum(x, g[::-1])

    return _node(np.ascontiguousarray(x.data[::-1]), (x,), bw)


def segment_mean(x, counts) -> Tensor:
    """Mean over consecutive row blocks (``counts[i]`` rows in block ``i``)."""
    x = as_tensor(x)
    counts = np.asarray(counts, dtype=np.int64)

    def bw(g):
        _accum(x, np.repeat(g / counts[:, None].astype(g.dtype), counts, axis=0))

    return _node(kernels.segment_mean(x.data, counts), (x,), bw)


def repeat_rows(x, counts) -> Tensor:
    """Repeat row ``i`` ``counts[i]`` times."""
    x = as_tensor(x)
    counts = np.asarray(counts, dtype=np.int64)

    def bw(g):
        _accum(x, kernels.segment_sum(g, counts))

    return _node(np.repeat(x.data, counts, axis=0), (x,), bw)


def im2col(x, kernel: int) -> Tensor:
    """Stack each row with its ``kernel - 1`` neighbours (zero 'same' padding)."""
    x = as_tensor(x)
    n, c = x.shape
    pad = kernel // 2
    padded = np.zeros((n + kernel - 1, c), dtype=x.data.dtype)
    padded[pad : pad + n] = x.data
    cols = np.concatenate([padded[k : k + n] for k in range(kernel)], axis=1)

    def bw(g):
        gp = np.zeros_like(padded)
        for k in range(kernel):
            gp[k : k + n] += g[:, k * c : (k + 1) * c]
        _accum(x, gp[pad : pad + n])

    return _node(cols, (x,), bw)


def conv1d(x, w, b) -> Tensor:
    """1-D convolution over rows; ``w`` has shape ``(kernel, c_in, c_out)``."""
    w = as_tensor(w)
    k, c_in, c_out = w.shape
    cols = im2col(x, k) if k > 1 else as_tensor(x)
    w2 = reshape(w, (k * c_in, c_out))
    return add(matmul(cols, w2), b)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    orig = x.shape

    def bw(g):
        _accum(x, g.reshape(orig))

    return _node(x.data.reshape(shape), (x,), bw)


def lstm(xw, w_hh) -> Tensor:
    """Recurrence over rows of pre-projected inputs ``xw`` (N x 4H)."""
    xw, w_hh = as_tensor(xw), as_tensor(w_hh)
    hs, cs, gates = kernels.lstm_forward(xw.data, w_hh.data)

    def bw(g):
        dxw, dw = kernels.lstm_backward(g, w_hh.data, hs, cs, gates)
        _accum(xw, dxw)
        _accum(w_hh, dw)

    out = _node(hs, (xw, w_hh), bw)
    return out


# ---------------------------------------------------------------------------
# reductions / losses


def sum_all(x) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        _accum(x, np.full_like(x.data, g))

    return _node(np.asarray(x.data.sum()), (x,), bw)


def squared_error(pred, target, reduction: str = "mean") -> Tensor:
    """``mean`` / ``sum`` of squared residuals, or their L2 ``norm``."""
    pred = as_tensor(pred)
    target = as_tensor(target, dtype=pred.data.dtype)
    r = pred.data - target.data
    ss = float(np.sum(r * r))
    n = r.size
    if reduction == "mean":
        val = ss / n
        coef = 2.0 / n
    elif reduction == "sum":
        val = ss
        coef = 2.0
    elif reduction == "norm":
        val = np.sqrt(ss)
        coef = 1.0 / val if val > 0 else 0.0
    else:
        raise ValueError(f"unknown reduction {reduction!r}")

    def bw(g):
        _accum(pred, g * coef * r)
        _accum(target, -g * coef * r)

    return _node(np.asarray(val, dtype=pred.data.dtype), (pred, target), bw)


def add_scalars(terms) -> Tensor:
    terms = list(terms)
    out = terms[0]
    for t in terms[1:]:
        out = add(out, t)
    return out


# ---------------------------------------------------------------------------


def _topo(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, check_finite: bool = True):
    """Populate ``.grad`` on every tensor that ``loss`` depends on."""
    if loss.data.size != 1:
        raise ValueError("backward() needs a scalar loss")
    if not loss.requires_grad:
        return
    order = _topo(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if check_finite:
        for node in order:
            if not node._parents and node.grad is not None and not np.all(np.isfinite(node.grad)):
                raise NumericalError(f"non-finite gradient for {node.name or 'leaf tensor'}")
