"""Minimal reverse-mode differentiation over float64 numpy arrays.

Each op builds a node holding its inputs and a closure that routes the
output gradient back to them.  ``Tensor.backward()`` topologically sorts
the graph and accumulates gradients into every tensor with
``requires_grad``.  The op set is exactly what the forecasting model
needs; everything is double precision so analytic gradients can be
checked against central finite differences tightly.
"""

from __future__ import annotations

import numpy as np


def _fast_tanh(x: np.ndarray) -> np.ndarray:
    # one exp instead of libm tanh; agrees with np.tanh to ~1 ulp
    e = np.exp(-2.0 * np.abs(x))
    return np.copysign((1.0 - e) / (1.0 + e), x)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    req = a.requires_grad or b.requires_grad
    out = Tensor(a.data + b.data, requires_grad=req, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    out._backward = bw
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    req = a.requires_grad or b.requires_grad
    out = Tensor(a.data * b.data, requires_grad=req, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    out._backward = bw
    return out


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ValueError("matmul supports (n,k) @ (k,m) or (n,k) @ (k,)")
    req = a.requires_grad or b.requires_grad
    out = Tensor(a.data @ b.data, requires_grad=req, parents=(a, b))

    def bw(g):
        if b.data.ndim == 1:
            if a.requires_grad:
                a._accum(np.outer(g, b.data))
            if b.requires_grad:
                b._accum(a.data.T @ g)
        else:
            if a.requires_grad:
                a._accum(g @ b.data.T)
            if b.requires_grad:
                b._accum(a.data.T @ g)

    out._backward = bw
    return out


def getitem(a, idx) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data[idx], requires_grad=a.requires_grad, parents=(a,))

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[idx] += g
            a._accum(full)

    out._backward = bw
    return out


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.reshape(shape), requires_grad=a.requires_grad, parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g.reshape(a.data.shape))

    out._backward = bw
    return out


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.transpose(axes), requires_grad=a.requires_grad, parents=(a,))

    def bw(g):
        if a.requires_grad:
            inv = None if axes is None else np.argsort(axes)
            a._accum(g.transpose(inv))

    out._backward = bw
    return out


def concat(tensors, axis=0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    req = any(t.requires_grad for t in tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 requires_grad=req, parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def bw(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offset, offset + size)
                t._accum(g[tuple(sl)])
            offset += size

    out._backward = bw
    return out


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims),
                 requires_grad=a.requires_grad, parents=(a,))

    def bw(g):
        if a.requires_grad:
            if axis is None:
                a._accum(np.broadcast_to(g, a.data.shape))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accum(np.broadcast_to(gg, a.data.shape))

    out._backward = bw
    return out


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def tanh(a) -> Tensor:
    a = _wrap(a)
    y = _fast_tanh(a.data)
    out = Tensor(y, requires_grad=a.requires_grad, parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g * (1.0 - y * y))

    out._backward = bw
    return out


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    y = _stable_sigmoid(a.data)
    out = Tensor(y, requires_grad=a.requires_grad, parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g * y * (1.0 - y))

    out._backward = bw
    return out


def exp(a) -> Tensor:
    a = _wrap(a)
    y = np.exp(a.data)
    out = Tensor(y, requires_grad=a.requires_grad, parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g * y)

    out._backward = bw
    return out


def log(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.log(a.data), requires_grad=a.requires_grad, parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g / a.data)

    out._backward = bw
    return out


def softmax(a, axis=-1) -> Tensor:
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, requires_grad=a.requires_grad, parents=(a,))

    def bw(g):
        if a.requires_grad:
            inner = (g * y).sum(axis=axis, keepdims=True)
            a._accum(y * (g - inner))

    out._backward = bw
    return out


def bce_with_logits(logits, targets) -> Tensor:
    """Elementwise binary cross entropy on raw scores, numerically stable."""
    z = _wrap(logits)
    y = np.asarray(targets, dtype=np.float64)
    data = np.maximum(z.data, 0.0) - z.data * y + np.log1p(np.exp(-np.abs(z.data)))
    out = Tensor(data, requires_grad=z.requires_grad, parents=(z,))

    def bw(g):
        if z.requires_grad:
            z._accum(g * (_stable_sigmoid(z.data) - y))

    out._backward = bw
    return out


def bce(p: float, y: float) -> float:
    """Binary cross entropy of a probability against a 0/1 label."""
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie strictly inside (0, 1)")
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
