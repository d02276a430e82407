"""Tiny reverse-mode automatic differentiation engine on numpy.

Tensors wrap float64 arrays and record the operation that produced them;
``backward()`` on a scalar fills ``.grad`` on every upstream tensor with
``requires_grad``. Only the operations the agents actually use are
implemented, each with an explicit vector-Jacobian product.
"""

from __future__ import annotations

import numpy as np

_grad_enabled = True


class no_grad:
    """Context manager that suspends graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled():
    return _grad_enabled


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # -- graph -----------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._vjp is None:
                continue
            grads = node._vjp(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return _op(np.negative(self.data), (self,), lambda g: (-g,))

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        return mul(self, other ** -1.0)

    def __pow__(self, p):
        assert isinstance(p, (int, float))
        out = self.data ** p
        return _op(out, (self,), lambda g: (g * p * self.data ** (p - 1),))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        data = self.data[key]

        def vjp(g):
            full = np.zeros_like(self.data)
            full[key] = g
            return (full,)

        return _op(data, (self,), vjp)

    # -- shape ops -----------------------------------------------------------

    def reshape(self, shape):
        old = self.data.shape
        return _op(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def swapaxes(self, a, b):
        return _op(self.data.swapaxes(a, b), (self,), lambda g: (g.swapaxes(a, b),))

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, shape).copy(),)

        return _op(out, (self,), vjp)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- elementwise ----------------------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return _op(out, (self,), lambda g: (g * out,))

    def log(self):
        return _op(np.log(self.data), (self,), lambda g: (g / self.data,))

    def sqrt(self):
        out = np.sqrt(self.data)
        return _op(out, (self,), lambda g: (g * 0.5 / out,))

    def tanh(self):
        out = np.tanh(self.data)
        return _op(out, (self,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self):
        out = 1.0 / (1.0 + np.exp(-self.data))
        return _op(out, (self,), lambda g: (g * out * (1.0 - out),))

    def relu(self):
        mask = self.data > 0
        return _op(np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,))


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(data, parents, vjp):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _op(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    out = A @ B

    def vjp(g):
        if A.ndim == 1 and B.ndim == 2:
            return g @ B.T, np.outer(A, g)
        if B.ndim == 2:
            ga = g @ B.T
            gb = A.reshape(-1, A.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
        if A.ndim >= 2 and B.ndim >= 2:
            ga = _unbroadcast(g @ B.swapaxes(-1, -2), A.shape)
            gb = _unbroadcast(A.swapaxes(-1, -2) @ g, B.shape)
            return ga, gb
        raise NotImplementedError(f"matmul vjp for {A.shape} @ {B.shape}")

    return _op(out, (a, b), vjp)


def embedding(table, ids):
    """Row lookup `table[ids]`; ids is an integer ndarray, not a Tensor."""
    ids = np.asarray(ids)
    out = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _op(out, (table,), vjp)


def select(x, axis, index):
    """Take a single index along `axis`, dropping that axis."""
    data = np.take(x.data, index, axis=axis)
    key = tuple(index if i == axis else slice(None) for i in range(x.data.ndim))

    def vjp(g):
        full = np.zeros_like(x.data)
        full[key] = g
        return (full,)

    return _op(data, (x,), vjp)


def take_last_axis(x, ids):
    """Pick one entry per row along the last axis: out[...] = x[..., ids[...]]."""
    ids = np.asarray(ids)
    out = np.take_along_axis(x.data, ids[..., None], axis=-1)[..., 0]

    def vjp(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, ids[..., None], g[..., None], axis=-1)
        return (full,)

    return _op(out, (x,), vjp)


def concat(tensors, axis):
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _op(out, tuple(tensors), vjp)


def log_softmax(x):
    """Numerically stable log-softmax over the last axis."""
    m = x.data.max(axis=-1, keepdims=True)
    s = x.data - m
    lse = np.log(np.exp(s).sum(axis=-1, keepdims=True))
    out = s - lse

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _op(out, (x,), vjp)


def softmax(x):
    m = x.data.max(axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _op(out, (x,), vjp)


def dropout(x, p, rng, training):
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p <= 0.0:
        return x
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(mask))
