"""A small reverse-mode autodiff tensor over float64 numpy arrays.

Only the operations the policy, value and Q networks need are provided. Every
op checks its output for NaN/Inf and raises :class:`NumericError`, so a
diverging run fails at the op that produced the bad value.
"""

from contextlib import contextmanager

import numpy as np

from .. import kernels


class NumericError(FloatingPointError):
    """A tensor operation produced a non-finite value."""


class UsageError(RuntimeError):
    pass


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check(out, name):
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite value produced by {name}")
    return out


def _unbroadcast(grad, shape):
    # sum out the axes numpy broadcast over
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf's ``.grad``."""
        if not self.requires_grad:
            raise UsageError("backward() on a tensor that was not recorded on a tape")
        if grad is None:
            if self.data.size != 1:
                raise UsageError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(out, parents, backward, name):
    out = Tensor(_check(out, name))
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def add(a, b):
    a, b = tensor(a), tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = tensor(a), tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    a, b = tensor(a), tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
                 "mul")


def matmul(a, b):
    """``a @ b`` for ``a`` of any rank >= 1 and 2-D ``b``."""
    a, b = tensor(a), tensor(b)
    ad, bd = a.data, b.data
    if bd.ndim != 2:
        raise ValueError("right operand of matmul must be 2-D")

    def back(g):
        ga = g @ bd.T
        a2 = ad.reshape(-1, ad.shape[-1])
        gb = a2.T @ g.reshape(-1, bd.shape[1])
        return ga, gb

    return _make(ad @ bd, (a, b), back, "matmul")


def relu(a):
    ad = a.data
    mask = ad > 0
    return _make(np.where(mask, ad, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a):
    s = 0.5 * np.tanh(0.5 * a.data) + 0.5
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a):
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def exp(a):
    e = np.exp(a.data)
    return _make(e, (a,), lambda g: (g * e,), "exp")


def log(a):
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def square(a):
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), back, "sum")


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def getitem(a, idx):
    shape = a.shape

    def back(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _make(a.data[idx], (a,), back, "getitem")


def concat(tensors, axis=-1):
    tensors = [tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), back, "concat")


def stack(tensors, axis=0):
    tensors = [tensor(t) for t in tensors]

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), back, "stack")


def minimum(a, b):
    a, b = tensor(a), tensor(b)
    pick_a = a.data <= b.data
    return _make(np.minimum(a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape),
                            _unbroadcast(g * ~pick_a, b.shape)), "minimum")


def clip(a, lo, hi):
    ad = a.data
    inside = (ad >= lo) & (ad <= hi)
    return _make(np.clip(ad, lo, hi), (a,), lambda g: (g * inside,), "clip")


def log_softmax(a, mask=None, axis=-1):
    """Log-softmax along ``axis``; entries where ``mask`` is False get -inf-like
    logits so their probability is exactly zero."""
    x = a.data
    if mask is not None:
        x = np.where(mask, x, -1e300)
    m = np.max(x, axis=axis, keepdims=True)
    z = x - m
    e = np.exp(z)
    s = e.sum(axis=axis, keepdims=True)
    out = z - np.log(s)
    p = e / s
    if mask is not None:
        out = np.where(mask, out, 0.0)

    def back(g):
        if mask is not None:
            g = np.where(mask, g, 0.0)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), back, "log_softmax")


def softmax(a, mask=None, axis=-1):
    x = a.data
    if mask is not None:
        x = np.where(mask, x, -1e300)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _make(p, (a,), back, "softmax")


def lstm_pointwise(gates, c_prev):
    """Fused LSTM gate activations and cell update.

    Returns ``hc`` of shape (B, 2d): hidden state then cell state. Uses the
    compiled kernel when available.
    """
    gates, c_prev = tensor(gates), tensor(c_prev)
    cp = c_prev.data
    h, c, act, tanh_c = kernels.lstm_pointwise_forward(gates.data, cp)
    d = cp.shape[1]

    def back(g):
        return kernels.lstm_pointwise_backward(act, tanh_c, cp, g[:, :d], g[:, d:])

    return _make(np.concatenate([h, c], axis=1), (gates, c_prev), back, "lstm_pointwise")
