"""Reverse-mode automatic differentiation over numpy arrays.

Every operation on a :class:`Tensor` that involves at least one input with
``requires_grad`` records a node holding its parents and a closure that maps
the output gradient to input gradients. The recorded graph is the tape;
:func:`backward` walks it in reverse topological order.

All arrays are float64.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = [True]

class TapeError(RuntimeError):
    """Raised when backward is requested on a value with no recorded operations."""


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    # sum out dimensions that were broadcast in the forward pass
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    # -- construction helpers -------------------------------------------------
    @staticmethod
    def _make(data, parents, backward):
        out = Tensor(data)
        if _GRAD_ENABLED[0] and any(p.requires_grad for p in parents):
            out.requires_grad = True
            # parents that are frozen now stay frozen for this node's backward pass
            out._parents = tuple(p if p.requires_grad else _CONSTANT for p in parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return self.transpose()

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = _lift(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor._make(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = _lift(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return Tensor._make(a.data - b.data, (a, b), bw)

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return Tensor._make(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _lift(other)
        a, b = self, other

        def bw(g):
            ga = g / b.data
            return _unbroadcast(ga, a.shape), _unbroadcast(-ga * a.data / b.data, b.shape)

        return Tensor._make(a.data / b.data, (a, b), bw)

    def __rtruediv__(self, other):
        return _lift(other) / self

    def __neg__(self):
        a = self
        return Tensor._make(-a.data, (a,), lambda g: (-g,))

    def __pow__(self, p):
        if isinstance(p, Tensor):
            raise TypeError("only constant exponents are supported")
        a = self
        p = float(p)

        def bw(g):
            return (g * p * a.data ** (p - 1.0),)

        return Tensor._make(a.data**p, (a,), bw)

    def __matmul__(self, other):
        other = _lift(other)
        a, b = self, other

        need_a, need_b = a.requires_grad, b.requires_grad

        def bw(g):
            # skip the side that is constant, typically the input batch
            ga = gb = None
            if need_a:
                ga = g @ np.swapaxes(b.data, -1, -2) if b.ndim > 1 else np.outer(g, b.data)
                ga = _unbroadcast(ga, a.shape)
            if need_b:
                gb = np.swapaxes(a.data, -1, -2) @ g if a.ndim > 1 else np.outer(a.data, g)
                gb = _unbroadcast(gb, b.shape)
            return ga, gb

        return Tensor._make(a.data @ b.data, (a, b), bw)

    def __rmatmul__(self, other):
        return _lift(other) @ self

    def __getitem__(self, idx):
        a = self
        if isinstance(idx, Tensor):
            idx = idx.data.astype(np.int64)

        def bw(g):
            out = np.zeros_like(a.data)
            np.add.at(out, idx, g)
            return (out,)

        return Tensor._make(a.data[idx], (a,), bw)

    # -- shape ops ------------------------------------------------------------
    def reshape(self, *shape):
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))

    def transpose(self, *axes):
        a = self
        axes = axes or None
        inv = None if axes is None else tuple(np.argsort(axes))
        return Tensor._make(
            np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),)
        )

    def sum(self, axis=None, keepdims=False):
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[i] for i in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- elementwise nonlinearities ------------------------------------------
    def exp(self):
        a = self
        out = np.exp(a.data)
        return Tensor._make(out, (a,), lambda g: (g * out,))

    def log(self):
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: (g / a.data,))

    def sqrt(self):
        a = self
        out = np.sqrt(a.data)
        return Tensor._make(out, (a,), lambda g: (g * 0.5 / out,))

    def tanh(self):
        a = self
        out = np.tanh(a.data)
        return Tensor._make(out, (a,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self):
        a = self
        out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
        return Tensor._make(out, (a,), lambda g: (g * out * (1.0 - out),))

    def relu(self):
        a = self
        mask = a.data > 0
        return Tensor._make(a.data * mask, (a,), lambda g: (g * mask,))

    def elu(self):
        a = self
        neg = np.expm1(np.minimum(a.data, 0.0))
        pos = a.data > 0
        out = np.where(pos, a.data, neg)
        return Tensor._make(out, (a,), lambda g: (g * np.where(pos, 1.0, neg + 1.0),))

    def softplus(self):
        a = self
        out = np.logaddexp(0.0, a.data)
        sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
        return Tensor._make(out, (a,), lambda g: (g * sig,))

    def sin(self):
        a = self
        return Tensor._make(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))

    def cos(self):
        a = self
        return Tensor._make(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))

    def square(self):
        a = self
        return Tensor._make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))

    def clip(self, lo, hi):
        """Clamp values; gradient passes only where the input was inside ``[lo, hi]``."""
        a = self
        inside = (a.data >= lo) & (a.data <= hi)
        return Tensor._make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))

    def logsumexp(self, axis=-1, keepdims=False):
        a = self
        m = np.max(a.data, axis=axis, keepdims=True)
        e = np.exp(a.data - m)
        s = e.sum(axis=axis, keepdims=True)
        out = np.log(s) + m
        soft = e / s

        def bw(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (g * soft,)

        if not keepdims:
            out = np.squeeze(out, axis=axis)
        return Tensor._make(out, (a,), bw)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def minimum(a, b):
    """Elementwise minimum; ties send the gradient to ``a``."""
    a, b = _lift(a), _lift(b)
    pick_a = a.data <= b.data

    def bw(g):
        return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)

    return Tensor._make(np.where(pick_a, a.data, b.data), (a, b), bw)


def maximum(a, b):
    a, b = _lift(a), _lift(b)
    pick_a = a.data >= b.data

    def bw(g):
        return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)

    return Tensor._make(np.where(pick_a, a.data, b.data), (a, b), bw)


def concat(tensors, axis=-1):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw
    )


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    a, b = _lift(a), _lift(b)

    def bw(g):
        return _unbroadcast(np.where(cond, g, 0.0), a.shape), _unbroadcast(
            np.where(cond, 0.0, g), b.shape
        )

    return Tensor._make(np.where(cond, a.data, b.data), (a, b), bw)


@contextmanager
def no_grad():
    """Evaluate without recording operations (inference and target computations)."""
    prev = _GRAD_ENABLED[0]
    _GRAD_ENABLED[0] = False
    try:
        yield
    finally:
        _GRAD_ENABLED[0] = prev


_CONSTANT = Tensor(0.0)


def _topological(root):
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output, output_grad=None):
    """Accumulate d(output)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    ``output_grad`` defaults to ones (so a scalar loss gets gradient 1).
    Gradients are accumulated, not overwritten; zero them between steps.
    """
    if output._backward is None:
        raise TapeError(
            "backward called on a value with no recorded operations; "
            "run a forward pass on parameters that require gradients first"
        )
    g0 = np.ones_like(output.data) if output_grad is None else _as_array(output_grad)
    if g0.shape != output.shape:
        raise ValueError(f"output_grad shape {g0.shape} != output shape {output.shape}")
    grads = {id(output): g0}
    for node in reversed(_topological(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
