"""A small reverse-mode autodiff engine over numpy arrays.

Each op records its parents and a closure that maps the output gradient to
parent gradients. ``Tensor.backward`` walks the graph in reverse topological
order and accumulates ``.grad`` on every node that requires it.
"""

from __future__ import annotations

import numpy as np


class GraphError(RuntimeError):
    pass


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __array_priority__ = 100.0

    def __init__(self, values, requires_grad: bool = False, _parents=(), _backward=None, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def item(self) -> float:
        return float(self.values)

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if self._backward is None and not self.requires_grad:
            raise GraphError("tensor is not part of a recorded graph")
        if grad is None:
            if self.values.size != 1:
                raise GraphError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.values)
        order, seen = [], set()

        def visit(node):
            # iterative DFS; graphs from deep unrolled losses overflow recursion
            stack = [(node, False)]
            while stack:
                n, done = stack.pop()
                if done:
                    order.append(n)
                    continue
                if id(n) in seen:
                    continue
                seen.add(id(n))
                stack.append((n, True))
                for p in n._parents:
                    if id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _needs_grad(parent):
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        return _op(
            self.values + other.values,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        return _op(
            self.values - other.values,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)),
        )

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __neg__(self):
        return _op(-self.values, (self,), lambda g: (-g,))

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.values, other.values
        return _op(
            a * b,
            (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.values, other.values
        out = a / b
        return _op(
            out,
            (self, other),
            lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * out / b, b.shape)),
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, p: float):
        a = self.values
        return _op(a**p, (self,), lambda g: (g * p * a ** (p - 1),))

    def __getitem__(self, idx):
        a = self.values

        def back(g):
            full = np.zeros_like(a)
            if _is_basic_index(idx):
                full[idx] = g
            else:
                np.add.at(full, idx, g)
            return (full,)

        return _op(a[idx], (self,), back)

    # elementwise ----------------------------------------------------------
    def exp(self):
        out = np.exp(self.values)
        return _op(out, (self,), lambda g: (g * out,))

    def log(self):
        a = self.values
        return _op(np.log(a), (self,), lambda g: (g / a,))

    def sqrt(self):
        out = np.sqrt(self.values)
        return _op(out, (self,), lambda g: (0.5 * g / out,))

    def sigmoid(self):
        out = 0.5 * (1.0 + np.tanh(0.5 * self.values))
        return _op(out, (self,), lambda g: (g * out * (1.0 - out),))

    def clip_min(self, floor: float):
        """max(x, floor); gradient passes only where x > floor."""
        a = self.values
        keep = a > floor
        return _op(np.where(keep, a, floor), (self,), lambda g: (g * keep,))

    # reductions -----------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        a = self.values

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return _op(a.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims=False):
        n = self.values.size if axis is None else self.values.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        old = self.shape
        return _op(self.values.reshape(*shape), (self,), lambda g: (g.reshape(old),))


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, slice, type(Ellipsis), type(None))) for p in parts)


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _op(values, parents, backward) -> Tensor:
    if any(_needs_grad(p) for p in parents):
        return Tensor(values, _parents=parents, _backward=backward)
    return Tensor(values)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(values, name=None) -> Tensor:
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True, name=name)


def conv1d_causal(x: Tensor, weight: Tensor, bias: Tensor, dilation: int = 1) -> Tensor:
    """Causal dilated 1-D convolution.

    x: (B, C_in, T); weight: (C_out, C_in, K); bias: (C_out,).
    Output frame t sees input frames t - (K-1-k)*dilation for k in 0..K-1.
    """
    xv, wv = x.values, weight.values
    n_batch, _, n_t = xv.shape
    kernel = wv.shape[2]
    pad = (kernel - 1) * dilation
    xp = np.concatenate([np.zeros((n_batch, xv.shape[1], pad)), xv], axis=2) if pad else xv
    out = np.zeros((n_batch, wv.shape[0], n_t))
    for k in range(kernel):
        out += np.matmul(wv[:, :, k], xp[:, :, k * dilation : k * dilation + n_t])
    out += bias.values[None, :, None]

    def back(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(wv)
        for k in range(kernel):
            sl = slice(k * dilation, k * dilation + n_t)
            gxp[:, :, sl] += np.matmul(wv[:, :, k].T, g)
            gw[:, :, k] = np.einsum("bot,bct->oc", g, xp[:, :, sl])
        return gxp[:, :, pad:], gw, g.sum(axis=(0, 2))

    return _op(out, (x, weight, bias), back)


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Parametric ReLU with a single learned negative slope."""
    xv = x.values
    a = slope.values
    neg = xv < 0
    out = np.where(neg, a * xv, xv)

    def back(g):
        return np.where(neg, a * g, g), np.sum(g * xv * neg).reshape(a.shape)

    return _op(out, (x, slope), back)
