"""Minimal dense-tensor reverse-mode autodiff on float64 numpy arrays.

The computation graph is define-by-run: each operation records its parents
and a closure that accumulates adjoints. ``backward`` topologically sorts
the reachable graph and visits every node exactly once in reverse order,
with a deterministic reduction order, so repeated passes over the same
graph are bitwise identical.
"""

from __future__ import annotations

import numpy as np

from . import special

__all__ = ["Tensor", "parameter", "concat", "backward"]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
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


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing -------------------------------------------------

    @staticmethod
    def _lift(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def _track(self, *parents) -> bool:
        return any(p.requires_grad or p._parents for p in parents)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss node")
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
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._vjp is not None:
                node._vjp(node.grad)

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        out = Tensor(self.data + other.data, _parents=(self, other))

        def vjp(g):
            self.grad += _unbroadcast(g, self.data.shape)
            other.grad += _unbroadcast(g, other.data.shape)

        out._vjp = vjp
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, _parents=(self,))
        out._vjp = lambda g: self.grad.__iadd__(-g)
        return out

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        out = Tensor(self.data * other.data, _parents=(self, other))

        def vjp(g):
            self.grad += _unbroadcast(g * other.data, self.data.shape)
            other.grad += _unbroadcast(g * self.data, other.data.shape)

        out._vjp = vjp
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        out = Tensor(self.data / other.data, _parents=(self, other))

        def vjp(g):
            self.grad += _unbroadcast(g / other.data, self.data.shape)
            other.grad += _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)

        out._vjp = vjp
        return out

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, exponent: float):
        out = Tensor(self.data**exponent, _parents=(self,))
        out._vjp = lambda g: self.grad.__iadd__(g * exponent * self.data ** (exponent - 1))
        return out

    def __matmul__(self, other):
        other = self._lift(other)
        out = Tensor(self.data @ other.data, _parents=(self, other))

        def vjp(g):
            self.grad += g @ other.data.T
            other.grad += self.data.T @ g

        out._vjp = vjp
        return out

    # -- reductions and shape ops --------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,))

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.data.shape)

        out._vjp = vjp
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), _parents=(self,))
        out._vjp = lambda g: self.grad.__iadd__(g.reshape(self.data.shape))
        return out

    def __getitem__(self, key):
        out = Tensor(self.data[key], _parents=(self,))

        def vjp(g):
            acc = np.zeros_like(self.data)
            np.add.at(acc, key, g)
            self.grad += acc

        out._vjp = vjp
        return out

    # -- elementwise nonlinearities ------------------------------------

    def exp(self):
        out = Tensor(np.exp(self.data), _parents=(self,))
        out._vjp = lambda g: self.grad.__iadd__(g * out.data)
        return out

    def log(self):
        out = Tensor(np.log(self.data), _parents=(self,))
        out._vjp = lambda g: self.grad.__iadd__(g / self.data)
        return out

    def softplus(self):
        out = Tensor(special.softplus(self.data), _parents=(self,))
        # d softplus = sigmoid, computed overflow-safe
        out._vjp = lambda g: self.grad.__iadd__(g * np.exp(self.data - out.data))
        return out

    def leaky_relu(self, slope: float = 0.01):
        out = Tensor(np.where(self.data >= 0.0, self.data, slope * self.data), _parents=(self,))
        out._vjp = lambda g: self.grad.__iadd__(g * np.where(self.data >= 0.0, 1.0, slope))
        return out

    def clamp(self, lo: float, hi: float):
        out = Tensor(np.clip(self.data, lo, hi), _parents=(self,))
        inside = (self.data >= lo) & (self.data <= hi)
        out._vjp = lambda g: self.grad.__iadd__(g * inside)
        return out

    def lgamma(self):
        out = Tensor(special.lgamma(self.data), _parents=(self,))
        out._vjp = lambda g: self.grad.__iadd__(g * special.digamma(self.data))
        return out

    def digamma(self):
        out = Tensor(special.digamma(self.data), _parents=(self,))
        out._vjp = lambda g: self.grad.__iadd__(g * special.trigamma(self.data))
        return out

    def detach(self):
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self.data.reshape(()))


def parameter(data) -> Tensor:
    """Trainable leaf tensor."""
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t.grad += g[tuple(idx)]

    out._vjp = vjp
    return out


def backward(loss: Tensor, params: list[Tensor]) -> list[np.ndarray]:
    """Run reverse mode from a scalar loss and return gradients for ``params``."""
    loss.backward()
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
