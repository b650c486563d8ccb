"""Minimal reverse-mode automatic differentiation over numpy arrays.

Float64 throughout. Each op records its parents and a closure that
accumulates gradients into them; backward() walks the graph in reverse
topological order. Broadcasting follows numpy; gradients are summed back
down to each parent's shape.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ContractViolation("backward() without a seed requires a scalar output")
            grad = np.ones_like(self.data)
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
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- arithmetic ----

    def __add__(self, other):
        other = as_tensor(other)
        out = _from_op(self.data + other.data, (self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g, self.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g, other.shape))
            out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _from_op(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = _from_op(self.data * other.data, (self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g * other.data, self.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g * self.data, other.shape))
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (as_tensor(other) ** -1.0)

    def __rtruediv__(self, other):
        return as_tensor(other) * (self ** -1.0)

    def __pow__(self, exponent: float):
        if not isinstance(exponent, (int, float)):
            raise ContractViolation("only scalar exponents are supported")
        out = _from_op(self.data ** exponent, (self,))
        if out.requires_grad:
            def backward(g):
                self._accumulate(g * exponent * self.data ** (exponent - 1.0))
            out._backward = backward
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        out = _from_op(self.data @ other.data, (self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    if other.data.ndim == 1:
                        grad = np.expand_dims(g, -1) * other.data
                    else:
                        grad = g @ np.swapaxes(other.data, -1, -2)
                    self._accumulate(_unbroadcast(grad, self.shape))
                if other.requires_grad:
                    if self.data.ndim == 1:
                        grad = np.expand_dims(self.data, -1) * np.expand_dims(g, 0)
                    else:
                        grad = np.swapaxes(self.data, -1, -2) @ g
                    other._accumulate(_unbroadcast(grad, other.shape))
            out._backward = backward
        return out

    # ---- shape ----

    def reshape(self, *shape):
        out = _from_op(self.data.reshape(*shape), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.reshape(self.shape))
        return out

    def swapaxes(self, a: int, b: int):
        out = _from_op(np.swapaxes(self.data, a, b), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(np.swapaxes(g, a, b))
        return out

    # ---- reductions and element-wise ----

    def sum(self, axis=None, keepdims: bool = False):
        out = _from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def backward(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.shape).copy())
            out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        elif isinstance(axis, tuple):
            n = 1
            for a in axis:
                n *= self.data.shape[a]
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def exp(self):
        out = _from_op(np.exp(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * out.data)
        return out

    def log(self):
        out = _from_op(np.log(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def relu(self):
        out = _from_op(np.maximum(self.data, 0.0), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * (self.data > 0.0))
        return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _from_op(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(p for p in parents if p.requires_grad)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax; backward is y * (g - sum(g * y))."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _from_op(y, (x,))
    if out.requires_grad:
        def backward(g):
            inner = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (g - inner))
        out._backward = backward
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable log-softmax; backward is g - softmax(x) * sum(g)."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    out = _from_op(y, (x,))
    if out.requires_grad:
        sm = np.exp(y)
        def backward(g):
            x._accumulate(g - sm * g.sum(axis=axis, keepdims=True))
        out._backward = backward
    return out


def take_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Embedding lookup: out[..., :] = table[indices[...], :].

    Backward scatter-adds into the table rows.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ContractViolation("take_rows expects a 2-d table")
    if indices.size and (indices.min() < 0 or indices.max() >= table.data.shape[0]):
        raise ContractViolation(
            f"row index out of range [0, {table.data.shape[0]}) in embedding lookup"
        )
    out = _from_op(table.data[indices], (table,))
    if out.requires_grad:
        def backward(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, indices, g)
        out._backward = backward
    return out


def take_along_last(x: Tensor, indices: np.ndarray) -> Tensor:
    """out[..., ] = x[..., indices[...]] along the final axis."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.shape != x.data.shape[:-1]:
        raise ContractViolation(
            f"index shape {indices.shape} must match leading dims {x.data.shape[:-1]}"
        )
    expanded = np.expand_dims(indices, -1)
    out = _from_op(np.take_along_axis(x.data, expanded, axis=-1)[..., 0], (x,))
    if out.requires_grad:
        grid = np.indices(indices.shape)
        def backward(g):
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, (*grid, indices), g)
        out._backward = backward
    return out


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)
        def backward(g):
            moved = np.moveaxis(g, axis, 0)
            for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    t._accumulate(np.moveaxis(moved[start:stop], 0, axis))
        out._backward = backward
    return out
