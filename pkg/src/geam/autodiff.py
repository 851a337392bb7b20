"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array plus a closure that routes gradients to its
parents; ``backward()`` on a scalar walks the tape once in reverse
topological order. Subtrees that no trainable leaf feeds into carry no
closure, so constant-only computation costs no backward work. All math is
64-bit and deterministic.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from geam.errors import ShapeMismatch

Array = np.ndarray


def _as_array(value) -> Array:
    arr = np.asarray(value, dtype=np.float64)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[Array], None] | None = None,
    ):
        self.data = _as_array(data)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    # -- bookkeeping -----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __float__(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accumulate(self, g: Array) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from a scalar root; gradients accumulate in .grad."""
        if self.data.size != 1:
            raise ShapeMismatch("backward() requires a scalar root")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -_as_array(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def tensor(value) -> Tensor:
    """Constant (non-trainable) tensor."""
    return value if isinstance(value, Tensor) else Tensor(value)


def param(value) -> Tensor:
    """Trainable leaf tensor."""
    return Tensor(value, requires_grad=True)


def _node(data: Array, parents: Sequence[Tensor], backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=needs,
        parents=tuple(parents) if needs else (),
        backward=backward if needs else None,
    )


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- primitives -----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}") from exc

    def backward(g: Array) -> None:
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))

    return _node(data, (a, b), backward)


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with numpy broadcasting."""
    a, b = tensor(a), tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}") from exc

    def backward(g: Array) -> None:
        a.accumulate(_unbroadcast(g * b.data, a.shape))
        b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeMismatch("matmul supports 1-D and 2-D operands")
    try:
        data = a.data @ b.data
    except ValueError as exc:
        raise ShapeMismatch(f"matmul: {a.shape} vs {b.shape}") from exc

    def backward(g: Array) -> None:
        if a.data.ndim == 2 and b.data.ndim == 2:
            a.accumulate(g @ b.data.T)
            b.accumulate(a.data.T @ g)
        elif a.data.ndim == 1 and b.data.ndim == 2:
            a.accumulate(b.data @ g)
            b.accumulate(np.outer(a.data, g))
        elif a.data.ndim == 2 and b.data.ndim == 1:
            a.accumulate(np.outer(g, b.data))
            b.accumulate(a.data.T @ g)
        else:
            a.accumulate(g * b.data)
            b.accumulate(g * a.data)

    return _node(data, (a, b), backward)


def relu(x) -> Tensor:
    x = tensor(x)
    mask = x.data > 0
    return _node(
        x.data * mask, (x,), lambda g: x.accumulate(g * mask)
    )


def sigmoid(x) -> Tensor:
    x = tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _node(out, (x,), lambda g: x.accumulate(g * out * (1.0 - out)))


def tanh(x) -> Tensor:
    x = tensor(x)
    out = np.tanh(x.data)
    return _node(out, (x,), lambda g: x.accumulate(g * (1.0 - out * out)))


def softmax(x, axis: int = -1) -> Tensor:
    x = tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out = ex / np.sum(ex, axis=axis, keepdims=True)

    def backward(g: Array) -> None:
        inner = np.sum(g * out, axis=axis, keepdims=True)
        x.accumulate((g - inner) * out)

    return _node(out, (x,), backward)


def log(x) -> Tensor:
    x = tensor(x)
    return _node(np.log(x.data), (x,), lambda g: x.accumulate(g / x.data))


def exp(x) -> Tensor:
    x = tensor(x)
    out = np.exp(x.data)
    return _node(out, (x,), lambda g: x.accumulate(g * out))


def softplus(x) -> Tensor:
    """log(1 + exp(x)) computed without overflow."""
    x = tensor(x)
    out = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    sig = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500, 500)))
    return _node(out, (x,), lambda g: x.accumulate(g * sig))


def sqrt0(x) -> Tensor:
    """Square root of max(x, 0) with derivative 0 on the clipped region.

    Keeps reparameterized samples differentiable when some variance entries
    collapse to exactly zero.
    """
    x = tensor(x)
    out = np.sqrt(np.maximum(x.data, 0.0))

    def backward(g: Array) -> None:
        deriv = np.where(x.data > 0, 0.5 / np.where(x.data > 0, out, 1.0), 0.0)
        x.accumulate(g * deriv)

    return _node(out, (x,), backward)


def power_const(x, p: float) -> Tensor:
    x = tensor(x)
    out = x.data**p
    return _node(
        out, (x,), lambda g: x.accumulate(g * p * x.data ** (p - 1.0))
    )


def div(a, b) -> Tensor:
    return mul(a, power_const(b, -1.0))


def tsum(x, axis: int | None = None) -> Tensor:
    x = tensor(x)
    data = x.data.sum(axis=axis)

    def backward(g: Array) -> None:
        if axis is None:
            x.accumulate(np.broadcast_to(g, x.shape).copy())
        else:
            x.accumulate(np.broadcast_to(np.expand_dims(g, axis), x.shape).copy())

    return _node(data, (x,), backward)


def tmean(x, axis: int | None = None) -> Tensor:
    x = tensor(x)
    count = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis), 1.0 / count)


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [tensor(p) for p in parts]
    if not parts:
        raise ShapeMismatch("concat needs at least one tensor")
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch("concat: incompatible shapes") from exc
    sizes = [p.data.shape[axis] for p in parts]

    def backward(g: Array) -> None:
        start = 0
        for p, size in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, start + size)
            p.accumulate(g[tuple(idx)])
            start += size

    return _node(data, tuple(parts), backward)


def take(x, key) -> Tensor:
    """Slice or fancy-index rows; gradient scatter-adds back."""
    x = tensor(x)
    data = x.data[key]

    def backward(g: Array) -> None:
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        x.accumulate(full)

    return _node(data, (x,), backward)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = tensor(x)
    return _node(
        x.data.reshape(shape),
        (x,),
        lambda g: x.accumulate(g.reshape(x.shape)),
    )


def minimum(a, b) -> Tensor:
    """Elementwise min; on ties the gradient goes to the first operand."""
    a, b = tensor(a), tensor(b)
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g: Array) -> None:
        a.accumulate(_unbroadcast(g * take_a, a.shape))
        b.accumulate(_unbroadcast(g * ~take_a, b.shape))

    return _node(data, (a, b), backward)


def straight_through(soft: Tensor, hard_data: Array) -> Tensor:
    """Forward the hard array, backpropagate as if it were the soft one."""
    if soft.shape != hard_data.shape:
        raise ShapeMismatch("straight_through: soft and hard shapes differ")
    return _node(hard_data, (soft,), lambda g: soft.accumulate(g))


def log_softmax(x, axis: int = -1) -> Tensor:
    x = tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g: Array) -> None:
        x.accumulate(g - probs * np.sum(g, axis=axis, keepdims=True))

    return _node(out, (x,), backward)
