"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every operation builds a `Var` node holding the forward value and a
vector-Jacobian closure; `backward` walks the graph once in reverse
topological order. The op set is exactly what the predictor and its losses
need. All math is double precision so finite-difference checks have
headroom, and every op (including max tie-breaking) is deterministic.
"""

from __future__ import annotations

import numpy as np


class Var:
    """A node in the computation graph."""

    __slots__ = ("data", "grad", "_parents", "_vjp", "requires_grad")

    def __init__(self, data, parents=(), vjp=None, requires_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self._parents = parents
        self._vjp = vjp
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(as_var(other), -1.0))

    def __rsub__(self, other):
        return add(as_var(other), mul(self, -1.0))

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division only by python scalars")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def __repr__(self):
        return f"Var(shape={self.data.shape}, grad={self.requires_grad})"


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64), requires_grad=False)


def constant(x) -> Var:
    return Var(np.asarray(x, dtype=np.float64), requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Var(out, (a, b), vjp)


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return Var(out, (a, b), vjp)


def relu(x) -> Var:
    x = as_var(x)
    keep = x.data > 0.0
    return Var(np.where(keep, x.data, 0.0), (x,), lambda g: (g * keep,))


def tanh(x) -> Var:
    x = as_var(x)
    out = np.tanh(x.data)
    return Var(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x) -> Var:
    x = as_var(x)
    out = 1.0 / (1.0 + np.exp(-x.data))
    return Var(out, (x,), lambda g: (g * out * (1.0 - out),))


def exp(x) -> Var:
    x = as_var(x)
    out = np.exp(x.data)
    return Var(out, (x,), lambda g: (g * out,))


def log(x) -> Var:
    x = as_var(x)
    return Var(np.log(x.data), (x,), lambda g: (g / x.data,))


def grad_reverse(x, scale: float = 1.0) -> Var:
    """Identity forward; backward multiplies the gradient by -scale."""
    x = as_var(x)
    return Var(x.data, (x,), lambda g: (-scale * g,))


# ---------------------------------------------------------------------------
# linear algebra / shaping
# ---------------------------------------------------------------------------

def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul is 2-D only; reshape first")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return Var(out, (a, b), vjp)


def transpose(x) -> Var:
    x = as_var(x)
    if x.data.ndim != 2:
        raise ValueError("transpose is 2-D only")
    return Var(x.data.T, (x,), lambda g: (g.T,))


def reshape(x, shape) -> Var:
    x = as_var(x)
    orig = x.data.shape
    return Var(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def concat(parts, axis: int = -1) -> Var:
    parts = [as_var(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(parts))
        )

    return Var(out, tuple(parts), vjp)


def stack(parts, axis: int = 0) -> Var:
    parts = [as_var(p) for p in parts]
    out = np.stack([p.data for p in parts], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return Var(out, tuple(parts), vjp)


def take(x, idx) -> Var:
    """Basic indexing (slices / ints); gradients scatter-add back."""
    x = as_var(x)
    out = x.data[idx]

    def vjp(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return Var(out, (x,), vjp)


def summate(x, axis=None, keepdims: bool = False) -> Var:
    x = as_var(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            for ax in sorted(a % x.data.ndim for a in axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return Var(out, (x,), vjp)


def mean(x, axis=None, keepdims: bool = False) -> Var:
    x = as_var(x)
    if axis is None:
        n = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.data.shape[a] for a in axes]))
    return mul(summate(x, axis=axis, keepdims=keepdims), 1.0 / n)


def amax(x, axis: int) -> Var:
    """Maximum along one axis; gradient routes to the first argmax."""
    x = as_var(x)
    out = x.data.max(axis=axis)
    idx = np.argmax(x.data, axis=axis)

    def vjp(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(
            full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis
        )
        return (full,)

    return Var(out, (x,), vjp)


def where(cond, a, b) -> Var:
    """Select with a constant boolean mask."""
    cond = np.asarray(cond, dtype=bool)
    a, b = as_var(a), as_var(b)
    out = np.where(cond, a.data, b.data)

    def vjp(g):
        return (
            _unbroadcast(np.where(cond, g, 0.0), a.data.shape),
            _unbroadcast(np.where(cond, 0.0, g), b.data.shape),
        )

    return Var(out, (a, b), vjp)


def cumsum(x, axis: int) -> Var:
    x = as_var(x)
    out = np.cumsum(x.data, axis=axis)

    def vjp(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis), axis),)

    return Var(out, (x,), vjp)


def square(x) -> Var:
    x = as_var(x)
    return Var(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def logsumexp(x, axis: int = -1, keepdims: bool = False) -> Var:
    """Numerically stable log-sum-exp; the shift is treated as a constant."""
    x = as_var(x)
    shift = constant(x.data.max(axis=axis, keepdims=True))
    lse = log(summate(exp(x - shift), axis=axis, keepdims=True)) + shift
    if not keepdims:
        ax = axis % lse.data.ndim
        target = tuple(s for i, s in enumerate(lse.data.shape) if i != ax)
        lse = reshape(lse, target)
    return lse


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def backward(root: Var) -> None:
    """Accumulate gradients of `root` (summed over its entries) into leaves."""
    topo: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if not parent.requires_grad or g is None:
                continue
            if parent.grad is None:
                parent.grad = np.asarray(g, dtype=np.float64).copy()
            else:
                parent.grad = parent.grad + g
