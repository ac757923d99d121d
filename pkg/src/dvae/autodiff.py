"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record a node holding references to their inputs and a closure
mapping the upstream gradient to input gradients. ``backward()`` walks the
recorded graph in reverse topological order.

Broadcasting is deliberately narrow: equal shapes, a size-1 operand against
anything, or one shape being a trailing suffix of the other (``[B, D] + [D]``).
Everything else raises :class:`ShapeError`.

Backward on a root that never touched a gradient-requiring tensor raises
:class:`DisconnectedError`. Leaves that are unreachable from the root keep
``grad = None``; callers that need dense gradients treat ``None`` as zero.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .errors import DisconnectedError, DomainError, NonFiniteError, NotScalarError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor data must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{rg})"

    def __len__(self):
        return len(self.data)

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def exp(self):
        return exp(self)

    def log(self):
        return ln(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    @property
    def T(self):
        return transpose(self)

    # -- reverse pass --------------------------------------------------
    def backward(self):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if self.data.size != 1:
            raise NotScalarError(f"backward() needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            raise DisconnectedError("root does not depend on any tensor requiring grad")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = np.array(g, dtype=np.float64) if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                prev = grads.get(key)
                grads[key] = pg if prev is None else prev + pg


def _topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


# ----------------------------------------------------------------------
# graph plumbing

def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple, backward: Callable, op: str) -> Tensor:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _broadcast_shape(a: tuple, b: tuple) -> tuple:
    if a == b:
        return a
    na, nb = len(a), len(b)
    if int(np.prod(b)) == 1 and nb <= na:
        return a
    if int(np.prod(a)) == 1 and na <= nb:
        return b
    if nb < na and a[na - nb:] == b:
        return a
    if na < nb and b[nb - na:] == a:
        return b
    raise ShapeError(f"cannot broadcast shapes {a} and {b}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if int(np.prod(shape)) == 1:
        return np.full(shape, g.sum())
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead)))


# ----------------------------------------------------------------------
# elementwise binary ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    if np.any(b.data == 0.0):
        raise DomainError("division by zero")
    out = a.data / b.data

    def bw(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _node(out, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


# ----------------------------------------------------------------------
# linear algebra and structural ops

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul contraction mismatch {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def bw(g):
        if A.ndim == 2 and B.ndim == 2:
            return g @ B.T, A.T @ g
        if A.ndim == 1 and B.ndim == 2:
            return B @ g, np.outer(A, g)
        if A.ndim == 2 and B.ndim == 1:
            return np.outer(g, B), A.T @ g
        return g * B, g * A

    return _node(np.asarray(A @ B, dtype=np.float64), (a, b), bw, "matmul")


def affine(x, weight, bias) -> Tensor:
    """``x @ weight.T + bias`` as a single node; ``weight`` is ``[out, in]``."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if weight.ndim != 2 or bias.shape != (weight.shape[0],) or x.ndim not in (1, 2):
        raise ShapeError(f"affine shapes x={x.shape} W={weight.shape} b={bias.shape}")
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"affine expects last dim {weight.shape[1]}, got {x.shape}")
    X, W = x.data, weight.data

    def bw(g):
        if X.ndim == 2:
            return g @ W, g.T @ X, g.sum(axis=0)
        return W.T @ g, np.outer(g, X), g

    return _node(X @ W.T + bias.data, (x, weight, bias), bw, "affine")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose expects a 2-D tensor")
    return _node(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return _node(out, (a,), lambda g: (g.reshape(old),), "reshape")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeError("concat of an empty list")
    ndim = ts[0].ndim
    ax = axis % ndim
    for t in ts:
        if t.ndim != ndim or t.shape[:ax] + t.shape[ax + 1:] != ts[0].shape[:ax] + ts[0].shape[ax + 1:]:
            raise ShapeError(f"concat shape mismatch: {[t.shape for t in ts]}")
    cuts = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _node(np.concatenate([t.data for t in ts], axis=ax), ts, bw, "concat")


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is Ellipsis or i is None for i in items)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data[idx]
    except IndexError as exc:
        raise ShapeError(str(exc)) from None
    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _node(np.array(out, dtype=np.float64), (a,), bw, "slice")


def slice_last(a, start: int, stop: int) -> Tensor:
    """Slice ``a[..., start:stop]``."""
    a = as_tensor(a)
    if not 0 <= start <= stop <= a.shape[-1]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for {a.shape}")
    return getitem(a, (Ellipsis, slice(start, stop)))


def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.full(shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _node(np.asarray(out, dtype=np.float64), (a,), bw, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    if n == 0:
        raise ShapeError("mean over an empty axis")
    return mul(tsum(a, axis), 1.0 / n)


# ----------------------------------------------------------------------
# elementwise unary ops

def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def ln(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("ln of a non-positive value")
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,), "ln")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
    return _node(out, (a,), lambda g: (g * _sigmoid(x),), "softplus")


def square(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(a.data)

    def bw(g):
        with np.errstate(divide="ignore"):
            return (g * 0.5 / out,)

    return _node(out, (a,), bw, "sqrt")


def clamp_min(a, floor: float) -> Tensor:
    """``max(a, floor)``; the gradient is blocked where the floor is active."""
    a = as_tensor(a)
    keep = a.data >= floor
    return _node(np.where(keep, a.data, floor), (a,), lambda g: (g * keep,), "clamp_min")


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


_OPS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "concat": lambda *ts: concat(ts),
    "slice": slice_last,
    "sum": tsum,
    "mean": mean,
    "exp": exp,
    "ln": ln,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "square": square,
    "sqrt": sqrt,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch an operation by name, e.g. ``forward_op("exp", x)``."""
    try:
        fn = _OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op {kind!r}; expected one of {sorted(_OPS)}") from None
    return fn(*inputs, **kwargs)


OP_KINDS = tuple(_OPS)
