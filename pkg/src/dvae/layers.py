"""Dense layers, LSTM cells and the small MLP heads that emit distribution parameters."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptySequenceError, ShapeError

ACTIVATIONS = {
    "linear": lambda x: x,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "softplus": ad.softplus,
}


def xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Module:
    """Minimal parameter container; attributes holding parameters or sub-modules are discovered in order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        seen = set()
        for name, val in self._walk(prefix):
            if id(val) in seen:
                raise ValueError(f"parameter {name} registered twice")
            seen.add(id(val))
            yield name, val

    def _walk(self, prefix):
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val._walk(prefix + key + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item._walk(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _param(arr) -> Tensor:
    return Tensor(arr, requires_grad=True)


class DenseLayer(Module):
    def __init__(self, in_dim: int, out_dim: int, activation: str = "linear", rng=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim, self.out_dim, self.activation = in_dim, out_dim, activation
        self.weight = _param(xavier_uniform(rng, out_dim, in_dim))
        self.bias = _param(np.zeros(out_dim))
        assert self.num_parameters() == out_dim * (in_dim + 1)

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(self, x)


def dense_forward(layer: DenseLayer, x) -> Tensor:
    x = ad.as_tensor(x)
    if x.shape[-1] != layer.in_dim:
        raise ShapeError(f"dense layer expects input dim {layer.in_dim}, got {x.shape}")
    return ACTIVATIONS[layer.activation](ad.affine(x, layer.weight, layer.bias))


@dataclass(frozen=True)
class RecurrentState:
    h: Tensor
    c: Tensor
    t: int = 0


class LstmCell(Module):
    """LSTM with gate rows ordered (input, forget, output, candidate)."""

    def __init__(self, in_dim: int, hidden: int, rng=None, forget_bias: float = 1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim, self.hidden = in_dim, hidden
        self.weight_x = _param(xavier_uniform(rng, 4 * hidden, in_dim))
        self.weight_h = _param(xavier_uniform(rng, 4 * hidden, hidden))
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = forget_bias
        self.bias = _param(bias)
        assert self.num_parameters() == 4 * (hidden * (in_dim + hidden) + hidden)

    def initial_state(self, batch: int | None = None) -> RecurrentState:
        shape = (self.hidden,) if batch is None else (batch, self.hidden)
        return RecurrentState(ad.zeros(shape), ad.zeros(shape), 0)

    def __call__(self, x, state: RecurrentState) -> RecurrentState:
        return lstm_step(self, x, state)


def _linear(x: Tensor, weight: Tensor) -> Tensor:
    X, W = x.data, weight.data

    def bw(g):
        if X.ndim == 2:
            return g @ W, g.T @ X
        return W.T @ g, np.outer(g, X)

    return ad._node(X @ W.T, (x, weight), bw, "matmul")


def lstm_step(cell: LstmCell, x, state: RecurrentState) -> RecurrentState:
    x = ad.as_tensor(x)
    H = cell.hidden
    if x.shape[-1] != cell.in_dim:
        raise ShapeError(f"LSTM expects input dim {cell.in_dim}, got {x.shape}")
    gates = ad.affine(x, cell.weight_x, cell.bias)
    if state.h.requires_grad or np.any(state.h.data):
        gates = gates + _linear(state.h, cell.weight_h)
    sig = ad.sigmoid(ad.slice_last(gates, 0, 3 * H))
    i = ad.slice_last(sig, 0, H)
    f = ad.slice_last(sig, H, 2 * H)
    o = ad.slice_last(sig, 2 * H, 3 * H)
    g = ad.tanh(ad.slice_last(gates, 3 * H, 4 * H))
    c = f * state.c + i * g
    h = o * ad.tanh(c)
    return RecurrentState(h, c, state.t + 1)


def unroll(cell: LstmCell, xs, init: RecurrentState | None = None, direction: str = "forward") -> list[RecurrentState]:
    """Run ``cell`` over ``xs``; the returned states are always in original time order.

    In the backward direction the state at position t has consumed ``xs[t:]``.
    """
    xs = list(xs)
    if not xs:
        raise EmptySequenceError("unroll over an empty sequence")
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if init is None:
        first = ad.as_tensor(xs[0])
        init = cell.initial_state(first.shape[0] if first.ndim == 2 else None)
    seq = xs if direction == "forward" else xs[::-1]
    states, state = [], init
    for x in seq:
        state = lstm_step(cell, x, state)
        states.append(state)
    return states if direction == "forward" else states[::-1]


class GaussianHead(Module):
    """One hidden dense layer followed by linear mean and log-variance outputs."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, activation: str = "tanh", rng=None):
        self.hidden = DenseLayer(in_dim, hidden, activation, rng)
        self.mean = DenseLayer(hidden, out_dim, "linear", rng)
        self.log_var = DenseLayer(hidden, out_dim, "linear", rng)

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        h = self.hidden(x)
        return self.mean(h), self.log_var(h)


class ScaleHead(Module):
    """One hidden dense layer followed by a linear log-scale output."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, activation: str = "tanh", rng=None):
        self.hidden = DenseLayer(in_dim, hidden, activation, rng)
        self.out = DenseLayer(hidden, out_dim, "linear", rng)

    def __call__(self, x) -> Tensor:
        return self.out(self.hidden(x))


class GatedTransition(Module):
    """Gaussian transition ``z -> (mean, log_var)`` that starts out close to the identity.

    mean = (1 - g) * (A z + a) + g * proposal(z), with A initialised to I and the
    gate g, the proposal and the log-variance read from one shared hidden layer.
    A plain MLP has to learn "stay where you were" through a saturating layer; here it
    is the starting point.
    """

    def __init__(self, dim: int, hidden: int, activation: str = "tanh", rng=None):
        self.hidden = DenseLayer(dim, hidden, activation, rng)
        self.gate = DenseLayer(hidden, dim, "sigmoid", rng)
        self.proposal = DenseLayer(hidden, dim, "linear", rng)
        self.log_var = DenseLayer(hidden, dim, "linear", rng)
        self.linear = DenseLayer(dim, dim, "linear", rng)
        self.linear.weight.data = np.eye(dim)

    def __call__(self, z) -> tuple[Tensor, Tensor]:
        h = self.hidden(z)
        g = self.gate(h)
        mean = (1.0 - g) * self.linear(z) + g * self.proposal(h)
        return mean, self.log_var(h)
