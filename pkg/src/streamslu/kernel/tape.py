"""Minimal reverse-accumulation tape.

Each op computes its value with numpy and, when any input is a tracked ``Var``,
records the parents and a vector-Jacobian product on the input's tape. Ops given
only plain arrays return plain arrays, so the same model code serves taped
training and tape-free streaming inference.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence, Union

import numpy as np
import numpy.typing as npt
from scipy.special import expit
from scipy.special import log_softmax as _log_softmax
from scipy.special import softmax as _softmax

from streamslu.kernel.errors import TapeError

Array = npt.NDArray[np.float64]
Vjp = Callable[[Array], Sequence[Union[Array, None]]]


class Var:
    """A value recorded on a tape."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: "Tape", index: int, value: Array):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(#{self.index}, shape={self.value.shape})"


Operand = Union[Var, Array]


class Gradients:
    """Adjoints produced by ``Tape.backward``."""

    def __init__(self, tape: "Tape", adjoints: list[Array | None]):
        self._tape = tape
        self._adjoints = adjoints

    def of(self, var: Var) -> Array:
        if var.tape is not self._tape:
            raise TapeError(f"{var!r} was not recorded on this tape")
        adjoint = self._adjoints[var.index]
        return np.zeros_like(var.value) if adjoint is None else adjoint


class Tape:
    def __init__(self) -> None:
        self._values: list[Array] = []
        self._parents: list[tuple[Var | None, ...]] = []
        self._vjps: list[Vjp | None] = []

    def __len__(self) -> int:
        return len(self._values)

    def variable(self, value: npt.ArrayLike) -> Var:
        return self.record(np.asarray(value, dtype=np.float64), (), None)

    def record(self, value: Array, parents: Sequence[Var | None], vjp: Vjp | None) -> Var:
        var = Var(self, len(self._values), value)
        self._values.append(value)
        self._parents.append(tuple(parents))
        self._vjps.append(vjp)
        return var

    def backward(self, seeds: Iterable[tuple[Var, npt.ArrayLike]]) -> Gradients:
        adjoints: list[Array | None] = [None] * len(self._values)
        for var, seed in seeds:
            if var.tape is not self:
                raise TapeError(f"seed {var!r} belongs to another tape")
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != var.value.shape:
                raise TapeError(f"seed shape {seed.shape} does not match {var!r}")
            current = adjoints[var.index]
            adjoints[var.index] = seed.copy() if current is None else current + seed
        for index in range(len(self._values) - 1, -1, -1):
            adjoint = adjoints[index]
            vjp = self._vjps[index]
            if adjoint is None or vjp is None:
                continue
            for parent, contribution in zip(self._parents[index], vjp(adjoint)):
                if parent is None or contribution is None:
                    continue
                current = adjoints[parent.index]
                adjoints[parent.index] = contribution if current is None else current + contribution
        return Gradients(self, adjoints)


def value_of(x: Operand) -> Array:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(*operands: Operand) -> Tape | None:
    tape: Tape | None = None
    for operand in operands:
        if isinstance(operand, Var):
            if tape is not None and operand.tape is not tape:
                raise TapeError("operands recorded on different tapes")
            tape = operand.tape
    return tape


def _tracked(x: Operand) -> Var | None:
    return x if isinstance(x, Var) else None


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def lift(op: Callable[..., tuple[Array, Vjp]]) -> Callable[..., Operand]:
    """Turn ``op(*values) -> (value, vjp)`` into a tape-aware function of operands."""

    def apply(*operands: Operand, **kwargs) -> Operand:
        values = [value_of(x) for x in operands]
        value, vjp = op(*values, **kwargs)
        tape = _tape_of(*operands)
        if tape is None:
            return value
        return tape.record(value, [_tracked(x) for x in operands], vjp)

    apply.__name__ = op.__name__
    apply.__doc__ = op.__doc__
    return apply


@lift
def add(a: Array, b: Array):
    out = a + b
    return out, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


@lift
def mul(a: Array, b: Array):
    out = a * b
    return out, lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))


@lift
def matmul(a: Array, b: Array):
    out = a @ b

    def vjp(g: Array):
        if a.ndim == 1:
            return g @ b.T, np.outer(a, g)
        return g @ b.T, a.T @ g

    return out, vjp


@lift
def sigmoid(a: Array):
    out = expit(a)
    return out, lambda g: (g * out * (1.0 - out),)


@lift
def tanh(a: Array):
    out = np.tanh(a)
    return out, lambda g: (g * (1.0 - out**2),)


@lift
def relu(a: Array):
    active = a > 0
    return np.where(active, a, 0.0), lambda g: (np.where(active, g, 0.0),)


@lift
def log_softmax(a: Array):
    out = _log_softmax(a, axis=-1)

    def vjp(g: Array):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return out, vjp


@lift
def softmax(a: Array):
    out = _softmax(a, axis=-1)

    def vjp(g: Array):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return out, vjp


@lift
def reshape(a: Array, *, shape: tuple[int, ...]):
    return a.reshape(shape), lambda g: (g.reshape(a.shape),)


@lift
def segment(a: Array, *, start: int, stop: int):
    """Slice ``[start, stop)`` along the last axis."""

    def vjp(g: Array):
        full = np.zeros_like(a)
        full[..., start:stop] = g
        return (full,)

    return a[..., start:stop].copy(), vjp


def concat(parts: Sequence[Operand]) -> Operand:
    """Concatenate 1-D operands."""
    values = [value_of(p) for p in parts]
    out = np.concatenate(values)
    tape = _tape_of(*parts)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [v.shape[0] for v in values])

    def vjp(g: Array):
        return [g[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]

    return tape.record(out, [_tracked(p) for p in parts], vjp)


def stack(parts: Sequence[Operand]) -> Operand:
    """Stack equally shaped operands along a new leading axis."""
    out = np.stack([value_of(p) for p in parts])
    tape = _tape_of(*parts)
    if tape is None:
        return out
    return tape.record(out, [_tracked(p) for p in parts], lambda g: list(g))
