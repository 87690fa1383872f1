"""Step-level layers built on the tape ops.

Everything here works one time step at a time so that offline forward passes
and chunked streaming evaluate identical arithmetic in identical order.
"""
from __future__ import annotations

import math
from typing import Generic, Sequence, TypeVar

import numpy as np
import numpy.typing as npt

from streamslu.kernel import tape as ops
from streamslu.kernel.tape import Array, Operand

T = TypeVar("T")


class WindowBuffer(Generic[T]):
    """Yield every full window of ``width`` consecutive items, one window per ``stride`` items."""

    def __init__(self, width: int, stride: int):
        if width < 1 or stride < 1:
            raise ValueError(f"width and stride must be >= 1, got {width}, {stride}")
        self.width = width
        self.stride = stride
        self._items: list[T] = []
        self._first = 0  # absolute index of _items[0]
        self._next = 0  # absolute index where the next window starts
        self.emitted = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, item: T) -> list[list[T]]:
        self._items.append(item)
        end = self._first + len(self._items)
        windows: list[list[T]] = []
        while self._next + self.width <= end:
            lo = self._next - self._first
            windows.append(self._items[lo:lo + self.width])
            self._next += self.stride
            self.emitted += 1
        drop = min(self._next - self._first, len(self._items))
        if drop > 0:
            del self._items[:drop]
            self._first += drop
        return windows


def stacked_volume(row: npt.NDArray[np.floating], width: int, dim: int) -> Array:
    """A stacked frame as a (mel, stack-channel, 1) volume."""
    return np.asarray(row, dtype=np.float64).reshape(width, dim).T[:, :, None].copy()


@ops.lift
def conv_window(window: Array, W: Array, b: Array, *, stride_mel: int):
    """Valid 3D convolution of one (kt, mel, stack, cin) window to (mel', stack, cout)."""
    kt, mel, stack, cin = window.shape
    cout, _, km, _ = W.shape
    out_mel = (mel - km) // stride_mel + 1
    view = np.lib.stride_tricks.sliding_window_view(window, km, axis=1)[:, ::stride_mel][:, :out_mel]
    patches = np.ascontiguousarray(view.transpose(1, 2, 0, 4, 3)).reshape(out_mel * stack, -1)
    kernel = W.reshape(cout, -1)
    out = (patches @ kernel.T + b).reshape(out_mel, stack, cout)

    def vjp(g: Array):
        flat = g.reshape(out_mel * stack, cout)
        d_kernel = (flat.T @ patches).reshape(W.shape)
        d_patches = (flat @ kernel).reshape(out_mel, stack, kt, km, cin)
        d_window = np.zeros_like(window)
        for m in range(out_mel):
            for mu in range(km):
                d_window[:, m * stride_mel + mu] += d_patches[m, :, :, mu, :].transpose(1, 0, 2)
        return d_window, d_kernel, flat.sum(axis=0)

    return out, vjp


def linear(x: Operand, W: Operand, b: Operand) -> Operand:
    return ops.add(ops.matmul(x, W), b)


def lstm_step(x: Operand, state: tuple, Wx: Operand, Wh: Operand, b: Operand, size: int) -> tuple:
    h, c = state
    z = ops.add(ops.add(ops.matmul(x, Wx), ops.matmul(h, Wh)), b)
    i = ops.sigmoid(ops.segment(z, start=0, stop=size))
    f = ops.sigmoid(ops.segment(z, start=size, stop=2 * size))
    g = ops.tanh(ops.segment(z, start=2 * size, stop=3 * size))
    o = ops.sigmoid(ops.segment(z, start=3 * size, stop=4 * size))
    c_new = ops.add(ops.mul(f, c), ops.mul(i, g))
    h_new = ops.mul(o, ops.tanh(c_new))
    return h_new, c_new


def gru_step(x: Operand, state: tuple, Wx: Operand, Wh: Operand, b: Operand, size: int) -> tuple:
    (h,) = state
    gx = ops.add(ops.matmul(x, Wx), b)
    gh = ops.matmul(h, Wh)
    r = ops.sigmoid(ops.add(ops.segment(gx, start=0, stop=size), ops.segment(gh, start=0, stop=size)))
    u = ops.sigmoid(
        ops.add(ops.segment(gx, start=size, stop=2 * size), ops.segment(gh, start=size, stop=2 * size))
    )
    n = ops.tanh(
        ops.add(
            ops.segment(gx, start=2 * size, stop=3 * size),
            ops.mul(r, ops.segment(gh, start=2 * size, stop=3 * size)),
        )
    )
    h_new = ops.add(n, ops.mul(u, ops.add(h, ops.mul(n, np.float64(-1.0)))))
    return (h_new,)


CELLS = {"lstm": lstm_step, "gru": gru_step}


def zero_state(cell: str, size: int) -> tuple:
    if cell == "lstm":
        return np.zeros(size), np.zeros(size)
    return (np.zeros(size),)


def reduce_group(group: Sequence[Operand], factor: int, W: Operand, b: Operand) -> Operand:
    """Concatenate up to ``factor`` states (zero-padding a short group) and project."""
    size = ops.value_of(group[0]).shape[0]
    padded = list(group) + [np.zeros(size)] * (factor - len(group))
    return linear(ops.concat(padded), W, b)


def time_reduce(states: npt.ArrayLike, factor: int, W: npt.ArrayLike, b: npt.ArrayLike) -> Array:
    """Group ``factor`` consecutive rows, zero-pad the last group, and project each group."""
    if factor < 1:
        raise ValueError(f"reduction factor must be >= 1, got {factor}")
    rows = np.asarray(states, dtype=np.float64)
    steps = math.ceil(rows.shape[0] / factor)
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = [reduce_group(list(rows[i * factor:(i + 1) * factor]), factor, W, b) for i in range(steps)]
    return np.stack(out) if out else np.zeros((0, W.shape[1]))


class Dropout:
    """Inverted dropout with masks drawn from a caller-owned generator."""

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def __call__(self, x: Operand) -> Operand:
        if self.rate == 0.0:
            return x
        shape = ops.value_of(x).shape
        keep = (self.rng.random(shape) >= self.rate) / (1.0 - self.rate)
        return ops.mul(x, keep)
