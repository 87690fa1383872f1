"""Named parameter tensors, flattenable to a single vector."""
from __future__ import annotations

import math
from collections import OrderedDict
from typing import Iterator, Mapping

import numpy as np
import numpy.typing as npt

from streamslu.kernel.errors import ShapeError
from streamslu.network.config import ModelConfig

FRONTEND_PREFIXES = ("conv", "rnn1.", "pretrain_head.")
FORGET_BIAS = 1.0


def parameter_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    channels = 1
    for index, spec in enumerate(cfg.conv, start=1):
        kt, km, _ = spec.kernel
        shapes[f"conv{index}.W"] = (spec.out_channels, kt, km, channels)
        shapes[f"conv{index}.b"] = (spec.out_channels,)
        channels = spec.out_channels

    h1, h2, h3 = cfg.hidden
    inputs = (cfg.conv_flat_dim, h1, cfg.slot_projection + cfg.slot_outputs)
    for layer, (fan_in, size) in enumerate(zip(inputs, cfg.hidden), start=1):
        shapes[f"rnn{layer}.Wx"] = (fan_in, cfg.gates * size)
        shapes[f"rnn{layer}.Wh"] = (size, cfg.gates * size)
        shapes[f"rnn{layer}.b"] = (cfg.gates * size,)

    shapes["slot_proj.W"] = (cfg.slot_reduction * h2, cfg.slot_projection)
    shapes["slot_proj.b"] = (cfg.slot_projection,)
    shapes["slot_head.W"] = (cfg.slot_projection, cfg.slot_outputs)
    shapes["slot_head.b"] = (cfg.slot_outputs,)
    shapes["intent_proj.W"] = (cfg.intent_reduction * h3, cfg.intent_projection)
    shapes["intent_proj.b"] = (cfg.intent_projection,)
    shapes["intent_head.W"] = (cfg.intent_projection, cfg.intent_outputs)
    shapes["intent_head.b"] = (cfg.intent_outputs,)
    if cfg.pretrain_vocab:
        shapes["pretrain_head.W"] = (h1, cfg.pretrain_vocab)
        shapes["pretrain_head.b"] = (cfg.pretrain_vocab,)
    return shapes


def _fan_in(name: str, shapes: Mapping[str, tuple[int, ...]]) -> int:
    layer = name.rsplit(".", 1)[0]
    weight = shapes.get(f"{layer}.W") or shapes.get(f"{layer}.Wx")
    if weight is None:
        return 1
    if layer.startswith("conv"):
        return int(np.prod(weight[1:]))
    if layer.startswith("rnn"):
        return weight[0] + shapes[f"{layer}.Wh"][0]
    return weight[0]


class ModelParams:
    """Ordered parameter tensors for one ``ModelConfig``."""

    def __init__(self, cfg: ModelConfig, tensors: Mapping[str, npt.NDArray[np.float64]]):
        shapes = parameter_shapes(cfg)
        if list(tensors) != list(shapes):
            missing = set(shapes) ^ set(tensors)
            raise ShapeError(f"parameter names do not match config: {sorted(missing)}")
        for name, shape in shapes.items():
            if tuple(tensors[name].shape) != shape:
                raise ShapeError(f"{name} has shape {tensors[name].shape}, expected {shape}")
        self.cfg = cfg
        self.tensors: OrderedDict[str, npt.NDArray[np.float64]] = OrderedDict(
            (name, np.asarray(value, dtype=np.float64)) for name, value in tensors.items()
        )

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int) -> "ModelParams":
        """Seeded uniform initialisation in +-1/sqrt(fan_in).

        LSTM forget-gate biases start at ``FORGET_BIAS`` so the cell state
        carries a command through the trailing silence from the first epoch.
        """
        rng = np.random.default_rng(seed)
        shapes = parameter_shapes(cfg)
        tensors = OrderedDict()
        for name, shape in shapes.items():
            bound = 1.0 / math.sqrt(_fan_in(name, shapes))
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        if cfg.cell == "lstm":
            for layer, size in enumerate(cfg.hidden, start=1):
                tensors[f"rnn{layer}.b"][size:2 * size] = FORGET_BIAS
        return cls(cfg, tensors)

    @classmethod
    def zeros(cls, cfg: ModelConfig) -> "ModelParams":
        return cls(cfg, OrderedDict((n, np.zeros(s)) for n, s in parameter_shapes(cfg).items()))

    @classmethod
    def from_vector(cls, cfg: ModelConfig, vector: npt.NDArray[np.floating]) -> "ModelParams":
        shapes = parameter_shapes(cfg)
        total = sum(int(np.prod(s)) for s in shapes.values())
        vector = np.asarray(vector, dtype=np.float64).ravel()
        if vector.size != total:
            raise ShapeError(f"parameter vector has {vector.size} entries, config needs {total}")
        tensors = OrderedDict()
        offset = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            tensors[name] = vector[offset:offset + size].reshape(shape).copy()
            offset += size
        return cls(cfg, tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __getitem__(self, name: str) -> npt.NDArray[np.float64]:
        return self.tensors[name]

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def flatten(self) -> npt.NDArray[np.float64]:
        return np.concatenate([t.ravel() for t in self.tensors.values()])

    def slices(self) -> "OrderedDict[str, slice]":
        out: OrderedDict[str, slice] = OrderedDict()
        offset = 0
        for name, tensor in self.tensors.items():
            out[name] = slice(offset, offset + tensor.size)
            offset += tensor.size
        return out

    def mask(self, prefixes: tuple[str, ...]) -> npt.NDArray[np.bool_]:
        """Boolean vector selecting every parameter whose name starts with a prefix."""
        selected = np.zeros(self.size, dtype=bool)
        for name, window in self.slices().items():
            if name.startswith(prefixes):
                selected[window] = True
        return selected
