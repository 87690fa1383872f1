"""Model configuration and closed-form shape arithmetic."""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Literal, Mapping

import yaml

from streamslu.kernel.errors import ConfigError
from streamslu.kernel.features import stacked_length

HeadMode = Literal["ctc", "ctl"]
CellKind = Literal["lstm", "gru"]


@dataclass(frozen=True)
class ConvSpec:
    """3D convolution over (time, mel, stack-channel); valid padding."""

    kernel: tuple[int, int, int] = (5, 5, 1)
    stride: tuple[int, int, int] = (2, 2, 1)
    out_channels: int = 16

    def __post_init__(self) -> None:
        if len(self.kernel) != 3 or len(self.stride) != 3:
            raise ConfigError("conv kernel and stride need three entries (time, mel, stack)")
        if min(self.kernel) < 1 or min(self.stride) < 1 or self.out_channels < 1:
            raise ConfigError(f"conv dims must be >= 1: {self}")
        if self.kernel[2] != 1 or self.stride[2] != 1:
            raise ConfigError("only kernel 1 / stride 1 is supported along the stack-channel axis")


def _conv_length(length: int, kernel: int, stride: int) -> int:
    return 0 if length < kernel else (length - kernel) // stride + 1


@dataclass(frozen=True)
class ModelConfig:
    feat_dim: int = 16
    stack_width: int = 8
    stack_stride: int = 3
    conv: tuple[ConvSpec, ...] = (ConvSpec(out_channels=16), ConvSpec(out_channels=32))
    hidden: tuple[int, int, int] = (32, 32, 32)
    cell: CellKind = "lstm"
    slot_reduction: int = 1
    intent_reduction: int = 4
    slot_projection: int = 32
    intent_projection: int = 32
    slot_vocab: int = 8
    intent_vocab: int = 15
    head_mode: HeadMode = "ctc"
    pretrain_vocab: int = 0
    mel_dims: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        dims = {
            "feat_dim": self.feat_dim,
            "stack_width": self.stack_width,
            "stack_stride": self.stack_stride,
            "slot_reduction": self.slot_reduction,
            "intent_reduction": self.intent_reduction,
            "slot_projection": self.slot_projection,
            "intent_projection": self.intent_projection,
            "slot_vocab": self.slot_vocab,
            "intent_vocab": self.intent_vocab,
        }
        for name, value in dims.items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if len(self.hidden) != 3 or min(self.hidden) < 1:
            raise ConfigError(f"hidden needs three sizes >= 1, got {self.hidden}")
        if not self.conv:
            raise ConfigError("at least one conv layer is required")
        if self.head_mode not in ("ctc", "ctl"):
            raise ConfigError(f"unknown head_mode '{self.head_mode}'")
        if self.cell not in ("lstm", "gru"):
            raise ConfigError(f"unknown cell '{self.cell}'")
        if self.pretrain_vocab < 0:
            raise ConfigError("pretrain_vocab must be >= 0")
        mel = [self.feat_dim]
        for index, spec in enumerate(self.conv):
            size = _conv_length(mel[-1], spec.kernel[1], spec.stride[1])
            if size < 1:
                raise ConfigError(
                    f"conv layer {index} leaves no mel bins (input {mel[-1]}, kernel {spec.kernel[1]})"
                )
            mel.append(size)
        object.__setattr__(self, "mel_dims", tuple(mel))

    # ------------------------------------------------------------------
    # Derived sizes
    # ------------------------------------------------------------------
    @property
    def stacked_dim(self) -> int:
        return self.stack_width * self.feat_dim

    @property
    def conv_flat_dim(self) -> int:
        return self.mel_dims[-1] * self.stack_width * self.conv[-1].out_channels

    @property
    def slot_outputs(self) -> int:
        return self.slot_vocab + 1 if self.head_mode == "ctc" else self.slot_vocab

    @property
    def intent_outputs(self) -> int:
        return self.intent_vocab + 1 if self.head_mode == "ctc" else self.intent_vocab

    @property
    def gates(self) -> int:
        return 4 if self.cell == "lstm" else 3

    # ------------------------------------------------------------------
    # Length arithmetic
    # ------------------------------------------------------------------
    def conv_lengths(self, stacked: int) -> list[int]:
        lengths = [stacked]
        for spec in self.conv:
            lengths.append(_conv_length(lengths[-1], spec.kernel[0], spec.stride[0]))
        return lengths[1:]

    def output_lengths(self, raw_frames: int) -> dict[str, Any]:
        """Sequence lengths after stacking, each convolution, and both time reductions."""
        stacked = stacked_length(raw_frames, self.stack_width, self.stack_stride)
        conv = self.conv_lengths(stacked)
        slot = math.ceil(conv[-1] / self.slot_reduction)
        intent = math.ceil(slot / self.intent_reduction)
        return {"stacked": stacked, "conv": conv, "slot": slot, "intent": intent}

    def min_stacked_frames(self) -> int:
        needed = 1
        for spec in reversed(self.conv):
            needed = (needed - 1) * spec.stride[0] + spec.kernel[0]
        return needed

    def min_raw_frames(self) -> int:
        return (self.min_stacked_frames() - 1) * self.stack_stride + self.stack_width

    def conv_receptive_end(self, step: int) -> int:
        """Last raw frame index that conv output ``step`` (last layer) depends on."""
        index = step
        for spec in reversed(self.conv):
            index = index * spec.stride[0] + spec.kernel[0] - 1
        return index * self.stack_stride + self.stack_width - 1

    def slot_receptive_end(self, step: int) -> int:
        return self.conv_receptive_end((step + 1) * self.slot_reduction - 1)

    def intent_receptive_end(self, step: int) -> int:
        return self.slot_receptive_end((step + 1) * self.intent_reduction - 1)

    # ------------------------------------------------------------------
    # Serialisation
    # ------------------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data.pop("mel_dims", None)
        data["conv"] = [
            {"kernel": list(c.kernel), "stride": list(c.stride), "out_channels": c.out_channels}
            for c in self.conv
        ]
        data["hidden"] = list(self.hidden)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelConfig":
        data = dict(data)
        unknown = set(data) - {f for f in cls.__dataclass_fields__ if f != "mel_dims"}
        if unknown:
            raise ConfigError(f"unknown model keys: {', '.join(sorted(unknown))}")
        if "conv" in data:
            data["conv"] = tuple(
                ConvSpec(
                    kernel=tuple(c.get("kernel", (5, 5, 1))),
                    stride=tuple(c.get("stride", (2, 2, 1))),
                    out_channels=int(c.get("out_channels", 16)),
                )
                for c in data["conv"]
            )
        if "hidden" in data:
            data["hidden"] = tuple(int(h) for h in data["hidden"])
        return cls(**data)

    def digest(self) -> str:
        canonical = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
