"""Streaming SLU network: stacked features -> 3D convs -> three recurrent layers -> heads.

The slot head reads layer-2 states after the slot time reduction; its posterior
is concatenated into the layer-3 input; the intent head reads layer-3 states
after a further reduction. ``Pipeline`` evaluates the network one stacked frame
at a time and is shared by ``forward`` and the streaming decoder.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import numpy.typing as npt
from scipy.special import expit
from scipy.special import log_softmax as _log_softmax

from streamslu.kernel import tape as ops
from streamslu.kernel.errors import ShapeError, TapeError
from streamslu.kernel.features import CmvnStats, apply_cmvn, stack_frames
from streamslu.kernel.tape import Operand, Tape
from streamslu.network.config import ModelConfig
from streamslu.network.layers import (
    CELLS,
    Dropout,
    WindowBuffer,
    conv_window,
    linear,
    reduce_group,
    stacked_volume,
    zero_state,
)
from streamslu.network.params import ModelParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HeadStep:
    head: str
    index: int
    logits: npt.NDArray[np.float64]
    output: npt.NDArray[np.float64]


class Pipeline:
    """Incremental evaluation of the network for one utterance or streaming session."""

    def __init__(
        self,
        cfg: ModelConfig,
        params: Mapping[str, Operand],
        dropout: Optional[Dropout] = None,
        pretrain: bool = False,
        frontend_only: bool = False,
    ):
        self.cfg = cfg
        self.params = params
        self.dropout = dropout
        self.pretrain = pretrain and cfg.pretrain_vocab > 0
        self.frontend_only = frontend_only
        self._conv = [WindowBuffer(spec.kernel[0], spec.stride[0]) for spec in cfg.conv]
        self._states = [zero_state(cfg.cell, size) for size in cfg.hidden]
        self._slot_group: list[Operand] = []
        self._intent_group: list[Operand] = []
        self.slot_logits: list[Operand] = []
        self.intent_logits: list[Operand] = []
        self.pretrain_logits: list[Operand] = []
        self.conv_steps = 0
        self.finished = False

    # ------------------------------------------------------------------
    # Feeding
    # ------------------------------------------------------------------
    def push(self, stacked_row: npt.ArrayLike) -> list[HeadStep]:
        if self.finished:
            raise RuntimeError("pipeline already finished")
        cfg = self.cfg
        items: list[Operand] = [stacked_volume(stacked_row, cfg.stack_width, cfg.feat_dim)]
        for layer, (spec, buffer) in enumerate(zip(cfg.conv, self._conv), start=1):
            produced: list[Operand] = []
            for item in items:
                for window in buffer.push(item):
                    out = conv_window(
                        ops.stack(window),
                        self.params[f"conv{layer}.W"],
                        self.params[f"conv{layer}.b"],
                        stride_mel=spec.stride[1],
                    )
                    produced.append(ops.relu(out))
            items = produced
        steps: list[HeadStep] = []
        for feature in items:
            self.conv_steps += 1
            steps.extend(self._recurrent(ops.reshape(feature, shape=(-1,))))
        return steps

    def finish(self) -> list[HeadStep]:
        """Flush zero-padded partial reduction groups."""
        steps: list[HeadStep] = []
        if not self.frontend_only:
            if self._slot_group:
                steps.extend(self._emit_slot())
            if self._intent_group:
                steps.extend(self._emit_intent())
        self.finished = True
        return steps

    # ------------------------------------------------------------------
    # Layers
    # ------------------------------------------------------------------
    def _rnn(self, layer: int, x: Operand) -> Operand:
        p = self.params
        state = CELLS[self.cfg.cell](
            x,
            self._states[layer],
            p[f"rnn{layer + 1}.Wx"],
            p[f"rnn{layer + 1}.Wh"],
            p[f"rnn{layer + 1}.b"],
            self.cfg.hidden[layer],
        )
        self._states[layer] = state
        return self.dropout(state[0]) if self.dropout else state[0]

    def _recurrent(self, x: Operand) -> list[HeadStep]:
        h1 = self._rnn(0, x)
        if self.pretrain:
            self.pretrain_logits.append(
                linear(h1, self.params["pretrain_head.W"], self.params["pretrain_head.b"])
            )
        if self.frontend_only:
            return []
        self._slot_group.append(self._rnn(1, h1))
        if len(self._slot_group) == self.cfg.slot_reduction:
            return self._emit_slot()
        return []

    def _head(self, name: str, group: list[Operand], factor: int) -> tuple[Operand, Operand, HeadStep]:
        p = self.params
        projected = reduce_group(group, factor, p[f"{name}_proj.W"], p[f"{name}_proj.b"])
        logits = linear(projected, p[f"{name}_head.W"], p[f"{name}_head.b"])
        raw = ops.value_of(logits)
        if self.cfg.head_mode == "ctc":
            posterior = ops.softmax(logits)
            output = _log_softmax(raw)
        else:
            posterior = ops.sigmoid(logits)
            output = expit(raw)
        history = self.slot_logits if name == "slot" else self.intent_logits
        step = HeadStep(name, len(history), raw.copy(), output)
        history.append(logits)
        return projected, posterior, step

    def _emit_slot(self) -> list[HeadStep]:
        projected, posterior, step = self._head("slot", self._slot_group, self.cfg.slot_reduction)
        self._slot_group = []
        steps = [step]
        self._intent_group.append(self._rnn(2, ops.concat([projected, posterior])))
        if len(self._intent_group) == self.cfg.intent_reduction:
            steps.extend(self._emit_intent())
        return steps

    def _emit_intent(self) -> list[HeadStep]:
        _, _, step = self._head("intent", self._intent_group, self.cfg.intent_reduction)
        self._intent_group = []
        return [step]


@dataclass
class Trace:
    tape: Tape
    source: ModelParams
    variables: dict[str, Operand]
    slot: list[Operand]
    intent: list[Operand]
    pretrain: list[Operand]


@dataclass
class ForwardOutput:
    """Head outputs: log-probabilities in ctc mode, event probabilities in ctl mode."""

    slot: npt.NDArray[np.float64]
    intent: npt.NDArray[np.float64]
    slot_logits: npt.NDArray[np.float64]
    intent_logits: npt.NDArray[np.float64]
    rate_ratio: int
    pretrain: Optional[npt.NDArray[np.float64]] = None
    trace: Optional[Trace] = field(default=None, repr=False)


@dataclass(frozen=True)
class HeadGrads:
    """Upstream gradients with respect to each head's logits (rows = head steps)."""

    slot: Optional[npt.NDArray[np.float64]] = None
    intent: Optional[npt.NDArray[np.float64]] = None
    pretrain: Optional[npt.NDArray[np.float64]] = None


def _rows(steps: list[HeadStep], head: str, attr: str, width: int) -> npt.NDArray[np.float64]:
    rows = [getattr(s, attr) for s in steps if s.head == head]
    return np.stack(rows) if rows else np.zeros((0, width))


def check_input(x: npt.ArrayLike, cfg: ModelConfig) -> npt.NDArray[np.float64]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.stacked_dim:
        raise ShapeError(f"expected stacked input of shape (T, {cfg.stacked_dim}), got {x.shape}")
    if cfg.conv_lengths(x.shape[0])[-1] < 1:
        raise ShapeError(
            f"input too short: {x.shape[0]} stacked frames, need at least "
            f"{cfg.min_stacked_frames()} ({cfg.min_raw_frames()} raw frames)"
        )
    return x


def forward(
    params: ModelParams,
    x: npt.ArrayLike,
    cfg: ModelConfig,
    tape: Optional[Tape] = None,
    dropout: Optional[Dropout] = None,
    pretrain: bool = False,
    frontend_only: bool = False,
) -> ForwardOutput:
    """Run the network over a CMVN-normalised, stacked utterance."""
    x = check_input(x, cfg)
    if params.cfg != cfg:
        raise ShapeError("parameters were built for a different model config")
    variables: dict[str, Operand] = (
        dict(params.tensors) if tape is None else {n: tape.variable(v) for n, v in params.tensors.items()}
    )
    pipe = Pipeline(cfg, variables, dropout=dropout, pretrain=pretrain, frontend_only=frontend_only)
    steps: list[HeadStep] = []
    for row in x:
        steps.extend(pipe.push(row))
    steps.extend(pipe.finish())

    pretrain_out = None
    if pipe.pretrain_logits:
        pretrain_out = _log_softmax(np.stack([ops.value_of(v) for v in pipe.pretrain_logits]), axis=1)
    trace = None
    if tape is not None:
        trace = Trace(tape, params, variables, pipe.slot_logits, pipe.intent_logits, pipe.pretrain_logits)
    return ForwardOutput(
        slot=_rows(steps, "slot", "output", cfg.slot_outputs),
        intent=_rows(steps, "intent", "output", cfg.intent_outputs),
        slot_logits=_rows(steps, "slot", "logits", cfg.slot_outputs),
        intent_logits=_rows(steps, "intent", "logits", cfg.intent_outputs),
        rate_ratio=cfg.intent_reduction,
        pretrain=pretrain_out,
        trace=trace,
    )


def backward(params: ModelParams, out: ForwardOutput, upstream: HeadGrads) -> npt.NDArray[np.float64]:
    """Reverse-accumulate head gradients into a flat parameter gradient vector."""
    trace = out.trace
    if trace is None:
        raise TapeError("forward was evaluated without a tape")
    if trace.source is not params:
        raise TapeError("mismatched tape: forward recorded different parameters")
    seeds = []
    for name, handles, grad in (
        ("slot", trace.slot, upstream.slot),
        ("intent", trace.intent, upstream.intent),
        ("pretrain", trace.pretrain, upstream.pretrain),
    ):
        if grad is None:
            continue
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape[0] != len(handles):
            raise TapeError(f"{name} gradient has {grad.shape[0]} rows, forward produced {len(handles)}")
        seeds.extend(zip(handles, grad))
    adjoints = trace.tape.backward(seeds)
    return np.concatenate([adjoints.of(trace.variables[name]).ravel() for name in params])


class SluModel:
    """Configuration, parameters and CMVN statistics needed to run inference."""

    def __init__(self, cfg: ModelConfig, params: ModelParams, cmvn: Optional[CmvnStats] = None):
        self.cfg = cfg
        self.params = params
        self.cmvn = cmvn

    def normalise(self, raw: npt.ArrayLike) -> npt.NDArray[np.float64]:
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[1] != self.cfg.feat_dim:
            raise ShapeError(f"expected raw features of dim {self.cfg.feat_dim}, got shape {raw.shape}")
        return apply_cmvn(raw, self.cmvn) if self.cmvn is not None else raw

    def prepare(self, raw: npt.ArrayLike) -> npt.NDArray[np.float64]:
        stacked = stack_frames(self.normalise(raw), self.cfg.stack_width, self.cfg.stack_stride)
        return stacked.frames

    def forward(self, raw: npt.ArrayLike) -> ForwardOutput:
        return forward(self.params, self.prepare(raw), self.cfg)
