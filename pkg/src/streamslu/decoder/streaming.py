"""Chunk-wise streaming decoding with prefix-consistent incremental state.

Raw frames are CMVN-normalised row by row, stacked through a window buffer that
holds the ``stack_width - stack_stride`` trailing frames, and fed to the same
step pipeline the offline forward pass uses. Chunk boundaries therefore never
change what is computed.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, TextIO

import numpy as np
import numpy.typing as npt

from streamslu.decoder.greedy import (
    DEFAULT_THETA,
    DecodeEvent,
    HeadState,
    ctl_threshold_step,
    greedy_ctc_step,
    onset_row,
)
from streamslu.kernel.errors import ConfigError
from streamslu.network.config import ModelConfig
from streamslu.network.layers import WindowBuffer
from streamslu.network.model import ForwardOutput, HeadStep, Pipeline, SluModel

logger = logging.getLogger(__name__)

HEADS = ("slot", "intent")


@dataclass
class StreamState:
    """Everything a session carries between chunks."""

    heads: dict[str, HeadState]
    remainder: WindowBuffer
    pipeline: Pipeline
    raw_frames: int = 0
    events: list[DecodeEvent] = field(default_factory=list)

    @classmethod
    def start(cls, model: SluModel) -> "StreamState":
        cfg = model.cfg
        return cls(
            heads={head: HeadState(head) for head in HEADS},
            remainder=WindowBuffer(cfg.stack_width, cfg.stack_stride),
            pipeline=Pipeline(cfg, model.params.tensors),
        )


@dataclass(frozen=True)
class DecodeResult:
    intents: list[int]
    slots: list[int]
    events: list[DecodeEvent]

    def events_for(self, head: str) -> list[DecodeEvent]:
        return [event for event in self.events if event.head == head]


def decode_row(
    state: HeadState, row: npt.NDArray[np.float64], head_mode: str, theta: float = DEFAULT_THETA
) -> list[DecodeEvent]:
    """Apply the head-mode decision rule to one head output row."""
    if head_mode == "ctc":
        _, event = greedy_ctc_step(state, row)
        return [event] if event is not None else []
    _, events = ctl_threshold_step(state, onset_row(state, row), theta)
    return events


def completion_order(slot_steps: int, intent_steps: int, intent_reduction: int) -> list[tuple[str, int]]:
    """Head steps in the order a streaming pipeline completes them.

    An intent step completes right after the last slot step of its reduction
    group; a trailing partial group completes after the final slot step.
    """
    order: list[tuple[str, int]] = []
    intent = 0
    for slot in range(slot_steps):
        order.append(("slot", slot))
        if (slot + 1) % intent_reduction == 0 and intent < intent_steps:
            order.append(("intent", intent))
            intent += 1
    order.extend(("intent", i) for i in range(intent, intent_steps))
    return order


def decode_output(out: ForwardOutput, cfg: ModelConfig, theta: float = DEFAULT_THETA) -> DecodeResult:
    """Single-shot decode of a complete forward pass, events in streaming order."""
    heads = {head: HeadState(head) for head in HEADS}
    rows = {"slot": out.slot, "intent": out.intent}
    events: list[DecodeEvent] = []
    for head, step in completion_order(out.slot.shape[0], out.intent.shape[0], cfg.intent_reduction):
        events.extend(decode_row(heads[head], rows[head][step], cfg.head_mode, theta))
    return DecodeResult(intents=heads["intent"].emitted, slots=heads["slot"].emitted, events=events)


def decode_last_steps(out: ForwardOutput, count: int = 1) -> DecodeResult:
    """Utterance-level decode for CE-trained heads: argmax of the final ``count`` steps, blank excluded."""
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    labels: dict[str, list[int]] = {}
    events: list[DecodeEvent] = []
    for head, rows in (("slot", out.slot), ("intent", out.intent)):
        first = max(rows.shape[0] - count, 0)
        labels[head] = []
        for step in range(first, rows.shape[0]):
            label = int(np.argmax(rows[step, 1:]))
            labels[head].append(label)
            events.append(DecodeEvent(head, label, step, float(np.exp(rows[step, label + 1]))))
    return DecodeResult(intents=labels["intent"], slots=labels["slot"], events=events)


class StreamingDecoder:
    """One streaming session over a trained model."""

    def __init__(self, model: SluModel, theta: float = DEFAULT_THETA, session: str = "0"):
        if not 0.0 < theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {theta}")
        self.model = model
        self.theta = theta
        self.session = session
        self.state = StreamState.start(model)

    def push(self, chunk: npt.ArrayLike) -> list[DecodeEvent]:
        """Consume raw feature frames and return the events they complete."""
        rows = self.model.normalise(chunk)
        events: list[DecodeEvent] = []
        for row in rows:
            self.state.raw_frames += 1
            for window in self.state.remainder.push(row):
                events.extend(self._decode(self.state.pipeline.push(np.concatenate(window))))
        self.state.events.extend(events)
        return events

    def finish(self) -> list[DecodeEvent]:
        """Flush partial time-reduction groups at end of utterance."""
        events = self._decode(self.state.pipeline.finish())
        self.state.events.extend(events)
        logger.debug(
            "session %s finished after %d raw frames, %d events",
            self.session,
            self.state.raw_frames,
            len(self.state.events),
        )
        return events

    def result(self) -> DecodeResult:
        heads = self.state.heads
        return DecodeResult(
            intents=list(heads["intent"].emitted),
            slots=list(heads["slot"].emitted),
            events=list(self.state.events),
        )

    def _decode(self, steps: list[HeadStep]) -> list[DecodeEvent]:
        events: list[DecodeEvent] = []
        for step in steps:
            events.extend(decode_row(self.state.heads[step.head], step.output, self.model.cfg.head_mode, self.theta))
        return events


def chunked(x: npt.ArrayLike, size: int) -> Iterator[npt.NDArray[np.floating]]:
    """Split a feature matrix into consecutive chunks of ``size`` frames."""
    if size < 1:
        raise ConfigError(f"chunk size must be >= 1, got {size}")
    x = np.asarray(x)
    for start in range(0, x.shape[0], size):
        yield x[start:start + size]


def stream_decode(
    model: SluModel,
    chunks: Iterable[npt.ArrayLike],
    theta: float = DEFAULT_THETA,
    session: str = "0",
    log: Optional[TextIO] = None,
) -> DecodeResult:
    """Decode an utterance delivered as a sequence of raw feature chunks."""
    decoder = StreamingDecoder(model, theta=theta, session=session)
    for chunk in chunks:
        write_events(decoder.push(chunk), session, log)
    write_events(decoder.finish(), session, log)
    return decoder.result()


def event_line(event: DecodeEvent, session: str) -> str:
    return json.dumps(event.to_record(session))


def write_events(events: Iterable[DecodeEvent], session: str, log: Optional[TextIO]) -> None:
    if log is None:
        return
    for event in events:
        log.write(event_line(event, session) + "\n")
    log.flush()
