"""Per-frame decision rules: greedy CTC collapse and CTL onset thresholding."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import numpy.typing as npt

from streamslu.kernel.ctc import BLANK
from streamslu.kernel.errors import ConfigError

DEFAULT_THETA = 0.5


@dataclass(frozen=True)
class DecodeEvent:
    """One emitted label; ``frame`` counts head-rate steps, ``label`` is a class id."""

    head: str
    label: int
    frame: int
    score: float

    def to_record(self, session: str) -> dict[str, Any]:
        return {
            "session": session,
            "head": self.head,
            "frame": self.frame,
            "label": self.label,
            "score": self.score,
        }


@dataclass
class HeadState:
    """Decision memory of one head."""

    head: str
    last_symbol: Optional[int] = None
    previous: Optional[npt.NDArray[np.float64]] = None
    emitted: list[int] = field(default_factory=list)
    frames_seen: int = 0


def greedy_ctc_step(
    state: HeadState, row: npt.ArrayLike, blank: int = BLANK
) -> tuple[HeadState, Optional[DecodeEvent]]:
    """Best-path decision for one frame of log-probabilities.

    The argmax symbol is emitted when it is neither blank nor a repeat of the
    previous frame's symbol.
    """
    logp = np.asarray(row, dtype=np.float64)
    symbol = int(np.argmax(logp))
    frame = state.frames_seen
    state.frames_seen += 1
    event = None
    if symbol != blank and symbol != state.last_symbol:
        label = symbol - 1 if blank == 0 else symbol
        event = DecodeEvent(state.head, label, frame, float(np.exp(logp[symbol])))
        state.emitted.append(label)
    state.last_symbol = symbol
    return state, event


def onset_row(state: HeadState, y: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Onset boundary probabilities for one frame; the frame before the first is silence."""
    y = np.asarray(y, dtype=np.float64)
    previous = np.zeros_like(y) if state.previous is None else state.previous
    state.previous = y.copy()
    return np.maximum(y - previous, 0.0)


def ctl_threshold_step(
    state: HeadState, z: npt.ArrayLike, theta: float = DEFAULT_THETA
) -> tuple[HeadState, list[DecodeEvent]]:
    """Emit every label whose boundary probability reaches ``theta``, in label order."""
    if not 0.0 < theta < 1.0:
        raise ConfigError(f"theta must lie in (0, 1), got {theta}")
    z = np.asarray(z, dtype=np.float64)
    frame = state.frames_seen
    state.frames_seen += 1
    events = [DecodeEvent(state.head, int(label), frame, float(z[label])) for label in np.flatnonzero(z >= theta)]
    state.emitted.extend(event.label for event in events)
    return state, events
