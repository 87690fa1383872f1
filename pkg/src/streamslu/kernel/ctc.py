"""Connectionist temporal classification in log space.

The loss marginalises over every frame-level path that collapses (merge repeats,
drop blanks) to the target. Forward and backward variables run over the
blank-interleaved target of length ``2U + 1``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import numpy.typing as npt
from scipy.special import log_softmax, logsumexp

from streamslu.kernel.errors import InstanceTooLargeError, NoAlignmentError, ShapeError
from streamslu.kernel.gradcheck import central_difference, max_relative_error

logger = logging.getLogger(__name__)

BLANK = 0
BRUTE_FORCE_LIMIT = 10**6
NORMALIZATION_TOLERANCE = 1e-6

FrameLogProbs = npt.NDArray[np.float64]
LabelSequence = Sequence[int]


@dataclass(frozen=True)
class LossResult:
    """Negative log-likelihood and its gradient with respect to the loss input.

    For CTC the gradient is taken with respect to the frame logits (softmax
    tangent, rows sum to zero); for CTL it is taken with respect to the event
    probabilities.
    """

    loss: float
    grad: npt.NDArray[np.float64]

    def scaled(self, weight: float) -> "LossResult":
        return LossResult(loss=weight * self.loss, grad=weight * self.grad)

    def __add__(self, other: "LossResult") -> "LossResult":
        if self.grad.shape != other.grad.shape:
            raise ShapeError(f"cannot add gradients of shape {self.grad.shape} and {other.grad.shape}")
        return LossResult(loss=self.loss + other.loss, grad=self.grad + other.grad)


def collapse(path: Sequence[int], blank: int = BLANK) -> list[int]:
    """Merge repeated symbols, then remove blanks."""
    out: list[int] = []
    previous = None
    for symbol in path:
        if symbol != previous and symbol != blank:
            out.append(int(symbol))
        previous = symbol
    return out


def required_frames(labels: LabelSequence) -> int:
    """Minimum number of frames: one per label plus a blank between adjacent repeats."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _check_inputs(x: FrameLogProbs, y: LabelSequence) -> tuple[np.ndarray, np.ndarray]:
    logp = np.asarray(x, dtype=np.float64)
    if logp.ndim != 2 or logp.shape[0] == 0:
        raise ShapeError(f"expected a non-empty (T, V) matrix, got shape {logp.shape}")
    labels = np.asarray(list(y), dtype=np.int64)
    vocab = logp.shape[1]
    if labels.size and (labels.min() < 1 or labels.max() >= vocab):
        raise ShapeError(f"labels must lie in [1, {vocab}), got {labels.tolist()}")
    drift = np.abs(logsumexp(logp, axis=1)).max()
    if drift > NORMALIZATION_TOLERANCE:
        raise ShapeError(f"frame log-probabilities are not normalized (max drift {drift:.2e})")
    return logp, labels


def _extend(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ext = np.full(2 * labels.size + 1, BLANK, dtype=np.int64)
    ext[1::2] = labels
    skip = np.zeros(ext.size, dtype=bool)
    if ext.size > 2:
        skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return ext, skip


def _forward(emit: np.ndarray, skip: np.ndarray) -> np.ndarray:
    frames, states = emit.shape
    alpha = np.full((frames, states), -np.inf)
    alpha[0, 0] = emit[0, 0]
    if states > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, frames):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]
    return alpha


def _backward(emit: np.ndarray, skip: np.ndarray) -> np.ndarray:
    frames, states = emit.shape
    beta = np.full((frames, states), -np.inf)
    beta[-1, -1] = emit[-1, -1]
    if states > 1:
        beta[-1, -2] = emit[-1, -2]
    for t in range(frames - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + emit[t]
    return beta


def ctc_loss(x: FrameLogProbs, y: LabelSequence) -> LossResult:
    """Forward-backward CTC loss with the softmax-tangent gradient ``p - occupancy``."""
    logp, labels = _check_inputs(x, y)
    frames = logp.shape[0]
    needed = required_frames(labels.tolist())
    if frames < needed:
        raise NoAlignmentError(frames, needed)

    ext, skip = _extend(labels)
    emit = logp[:, ext]
    alpha = _forward(emit, skip)
    beta = _backward(emit, skip)
    tail = alpha[-1, -2:] if ext.size > 1 else alpha[-1, -1:]
    log_likelihood = float(np.logaddexp.reduce(tail))
    if not np.isfinite(log_likelihood):
        raise NoAlignmentError(frames, needed)

    finite = np.isfinite(emit)
    log_occ = np.where(finite, alpha + beta - np.where(finite, emit, 0.0) - log_likelihood, -np.inf)
    occupancy = np.zeros_like(logp)
    rows = np.broadcast_to(np.arange(frames)[:, None], emit.shape)
    cols = np.broadcast_to(ext[None, :], emit.shape)
    np.add.at(occupancy, (rows, cols), np.exp(log_occ))
    grad = np.exp(logp) - occupancy
    return LossResult(loss=-log_likelihood, grad=grad)


def ctc_brute_force(x: FrameLogProbs, y: LabelSequence, limit: int = BRUTE_FORCE_LIMIT) -> float:
    """Enumerate all ``V**T`` paths and sum those collapsing to ``y``."""
    logp, labels = _check_inputs(x, y)
    frames, vocab = logp.shape
    paths = vocab**frames
    if paths > limit:
        raise InstanceTooLargeError(paths, limit)
    target = labels.tolist()
    steps = np.arange(frames)
    scores = [
        float(logp[steps, list(path)].sum())
        for path in itertools.product(range(vocab), repeat=frames)
        if collapse(path) == target
    ]
    if not scores:
        raise NoAlignmentError(frames, required_frames(target))
    total = float(logsumexp(scores))
    if not np.isfinite(total):
        raise NoAlignmentError(frames, required_frames(target))
    return -total


def ctc_grad_check(x: FrameLogProbs, y: LabelSequence, h: float = 1e-5) -> float:
    """Max relative error between the analytic gradient and re-normalised central differences."""
    if not 1e-6 <= h <= 1e-4:
        raise ValueError(f"step h must lie in [1e-6, 1e-4], got {h}")
    logits = np.asarray(x, dtype=np.float64)
    analytic = ctc_loss(logits, y).grad

    def loss_at(point: np.ndarray) -> float:
        return ctc_loss(log_softmax(point, axis=1), y).loss

    numeric = central_difference(loss_at, logits, h)
    error = max_relative_error(analytic, numeric)
    logger.debug("ctc grad check T=%d V=%d U=%d max rel err %.3e", *logits.shape, len(y), error)
    return error
