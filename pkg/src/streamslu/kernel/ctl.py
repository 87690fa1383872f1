"""Connectionist temporal localization.

Event probabilities ``y`` (T x E) are turned into onset/offset boundary
probabilities with a rectified delta. Boundary labels are independent per frame,
so a frame may emit any set of labels: no blank and no collapsing of repeats.
The emission recurrence runs in linear space with per-frame rescaling.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np
import numpy.typing as npt

from streamslu.kernel.ctc import LossResult
from streamslu.kernel.errors import InstanceTooLargeError, ShapeError, UnreachableTargetError
from streamslu.kernel.gradcheck import central_difference, max_relative_error

logger = logging.getLogger(__name__)

EventProbs = npt.NDArray[np.float64]
LabelMode = Literal["onset", "boundary"]

BRUTE_FORCE_LIMIT = 10**6
BCE_CLIP = 1e-7
DEFAULT_CTL_WEIGHT = 0.5
DEFAULT_MIL_WEIGHT = 0.5


@dataclass(frozen=True)
class BoundaryProbs:
    z_on: npt.NDArray[np.float64]
    z_off: npt.NDArray[np.float64]


@dataclass(frozen=True)
class CtlTarget:
    """Ordered boundary labels.

    In ``onset`` mode a label id is an event id. In ``boundary`` mode event ``e``
    owns label ``2e`` (onset) and ``2e + 1`` (offset).
    """

    labels: tuple[int, ...]
    mode: LabelMode = "onset"

    @classmethod
    def onsets(cls, events: Iterable[int]) -> "CtlTarget":
        return cls(labels=tuple(int(e) for e in events), mode="onset")

    @classmethod
    def intervals(cls, events: Iterable[int]) -> "CtlTarget":
        """Boundary-mode target with an onset then offset per event occurrence."""
        labels: list[int] = []
        for event in events:
            labels.extend((2 * int(event), 2 * int(event) + 1))
        return cls(labels=tuple(labels), mode="boundary")

    def __len__(self) -> int:
        return len(self.labels)

    def event_of(self, label: int) -> int:
        return label // 2 if self.mode == "boundary" else label


def alphabet_size(n_events: int, mode: LabelMode) -> int:
    return 2 * n_events if mode == "boundary" else n_events


def _check_probs(y: EventProbs) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] == 0:
        raise ShapeError(f"expected a non-empty (T, E) matrix, got shape {y.shape}")
    if not np.all(np.isfinite(y)) or y.min() < 0.0 or y.max() > 1.0:
        raise ShapeError("event probabilities must be finite and lie in [0, 1]")
    return y


def rectified_delta(y: EventProbs) -> BoundaryProbs:
    """Onset/offset probabilities from frame-to-frame increases/decreases, with y[-1] = 0."""
    y = _check_probs(y)
    delta = np.diff(y, axis=0, prepend=0.0)
    return BoundaryProbs(z_on=np.maximum(delta, 0.0), z_off=np.maximum(-delta, 0.0))


def boundary_matrix(bp: BoundaryProbs, mode: LabelMode) -> np.ndarray:
    if mode == "onset":
        return bp.z_on
    frames, events = bp.z_on.shape
    z = np.empty((frames, 2 * events))
    z[:, 0::2] = bp.z_on
    z[:, 1::2] = bp.z_off
    return z


def _emission(z_row: np.ndarray, members: Sequence[int]) -> tuple[float, np.ndarray]:
    """Probability of emitting exactly ``members`` at one frame, and its partials in z."""
    size = z_row.shape[0]
    if len(set(members)) != len(members):
        return 0.0, np.zeros(size)
    mask = np.zeros(size, dtype=bool)
    mask[list(members)] = True
    factors = np.where(mask, z_row, 1.0 - z_row)
    prefix = np.concatenate(([1.0], np.cumprod(factors[:-1])))
    suffix = np.concatenate((np.cumprod(factors[::-1][:-1])[::-1], [1.0]))
    partials = np.where(mask, 1.0, -1.0) * prefix * suffix
    return float(np.prod(factors)), partials


def emission_prob(z: Sequence[float], emitted: Iterable[int]) -> float:
    """Independent-label probability of emitting exactly the set ``emitted`` at one frame."""
    z_row = np.asarray(z, dtype=np.float64)
    return _emission(z_row, list(emitted))[0]


@dataclass
class _Lattice:
    """Per-frame emission terms for every target slice ``labels[start:start + j]``."""

    labels: tuple[int, ...]
    width: int
    prob: dict[tuple[int, int, int], float] = field(default_factory=dict)
    partials: dict[tuple[int, int, int], np.ndarray] = field(default_factory=dict)

    @classmethod
    def build(cls, z: np.ndarray, labels: tuple[int, ...]) -> "_Lattice":
        frames, size = z.shape
        k = len(labels)
        lattice = cls(labels=labels, width=min(k, size))
        for t in range(frames):
            for start in range(k + 1):
                for j in range(min(lattice.width, k - start) + 1):
                    p, dp = _emission(z[t], labels[start:start + j])
                    lattice.prob[t, start, j] = p
                    lattice.partials[t, start, j] = dp
        return lattice


def boundary_loss(z: np.ndarray, labels: Sequence[int]) -> LossResult:
    """Emission recurrence on an explicit (T x L) boundary matrix; gradient w.r.t. z."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ShapeError(f"expected a non-empty (T, L) boundary matrix, got shape {z.shape}")
    frames, size = z.shape
    target = tuple(int(label) for label in labels)
    if target and (min(target) < 0 or max(target) >= size):
        raise ShapeError(f"labels must lie in [0, {size}), got {list(target)}")
    k = len(target)
    lattice = _Lattice.build(z, target)

    alpha = np.zeros((frames + 1, k + 1))
    alpha[0, 0] = 1.0
    scale = np.ones(frames + 1)
    for t in range(1, frames + 1):
        for i in range(k + 1):
            alpha[t, i] = sum(
                alpha[t - 1, i - j] * lattice.prob[t - 1, i - j, j]
                for j in range(min(i, lattice.width) + 1)
            )
        total = alpha[t].sum()
        if total == 0.0:
            raise UnreachableTargetError(f"no emission path survives frame {t - 1}")
        alpha[t] /= total
        scale[t] = total
    final = alpha[frames, k]
    if final == 0.0:
        raise UnreachableTargetError(f"{k} labels cannot be emitted in {frames} frames")
    loss = -(float(np.log(scale[1:]).sum()) + math.log(final))

    beta = np.zeros((frames + 1, k + 1))
    beta[frames, k] = 1.0
    grad = np.zeros_like(z)
    for t in range(frames, 0, -1):
        norm = scale[t] * final
        for i in range(k + 1):
            acc = 0.0
            for j in range(min(k - i, lattice.width) + 1):
                weight = beta[t, i + j]
                if weight == 0.0:
                    continue
                acc += lattice.prob[t - 1, i, j] * weight
                if alpha[t - 1, i] != 0.0:
                    grad[t - 1] -= alpha[t - 1, i] * weight * lattice.partials[t - 1, i, j] / norm
            beta[t - 1, i] = acc / scale[t]
    return LossResult(loss=loss, grad=grad)


def _delta_chain(y: np.ndarray, g_on: np.ndarray, g_off: np.ndarray) -> np.ndarray:
    """Push boundary gradients through the rectified delta (subgradient 0 at ties)."""
    delta = np.diff(y, axis=0, prepend=0.0)
    d_delta = g_on * (delta > 0) - g_off * (delta < 0)
    grad = d_delta.copy()
    grad[:-1] -= d_delta[1:]
    return grad


def ctl_loss(y: EventProbs, target: CtlTarget) -> LossResult:
    """CTL negative log-likelihood with the gradient with respect to ``y``."""
    y = _check_probs(y)
    bp = rectified_delta(y)
    z = boundary_matrix(bp, target.mode)
    result = boundary_loss(z, target.labels)
    if target.mode == "onset":
        g_on, g_off = result.grad, np.zeros_like(y)
    else:
        g_on, g_off = result.grad[:, 0::2], result.grad[:, 1::2]
    return LossResult(loss=result.loss, grad=_delta_chain(y, g_on, g_off))


def ctl_brute_force(y: EventProbs, target: CtlTarget, limit: int = BRUTE_FORCE_LIMIT) -> float:
    """Sum over every per-frame emission subset sequence that concatenates to the target."""
    y = _check_probs(y)
    z = boundary_matrix(rectified_delta(y), target.mode)
    frames, size = z.shape
    subsets = 2**size
    paths = subsets**frames
    if paths > limit:
        raise InstanceTooLargeError(paths, limit)

    members = [tuple(l for l in range(size) if mask >> l & 1) for mask in range(subsets)]
    frame_prob = [[emission_prob(z[t], members[m]) for m in range(subsets)] for t in range(frames)]
    labels = target.labels
    terms: list[float] = []
    for path in itertools.product(range(subsets), repeat=frames):
        pos = 0
        consistent = True
        for mask in path:
            chunk = labels[pos:pos + len(members[mask])]
            if len(chunk) != len(members[mask]) or len(set(chunk)) != len(chunk):
                consistent = False
                break
            if set(chunk) != set(members[mask]):
                consistent = False
                break
            pos += len(chunk)
        if consistent and pos == len(labels):
            terms.append(math.prod(frame_prob[t][mask] for t, mask in enumerate(path)))
    total = math.fsum(terms)
    if total == 0.0:
        raise UnreachableTargetError("every emission path has probability zero")
    return -math.log(total)


def mil_pool(y: EventProbs) -> np.ndarray:
    """Linear softmax pooling ``sum(y^2) / sum(y)`` per event; 0 where the column is all zero."""
    y = _check_probs(y)
    mass = y.sum(axis=0)
    energy = (y**2).sum(axis=0)
    return np.divide(energy, mass, out=np.zeros_like(mass), where=mass > 0)


def _mil_pool_grad(y: np.ndarray, pooled: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    mass = y.sum(axis=0)
    safe = np.where(mass > 0, mass, 1.0)
    local = (2.0 * y - pooled) / safe
    return np.where(mass > 0, local * upstream, 0.0)


def bag_labels(target: CtlTarget, n_events: int) -> np.ndarray:
    """Recording-level labels: event ``e`` is present iff any of its labels is in the target."""
    bag = np.zeros(n_events)
    for label in target.labels:
        bag[target.event_of(label)] = 1.0
    return bag


def mil_bce(y: EventProbs, bag: Sequence[float]) -> LossResult:
    """Mean binary cross-entropy between pooled recording probabilities and bag labels."""
    y = _check_probs(y)
    bag_arr = np.asarray(bag, dtype=np.float64)
    if bag_arr.shape != (y.shape[1],):
        raise ShapeError(f"bag labels need shape ({y.shape[1]},), got {bag_arr.shape}")
    pooled = mil_pool(y)
    clipped = np.clip(pooled, BCE_CLIP, 1.0 - BCE_CLIP)
    events = y.shape[1]
    loss = -float(np.mean(bag_arr * np.log(clipped) + (1.0 - bag_arr) * np.log1p(-clipped)))
    d_pooled = (-bag_arr / clipped + (1.0 - bag_arr) / (1.0 - clipped)) / events
    d_pooled = np.where(clipped == pooled, d_pooled, 0.0)
    return LossResult(loss=loss, grad=_mil_pool_grad(y, pooled, d_pooled))


def ctl_mil_loss(
    y: EventProbs,
    target: CtlTarget,
    bag: Sequence[float],
    w_ctl: float = DEFAULT_CTL_WEIGHT,
    w_mil: float = DEFAULT_MIL_WEIGHT,
) -> LossResult:
    """Weighted average of the CTL loss and the MIL recording-level cross-entropy."""
    if w_ctl < 0 or w_mil < 0 or not math.isclose(w_ctl + w_mil, 1.0, abs_tol=1e-9):
        raise ValueError(f"weights must be non-negative and sum to 1, got {w_ctl}, {w_mil}")
    y = _check_probs(y)
    total = LossResult(loss=0.0, grad=np.zeros_like(y))
    if w_ctl > 0:
        total = total + ctl_loss(y, target).scaled(w_ctl)
    if w_mil > 0:
        total = total + mil_bce(y, bag).scaled(w_mil)
    return total


def ctl_grad_check(y: EventProbs, target: CtlTarget, h: float = 1e-6) -> float:
    """Central differences on ``y``; callers keep y away from rectifier ties."""
    y = _check_probs(y)
    analytic = ctl_loss(y, target).grad
    numeric = central_difference(lambda point: ctl_loss(point, target).loss, y, h)
    error = max_relative_error(analytic, numeric)
    logger.debug("ctl grad check T=%d E=%d k=%d max rel err %.3e", *y.shape, len(target), error)
    return error
