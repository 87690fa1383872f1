"""Training objectives on head outputs, expressed as gradients w.r.t. head logits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
import numpy.typing as npt
from scipy.special import log_softmax, softmax

from streamslu.kernel.ctc import LossResult, collapse, ctc_loss
from streamslu.kernel.ctl import (
    DEFAULT_CTL_WEIGHT,
    DEFAULT_MIL_WEIGHT,
    CtlTarget,
    bag_labels,
    ctl_loss,
    ctl_mil_loss,
)
from streamslu.kernel.errors import ConfigError
from streamslu.network.config import ModelConfig
from streamslu.network.model import ForwardOutput, HeadGrads

LossKind = Literal["ce", "ctc", "ctl", "ctc+ce", "ctl+ce", "ctl+mil"]
CeTarget = Literal["final", "product"]

LOSS_KINDS: tuple[str, ...] = ("ce", "ctc", "ctl", "ctc+ce", "ctl+ce", "ctl+mil")
# whole-utterance classification; softmax heads, no sequence loss
UTTERANCE_LOSSES: tuple[str, ...] = ("ce",)
DEFAULT_SEQ_WEIGHT = 0.6
DEFAULT_CE_WEIGHT = 0.4


def head_mode_for(loss: str) -> str:
    if loss not in LOSS_KINDS:
        raise ConfigError(f"unknown loss '{loss}', expected one of {', '.join(LOSS_KINDS)}")
    if loss in UTTERANCE_LOSSES:
        return "ctc"
    return loss.split("+", 1)[0]


def cross_entropy(logits: npt.ArrayLike, label: int) -> LossResult:
    """Softmax cross-entropy of one logit row; gradient w.r.t. the row."""
    row = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < row.shape[-1]:
        raise ValueError(f"label {label} outside vocabulary of size {row.shape[-1]}")
    grad = softmax(row)
    grad[label] -= 1.0
    return LossResult(loss=-float(log_softmax(row)[label]), grad=grad)


def last_step_ce(
    logits: npt.ArrayLike,
    label: int,
    sequence: LossResult,
    w_seq: float = DEFAULT_SEQ_WEIGHT,
    w_ce: float = DEFAULT_CE_WEIGHT,
) -> LossResult:
    """Blend a sequence loss with cross-entropy on the final step's softmax.

    ``logits`` is the full (steps x classes) head logit matrix; ``sequence.grad``
    must be expressed w.r.t. the same matrix.
    """
    if w_seq < 0 or w_ce < 0 or not math.isclose(w_seq + w_ce, 1.0, abs_tol=1e-9):
        raise ValueError(f"weights must be non-negative and sum to 1, got {w_seq}, {w_ce}")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError(f"expected a non-empty logit matrix, got shape {logits.shape}")
    ce = cross_entropy(logits[-1], label)
    grad = np.zeros_like(logits)
    grad[-1] = ce.grad
    return sequence.scaled(w_seq) + LossResult(loss=ce.loss, grad=grad).scaled(w_ce)


def pair_ce(logits: npt.ArrayLike, labels: Sequence[int]) -> LossResult:
    """CE on a label pair read from the last two steps as one product-vocabulary class.

    The product class probability factorises as p_{T-2}(a) * p_{T-1}(b); with a
    single label or a single step this reduces to the final-step CE.
    """
    logits = np.asarray(logits, dtype=np.float64)
    grad = np.zeros_like(logits)
    if len(labels) < 2 or logits.shape[0] < 2:
        ce = cross_entropy(logits[-1], labels[-1])
        grad[-1] = ce.grad
        return LossResult(loss=ce.loss, grad=grad)
    first = cross_entropy(logits[-2], labels[-2])
    last = cross_entropy(logits[-1], labels[-1])
    grad[-2] = first.grad
    grad[-1] = last.grad
    return LossResult(loss=first.loss + last.loss, grad=grad)


@dataclass(frozen=True)
class ObjectiveWeights:
    seq: float = DEFAULT_SEQ_WEIGHT
    ce: float = DEFAULT_CE_WEIGHT
    ctl: float = DEFAULT_CTL_WEIGHT
    mil: float = DEFAULT_MIL_WEIGHT
    ce_target: CeTarget = "final"


@dataclass
class ObjectiveResult:
    loss: float
    grads: HeadGrads
    parts: dict[str, float] = field(default_factory=dict)


def head_loss(
    loss: str,
    cfg: ModelConfig,
    logits: npt.NDArray[np.float64],
    output: npt.NDArray[np.float64],
    labels: Sequence[int],
    n_classes: int,
    weights: ObjectiveWeights = ObjectiveWeights(),
) -> LossResult:
    """Loss of one head and its gradient w.r.t. that head's logits."""
    mode = head_mode_for(loss)
    if mode != cfg.head_mode:
        raise ConfigError(f"loss '{loss}' needs head_mode '{mode}', model uses '{cfg.head_mode}'")
    labels = [int(label) for label in labels]
    if loss in UTTERANCE_LOSSES:
        logits = np.asarray(logits, dtype=np.float64)
        if not labels:
            return LossResult(loss=0.0, grad=np.zeros_like(logits))
        symbols = [label + 1 for label in labels]
        return pair_ce(logits, symbols if weights.ce_target == "product" else symbols[-1:])
    if mode == "ctc":
        # Index 0 of the head is blank, so class c lives at c + 1.
        symbols = [label + 1 for label in labels]
        result = ctc_loss(output, symbols)
    else:
        target = CtlTarget.onsets(labels)
        if loss == "ctl+mil":
            on_y = ctl_mil_loss(output, target, bag_labels(target, n_classes), weights.ctl, weights.mil)
        else:
            on_y = ctl_loss(output, target)
        result = LossResult(loss=on_y.loss, grad=on_y.grad * output * (1.0 - output))
        symbols = labels

    if loss.endswith("+ce") and labels:
        if weights.ce_target == "product":
            ce = pair_ce(logits, symbols)
            blended = result.scaled(weights.seq) + ce.scaled(weights.ce)
            return blended
        return last_step_ce(logits, symbols[-1], result, weights.seq, weights.ce)
    return result


def objective(
    loss: str,
    cfg: ModelConfig,
    out: ForwardOutput,
    intents: Sequence[int],
    slots: Sequence[int],
    weights: ObjectiveWeights = ObjectiveWeights(),
) -> ObjectiveResult:
    """Sum of the slot-head and intent-head losses of one utterance."""
    slot = head_loss(loss, cfg, out.slot_logits, out.slot, slots, cfg.slot_vocab, weights)
    intent = head_loss(loss, cfg, out.intent_logits, out.intent, intents, cfg.intent_vocab, weights)
    return ObjectiveResult(
        loss=slot.loss + intent.loss,
        grads=HeadGrads(slot=slot.grad, intent=intent.grad),
        parts={"slot": slot.loss, "intent": intent.loss},
    )


def pretrain_target(frame_targets: Sequence[int]) -> list[int]:
    """Collapse per-frame auxiliary classes (0 = silence) into a CTC label sequence."""
    return collapse([int(t) for t in frame_targets], blank=0)


def pretrain_objective(out: ForwardOutput, frame_targets: Sequence[int]) -> ObjectiveResult:
    if out.pretrain is None:
        raise ConfigError("forward ran without the pretraining head")
    result = ctc_loss(out.pretrain, pretrain_target(frame_targets))
    return ObjectiveResult(
        loss=result.loss,
        grads=HeadGrads(pretrain=result.grad),
        parts={"pretrain": result.loss},
    )


def scaled_grads(grads: HeadGrads, weight: float) -> HeadGrads:
    def scale(g: Optional[npt.NDArray[np.float64]]) -> Optional[npt.NDArray[np.float64]]:
        return None if g is None else weight * g

    return HeadGrads(slot=scale(grads.slot), intent=scale(grads.intent), pretrain=scale(grads.pretrain))
