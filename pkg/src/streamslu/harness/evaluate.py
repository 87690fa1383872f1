"""Exact-match evaluation over a manifest."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from streamslu.decoder.scoring import joint_accuracy, sequence_accuracy
from streamslu.decoder.streaming import decode_last_steps, decode_output
from streamslu.kernel.errors import ShapeError
from streamslu.network.model import SluModel
from streamslu.synth.corpus import SyntheticUtterance, Templates, nearest_template_predict

logger = logging.getLogger(__name__)

Prediction = tuple[list[int], list[int]]
Predictor = Callable[[SyntheticUtterance], Optional[Prediction]]


@dataclass
class Tally:
    count: int = 0
    intent: int = 0
    slot: int = 0
    joint: int = 0
    skipped: int = 0

    def add(self, prediction: Optional[Prediction], u: SyntheticUtterance) -> None:
        self.count += 1
        if prediction is None:
            self.skipped += 1
            return
        intents, slots = prediction
        intent_ok = sequence_accuracy(intents, u.intent_labels)
        slot_ok = sequence_accuracy(slots, u.slot_labels)
        self.intent += intent_ok
        self.slot += slot_ok
        self.joint += joint_accuracy(intent_ok, slot_ok)

    def rates(self) -> tuple[float, float, float]:
        if self.count == 0:
            return 0.0, 0.0, 0.0
        return self.intent / self.count, self.slot / self.count, self.joint / self.count


def model_predictor(model: SluModel, theta: float = 0.5, final_steps: Optional[int] = None) -> Predictor:
    """Decode every utterance in streaming order, or from its last ``final_steps`` steps."""

    def predict(u: SyntheticUtterance) -> Optional[Prediction]:
        try:
            out = model.forward(u.features)
        except ShapeError as exc:
            logger.warning("%s: %s", u.uid, exc)
            return None
        if final_steps is not None:
            result = decode_last_steps(out, final_steps)
        else:
            result = decode_output(out, model.cfg, theta)
        return result.intents, result.slots

    return predict


def oracle_predictor(u: SyntheticUtterance) -> Prediction:
    """Reads the reference labels back; every accuracy is 1 by construction."""
    return list(u.intent_labels), list(u.slot_labels)


def template_predictor(templates: Templates) -> Predictor:
    return lambda u: nearest_template_predict(u, templates)


def evaluate(utterances: Iterable[SyntheticUtterance], predictor: Predictor) -> tuple[Tally, float]:
    """Tally exact matches; undecodable utterances count as wrong."""
    start = time.perf_counter()
    tally = Tally()
    for u in utterances:
        tally.add(predictor(u), u)
    return tally, time.perf_counter() - start
