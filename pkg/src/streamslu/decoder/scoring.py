"""Exact-match scoring of decoded label sequences."""
from __future__ import annotations

from typing import Sequence


def sequence_accuracy(pred: Sequence[int], truth: Sequence[int]) -> int:
    """1 when both sequences hold the same labels in the same order."""
    return int(list(pred) == list(truth))


def joint_accuracy(intent_exact: int, slot_exact: int) -> int:
    return intent_exact * slot_exact
