"""Append-only JSON-lines metrics stream."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator, Optional


@dataclass(frozen=True)
class MetricsRecord:
    """One row of the intent / slot / intent+slot accuracy table."""

    epoch: int
    split: str
    intent_accuracy: Optional[float]
    slot_accuracy: Optional[float]
    joint_accuracy: Optional[float]
    loss: Optional[float]
    wall_time: float
    count: int = 0
    skipped: int = 0
    stage: str = "train"
    cell: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("intent_accuracy", "slot_accuracy", "joint_accuracy"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def to_json(self) -> str:
        return json.dumps(asdict(self))


class MetricsStream:
    """Writes each record as one flushed line so partial runs stay parseable."""

    def __init__(self, path: Path):
        self.path = Path(path)

    def append(self, record: MetricsRecord) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a") as f:
            f.write(record.to_json() + "\n")

    def __iter__(self) -> Iterator[MetricsRecord]:
        return read_metrics(self.path)


def read_metrics(path: Path) -> Iterator[MetricsRecord]:
    path = Path(path)
    if not path.exists():
        return
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                yield MetricsRecord(**json.loads(line))
