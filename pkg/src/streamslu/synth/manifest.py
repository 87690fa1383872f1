"""Corpus manifests (YAML) and feature payloads (FEAT files)."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import groupby
from pathlib import Path
from typing import Any, Iterator, Mapping, Optional, Sequence

import numpy as np
import yaml

from streamslu.kernel.containers import read_features, write_cmvn, write_features
from streamslu.kernel.errors import ConfigError
from streamslu.kernel.features import accumulate_cmvn
from streamslu.kernel.layout import LayoutResolver, RunLayout
from streamslu.synth.corpus import CorpusSpec, Segment, SyntheticUtterance

logger = logging.getLogger(__name__)


def _run_length(targets: np.ndarray) -> list[list[int]]:
    return [[int(label), len(list(run))] for label, run in groupby(targets.tolist())]


def _expand(runs: Sequence[Sequence[int]]) -> np.ndarray:
    if not runs:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([np.full(count, label, dtype=np.int64) for label, count in runs])


def entry_for(u: SyntheticUtterance, feature_path: str) -> dict[str, Any]:
    return {
        "id": u.uid,
        "features": feature_path,
        "speaker": u.speaker,
        "frames": u.frames,
        "intents": list(u.intent_labels),
        "slots": list(u.slot_labels),
        "segments": [
            [s.start, s.end, s.intent, s.slot, s.slot_start, s.slot_end] for s in u.segments
        ],
        "frame_targets": _run_length(u.frame_targets),
    }


@dataclass(frozen=True)
class Manifest:
    path: Path
    spec: CorpusSpec
    split: str
    entries: list[dict[str, Any]]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels_per_utterance(self) -> int:
        return self.spec.labels_per_utterance

    def load(self, entry: Mapping[str, Any]) -> SyntheticUtterance:
        features = read_features(self.path.parent / entry["features"])
        return SyntheticUtterance(
            uid=str(entry["id"]),
            features=features,
            intent_labels=tuple(int(v) for v in entry["intents"]),
            slot_labels=tuple(int(v) for v in entry["slots"]),
            segments=tuple(Segment(*(int(v) for v in seg)) for seg in entry["segments"]),
            frame_targets=_expand(entry["frame_targets"]),
            speaker=int(entry["speaker"]),
        )

    def utterances(self) -> Iterator[SyntheticUtterance]:
        for entry in self.entries:
            yield self.load(entry)


def write_manifest(
    layout: RunLayout, split: str, spec: CorpusSpec, corpus: Sequence[SyntheticUtterance]
) -> Path:
    """Write FEAT payloads for ``corpus`` and its manifest; returns the manifest path."""
    layout.features.mkdir(parents=True, exist_ok=True)
    entries = []
    for u in corpus:
        relative = f"{layout.features.name}/{u.uid}.feat"
        write_features(layout.root / relative, u.features)
        entries.append(entry_for(u, relative))
    path = layout.manifest(split)
    document = {"split": split, "spec": spec.to_dict(), "utterances": entries}
    with open(path, "w") as f:
        yaml.safe_dump(document, f, sort_keys=False)
    logger.info("wrote %s (%d utterances)", path, len(entries))
    return path


def write_corpus(
    root: Path, spec: CorpusSpec, parts: Mapping[str, Sequence[SyntheticUtterance]]
) -> RunLayout:
    """Write every split plus global CMVN statistics over the training split."""
    layout = LayoutResolver().layout(root)
    layout.root.mkdir(parents=True, exist_ok=True)
    for split, corpus in parts.items():
        write_manifest(layout, split, spec, corpus)
    train = parts.get("train") or next((c for c in parts.values() if c), [])
    if train:
        write_cmvn(layout.cmvn, accumulate_cmvn(u.features for u in train))
    return layout


def read_manifest(path: Path, resolver: Optional[LayoutResolver] = None) -> Manifest:
    path = Path(path)
    if not path.exists():
        found = (resolver or LayoutResolver()).existing_manifests(path.parent)
        raise ConfigError(f"manifest not found: {path} (splits here: {', '.join(found) or 'none'})")
    with open(path) as f:
        document = yaml.safe_load(f) or {}
    for key in ("spec", "utterances"):
        if key not in document:
            raise ConfigError(f"manifest {path} is missing '{key}'")
    split = str(document.get("split", "train"))
    if resolver is not None:
        split = resolver.normalise_split(split)
    return Manifest(
        path=path,
        spec=CorpusSpec.from_dict(document["spec"]),
        split=split,
        entries=list(document["utterances"] or []),
    )
