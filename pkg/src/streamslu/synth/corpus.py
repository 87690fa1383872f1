"""Seeded synthetic streaming-SLU corpus.

Each intent and slot class owns a +-1 band pattern over the feature dims. A
command is silence, then the intent pattern with a shorter slot sub-span embedded
in its middle third, then silence. Speakers add a small constant offset to every
non-silent frame, and every frame gets Gaussian noise.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence

import numpy as np
import numpy.typing as npt

from streamslu.kernel.errors import ConfigError, ShapeError, SpeakerMismatchError

logger = logging.getLogger(__name__)

SILENCE = 0


@dataclass(frozen=True)
class CorpusSpec:
    n_intents: int = 15
    n_slots: int = 8
    feat_dim: int = 16
    command_frames: tuple[int, int] = (60, 90)
    silence_frames: tuple[int, int] = (12, 30)
    gap_frames: tuple[int, int] = (8, 16)
    noise: float = 0.3
    speaker_jitter: float = 0.2
    seed: int = 0
    size: int = 600
    speakers: int = 10
    labels_per_utterance: int = 1

    def __post_init__(self) -> None:
        if self.n_intents < 2 or self.n_slots < 2:
            raise ConfigError("n_intents and n_slots must both be >= 2")
        if self.noise < 0 or self.speaker_jitter < 0:
            raise ConfigError("noise and speaker_jitter must be >= 0")
        if self.speaker_jitter >= 0.5:
            raise ConfigError("speaker_jitter must stay below 0.5 to keep templates separable")
        if self.feat_dim < 1 or self.size < 0 or self.speakers < 1:
            raise ConfigError("feat_dim and speakers must be >= 1 and size >= 0")
        if self.labels_per_utterance not in (1, 2):
            raise ConfigError("labels_per_utterance must be 1 or 2")
        if 2 ** self.feat_dim < max(self.n_intents, self.n_slots):
            raise ConfigError(f"feat_dim {self.feat_dim} cannot hold distinct templates")
        for name in ("command_frames", "silence_frames", "gap_frames"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ConfigError(f"{name} must be a (low, high) range with 0 <= low <= high")
        if self.command_frames[0] < 3:
            raise ConfigError("commands need at least 3 frames to embed a slot span")

    @property
    def frame_classes(self) -> int:
        """Auxiliary frame-target alphabet: silence, every intent, every slot."""
        return 1 + self.n_intents + self.n_slots

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        for key in ("command_frames", "silence_frames", "gap_frames"):
            data[key] = list(data[key])
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CorpusSpec":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown corpus keys: {', '.join(sorted(unknown))}")
        for key in ("command_frames", "silence_frames", "gap_frames"):
            if key in data:
                data[key] = tuple(int(v) for v in data[key])
        return cls(**data)


@dataclass(frozen=True)
class Segment:
    """One command: ``[start, end)`` frames, its slot sub-span, and its labels."""

    start: int
    end: int
    intent: int
    slot: int
    slot_start: int
    slot_end: int

    def shifted(self, offset: int) -> "Segment":
        return replace(
            self,
            start=self.start + offset,
            end=self.end + offset,
            slot_start=self.slot_start + offset,
            slot_end=self.slot_end + offset,
        )


@dataclass(frozen=True)
class SyntheticUtterance:
    uid: str
    features: npt.NDArray[np.float32]
    intent_labels: tuple[int, ...]
    slot_labels: tuple[int, ...]
    segments: tuple[Segment, ...]
    frame_targets: npt.NDArray[np.int64]
    speaker: int

    @property
    def frames(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class Templates:
    intent: npt.NDArray[np.float64]
    slot: npt.NDArray[np.float64]
    speaker: npt.NDArray[np.float64]


def _distinct_patterns(rng: np.random.Generator, count: int, dim: int) -> npt.NDArray[np.float64]:
    patterns: list[npt.NDArray[np.float64]] = []
    seen: set[bytes] = set()
    while len(patterns) < count:
        pattern = rng.choice([-1.0, 1.0], size=dim)
        key = pattern.tobytes()
        if key not in seen:
            seen.add(key)
            patterns.append(pattern)
    return np.stack(patterns)


def make_templates(spec: CorpusSpec) -> Templates:
    rng = np.random.default_rng([spec.seed, 0x7E4])
    return Templates(
        intent=_distinct_patterns(rng, spec.n_intents, spec.feat_dim),
        slot=_distinct_patterns(rng, spec.n_slots, spec.feat_dim),
        speaker=rng.uniform(-spec.speaker_jitter, spec.speaker_jitter, size=(spec.speakers, spec.feat_dim)),
    )


def _noise(rng: np.random.Generator, frames: int, spec: CorpusSpec) -> npt.NDArray[np.float64]:
    return spec.noise * rng.standard_normal((frames, spec.feat_dim))


def _span(rng: np.random.Generator, bounds: tuple[int, int]) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def command(
    spec: CorpusSpec,
    templates: Templates,
    intent: int,
    slot: int,
    speaker: int,
    rng: np.random.Generator,
    uid: str,
) -> SyntheticUtterance:
    """Silence, one command with its embedded slot, silence."""
    lead = _span(rng, spec.silence_frames)
    length = _span(rng, spec.command_frames)
    tail = _span(rng, spec.silence_frames)
    total = lead + length + tail

    clean = np.zeros((total, spec.feat_dim))
    targets = np.full(total, SILENCE, dtype=np.int64)
    start, end = lead, lead + length
    slot_start, slot_end = start + length // 3, start + (2 * length) // 3
    clean[start:end] = templates.intent[intent] + templates.speaker[speaker]
    clean[slot_start:slot_end] = templates.slot[slot] + templates.speaker[speaker]
    targets[start:end] = 1 + intent
    targets[slot_start:slot_end] = 1 + spec.n_intents + slot
    features = (clean + _noise(rng, total, spec)).astype(np.float32)
    return SyntheticUtterance(
        uid=uid,
        features=features,
        intent_labels=(intent,),
        slot_labels=(slot,),
        segments=(Segment(start, end, intent, slot, slot_start, slot_end),),
        frame_targets=targets,
        speaker=speaker,
    )


def silence(spec: CorpusSpec, frames: int, speaker: int = 0, seed: Optional[int] = None) -> SyntheticUtterance:
    """A label-free utterance of noise only."""
    rng = np.random.default_rng([spec.seed if seed is None else seed, frames, speaker])
    return SyntheticUtterance(
        uid=f"silence-{speaker}-{frames}",
        features=_noise(rng, frames, spec).astype(np.float32),
        intent_labels=(),
        slot_labels=(),
        segments=(),
        frame_targets=np.zeros(frames, dtype=np.int64),
        speaker=speaker,
    )


def concat_two(
    a: SyntheticUtterance,
    b: SyntheticUtterance,
    gap: int = 0,
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> SyntheticUtterance:
    """Join two utterances of one speaker with ``gap`` frames of noise-only silence."""
    if a.speaker != b.speaker:
        raise SpeakerMismatchError(f"cannot join speaker {a.speaker} with speaker {b.speaker}")
    if a.features.shape[1] != b.features.shape[1]:
        raise ShapeError(f"feature dims differ: {a.features.shape[1]} vs {b.features.shape[1]}")
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    dim = a.features.shape[1]
    filler = np.zeros((gap, dim))
    if noise > 0 and gap > 0:
        filler = noise * (rng or np.random.default_rng()).standard_normal((gap, dim))
    offset = a.frames + gap
    return SyntheticUtterance(
        uid=f"{a.uid}+{b.uid}",
        features=np.concatenate([a.features, filler.astype(np.float32), b.features]),
        intent_labels=a.intent_labels + b.intent_labels,
        slot_labels=a.slot_labels + b.slot_labels,
        segments=a.segments + tuple(s.shifted(offset) for s in b.segments),
        frame_targets=np.concatenate([a.frame_targets, np.zeros(gap, dtype=np.int64), b.frame_targets]),
        speaker=a.speaker,
    )


def utterance(spec: CorpusSpec, index: int, templates: Optional[Templates] = None) -> SyntheticUtterance:
    """The ``index``-th utterance; depends only on ``(spec, index)``."""
    templates = templates or make_templates(spec)
    rng = np.random.default_rng([spec.seed, index])
    speaker = int(rng.integers(spec.speakers))
    if spec.labels_per_utterance == 1:
        intent = index % spec.n_intents
        slot = (index // spec.n_intents) % spec.n_slots
        return command(spec, templates, intent, slot, speaker, rng, uid=f"u{index:05d}")

    # every ordered intent pair appears equally often
    first = index % spec.n_intents
    second = (index // spec.n_intents) % spec.n_intents
    slots = rng.integers(spec.n_slots, size=2)
    a = command(spec, templates, first, int(slots[0]), speaker, rng, uid=f"u{index:05d}a")
    b = command(spec, templates, second, int(slots[1]), speaker, rng, uid=f"u{index:05d}b")
    joined = concat_two(a, b, gap=_span(rng, spec.gap_frames), noise=spec.noise, rng=rng)
    return replace(joined, uid=f"u{index:05d}")


def generate(spec: CorpusSpec) -> list[SyntheticUtterance]:
    templates = make_templates(spec)
    corpus = [utterance(spec, index, templates) for index in range(spec.size)]
    logger.info(
        "generated %d utterances (%d label%s each)",
        len(corpus),
        spec.labels_per_utterance,
        "" if spec.labels_per_utterance == 1 else "s",
    )
    return corpus


def split(
    corpus: Sequence[SyntheticUtterance],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> dict[str, list[SyntheticUtterance]]:
    """Speaker-disjoint train/valid/test partition."""
    names = ("train", "valid", "test")
    if len(ratios) != len(names) or min(ratios) < 0 or not np.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {tuple(ratios)}")
    groups = sorted({u.speaker for u in corpus})
    if len(groups) < len(names):
        raise ConfigError(f"need at least {len(names)} speaker groups to split, found {len(groups)}")

    # largest-remainder allocation, at least one group per partition
    exact = np.asarray(ratios, dtype=np.float64) * len(groups)
    counts = np.maximum(np.floor(exact).astype(int), 1)
    while counts.sum() < len(groups):
        counts[int(np.argmax(exact - counts))] += 1
    while counts.sum() > len(groups):
        counts[int(np.argmax(np.where(counts > 1, counts - exact, -np.inf)))] -= 1

    order = np.random.default_rng(seed).permutation(groups)
    assignment: dict[int, str] = {}
    cursor = 0
    for name, count in zip(names, counts):
        for group in order[cursor:cursor + count]:
            assignment[int(group)] = name
        cursor += count
    parts: dict[str, list[SyntheticUtterance]] = {name: [] for name in names}
    for item in corpus:
        parts[assignment[item.speaker]].append(item)
    return parts


def _command_mean(u: SyntheticUtterance, seg: Segment) -> npt.NDArray[np.float64]:
    frames = u.features[seg.start:seg.end].astype(np.float64)
    keep = np.ones(seg.end - seg.start, dtype=bool)
    keep[seg.slot_start - seg.start:seg.slot_end - seg.start] = False
    return frames[keep].mean(axis=0)


def _nearest(mean: npt.NDArray[np.float64], patterns: npt.NDArray[np.float64]) -> int:
    return int(np.argmin(((patterns - mean) ** 2).sum(axis=1)))


def nearest_template_predict(u: SyntheticUtterance, templates: Templates) -> tuple[list[int], list[int]]:
    """Classify every segment by the template nearest to its mean frame."""
    intents, slots = [], []
    for seg in u.segments:
        intents.append(_nearest(_command_mean(u, seg), templates.intent))
        slot_mean = u.features[seg.slot_start:seg.slot_end].astype(np.float64).mean(axis=0)
        slots.append(_nearest(slot_mean, templates.slot))
    return intents, slots


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def validate_utterance(u: SyntheticUtterance, spec: Optional[CorpusSpec] = None) -> ValidationReport:
    """Label, segment and frame-target consistency of one utterance."""
    report = ValidationReport()
    if u.features.ndim != 2 or not np.all(np.isfinite(u.features)):
        report.problems.append(f"{u.uid}: features must be a finite matrix")
    if u.frame_targets.shape != (u.frames,):
        report.problems.append(f"{u.uid}: {u.frame_targets.shape[0]} frame targets for {u.frames} frames")
    if tuple(s.intent for s in u.segments) != u.intent_labels:
        report.problems.append(f"{u.uid}: intent labels disagree with segments")
    if tuple(s.slot for s in u.segments) != u.slot_labels:
        report.problems.append(f"{u.uid}: slot labels disagree with segments")
    previous_end = 0
    for seg in u.segments:
        if not previous_end <= seg.start <= seg.slot_start <= seg.slot_end <= seg.end <= u.frames:
            report.problems.append(f"{u.uid}: segment {seg} overlaps or leaves the utterance")
        previous_end = seg.end
        if spec is not None and u.frame_targets.shape == (u.frames,):
            if np.any(u.frame_targets[seg.slot_start:seg.slot_end] != 1 + spec.n_intents + seg.slot):
                report.problems.append(f"{u.uid}: slot frame targets disagree with segment")
    return report
