"""Synthetic single- and two-command corpora."""
from streamslu.synth.corpus import (
    CorpusSpec,
    Segment,
    SyntheticUtterance,
    Templates,
    concat_two,
    generate,
    make_templates,
    nearest_template_predict,
    silence,
    split,
    validate_utterance,
)
from streamslu.synth.manifest import Manifest, read_manifest, write_corpus

__all__ = [
    "CorpusSpec",
    "Manifest",
    "Segment",
    "SyntheticUtterance",
    "Templates",
    "concat_two",
    "generate",
    "make_templates",
    "nearest_template_predict",
    "read_manifest",
    "silence",
    "split",
    "validate_utterance",
    "write_corpus",
]
