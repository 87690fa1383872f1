"""GenVerb - generate a synthetic corpus with speaker-disjoint splits."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

from streamslu.synth.corpus import CorpusSpec, generate, split, validate_utterance
from streamslu.synth.manifest import write_corpus
from streamslu.verbs.verb_class import EXIT_ERROR, EXIT_OK, VerbClass

SPEC_OPTIONS = ("size", "seed", "speakers", "noise", "feat_dim", "n_intents", "n_slots", "labels_per_utterance")


class GenVerb(VerbClass):
    name = "gen"

    def run(self, options: Mapping[str, Any]) -> int:
        spec = CorpusSpec(**{k: options[k] for k in SPEC_OPTIONS if options.get(k) is not None})
        corpus = generate(spec)
        problems = [p for u in corpus for p in validate_utterance(u, spec).problems]
        if problems:
            for problem in problems[:10]:
                print(f"❌ {problem}")
            return EXIT_ERROR
        parts = split(corpus, options.get("ratios") or (0.8, 0.1, 0.1), seed=spec.seed)
        layout = write_corpus(Path(options["out"]), spec, parts)
        sizes = ", ".join(f"{name}={len(items)}" for name, items in parts.items())
        print(f"✅ Generated {len(corpus)} utterances in {layout.root} ({sizes})")
        return EXIT_OK
