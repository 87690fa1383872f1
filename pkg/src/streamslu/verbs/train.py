"""TrainVerb - train a model from an experiment config."""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Any, Mapping

from streamslu.harness.config import ExperimentConfig
from streamslu.harness.runs import corpus_root
from streamslu.harness.trainer import resolve_config, train_model
from streamslu.kernel.containers import read_cmvn
from streamslu.kernel.errors import ConfigError
from streamslu.kernel.layout import LayoutResolver
from streamslu.synth.manifest import read_manifest
from streamslu.verbs.verb_class import EXIT_OK, VerbClass


class TrainVerb(VerbClass):
    name = "train"

    def __init__(self) -> None:
        self.resolver = LayoutResolver()

    def run(self, options: Mapping[str, Any]) -> int:
        config_path = Path(options["config"])
        config = ExperimentConfig.load(config_path).with_overrides(
            seed=options.get("seed"),
            epochs=options.get("epochs"),
            workers=1 if options.get("deterministic") else options.get("workers"),
        )
        corpus = self.resolver.layout(corpus_root(config, config_path))
        train_manifest = read_manifest(corpus.manifest("train"), self.resolver)
        if not corpus.cmvn.exists():
            raise ConfigError(f"corpus {corpus.root} has no {corpus.cmvn.name}")
        config = replace(resolve_config(config, train_manifest.spec), corpus=str(corpus.root))

        valid_path = corpus.manifest("valid")
        valid = list(read_manifest(valid_path).utterances()) if valid_path.exists() else []
        run = self.resolver.layout(Path(options.get("run") or config_path.parent))
        result = train_model(
            config,
            run,
            list(train_manifest.utterances()),
            read_cmvn(corpus.cmvn),
            valid=valid,
            progress=not options.get("quiet", False),
        )
        losses = [r.loss for r in result.records if r.split == "train" and r.stage == "train" and r.loss is not None]
        summary = f"loss {losses[0]:.4f} -> {losses[-1]:.4f}" if losses else "no usable utterances"
        print(f"✅ Trained {config.name} ({config.loss}): {summary}")
        print(f"📁 {run.checkpoint}, {run.metrics}")
        return EXIT_OK
