"""EvalVerb - exact-match accuracy of a trained run on a test manifest."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

from streamslu.harness.evaluate import evaluate, model_predictor, oracle_predictor, template_predictor
from streamslu.harness.metrics import MetricsRecord, MetricsStream
from streamslu.harness.runs import corpus_root, load_run
from streamslu.kernel.errors import ConfigError
from streamslu.kernel.layout import LayoutResolver
from streamslu.synth.corpus import make_templates
from streamslu.synth.manifest import read_manifest
from streamslu.verbs.verb_class import EXIT_OK, VerbClass

PREDICTORS = ("model", "oracle", "template")


class EvalVerb(VerbClass):
    name = "eval"

    def __init__(self) -> None:
        self.resolver = LayoutResolver()

    def run(self, options: Mapping[str, Any]) -> int:
        config, model, layout = load_run(Path(options["run"]), self.resolver)
        corpus = corpus_root(config, layout.config)
        manifest = read_manifest(self.resolver.manifest(str(options["manifest"]), root=corpus), self.resolver)
        kind = options.get("predictor") or "model"
        theta = config.theta if options.get("theta") is None else options["theta"]
        if kind == "model":
            predictor = model_predictor(model, theta, config.final_steps)
        elif kind == "oracle":
            predictor = oracle_predictor
        elif kind == "template":
            predictor = template_predictor(make_templates(manifest.spec))
        else:
            raise ConfigError(f"unknown predictor '{kind}', expected one of {', '.join(PREDICTORS)}")

        tally, elapsed = evaluate(manifest.utterances(), predictor)
        intent, slot, joint = tally.rates()
        record = MetricsRecord(
            epoch=config.epochs,
            split=manifest.split,
            intent_accuracy=intent,
            slot_accuracy=slot,
            joint_accuracy=joint,
            loss=None,
            wall_time=elapsed,
            count=tally.count,
            skipped=tally.skipped,
            stage=f"eval-{kind}",
            cell={**config.cell, "test_labels": manifest.labels_per_utterance},
        )
        MetricsStream(layout.metrics).append(record)
        print(
            f"✅ {manifest.split} ({tally.count} utterances, {manifest.labels_per_utterance} label): "
            f"intent {intent:.4f}  slot {slot:.4f}  intent+slot {joint:.4f}"
        )
        return EXIT_OK
