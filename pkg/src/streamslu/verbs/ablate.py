"""AblateVerb - train the loss x train-labels grid over seeds and check the orderings."""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from streamslu.harness.ablation import ABLATION_LOSSES, DEFAULT_SEEDS, AblationPlan, run_ablation
from streamslu.harness.config import ExperimentConfig
from streamslu.synth.corpus import CorpusSpec
from streamslu.verbs.init import template_text
from streamslu.verbs.verb_class import EXIT_OK, EXIT_VERIFY_FAILED, VerbClass


class AblateVerb(VerbClass):
    name = "ablate"

    def run(self, options: Mapping[str, Any]) -> int:
        config_path = options.get("config")
        if config_path:
            base = ExperimentConfig.load(Path(config_path))
        else:
            base = ExperimentConfig.from_dict(yaml.safe_load(template_text("ablation")))
        corpus = CorpusSpec(size=300)
        if options.get("size") is not None:
            corpus = replace(corpus, size=options["size"])
        plan = AblationPlan(
            base=base,
            corpus=corpus,
            seeds=tuple(options.get("seeds") or DEFAULT_SEEDS),
            losses=tuple(options.get("losses") or ABLATION_LOSSES),
            epochs=options.get("epochs") or AblationPlan.epochs,
        )
        root = Path(options["out"])
        report = run_ablation(
            plan,
            root,
            workers=options.get("workers") or 1,
            progress=not options.get("quiet", False),
        )
        for score in report.scores:
            print(
                f"   {score.cell.name:<14} seed {score.seed}  {score.test_labels}-label test  "
                f"intent {score.intent:.4f}  slot {score.slot:.4f}  intent+slot {score.joint:.4f}"
            )
        for result in report.results:
            print(result.line())
        print(f"📁 {len(plan.cells()) * len(plan.seeds)} runs under {root}")
        if not report.holds:
            failing = [r.comparison.name for r in report.results if not r.holds]
            print(f"❌ orderings not reproduced: {', '.join(failing)}")
            return EXIT_VERIFY_FAILED
        print(f"✅ {len(report.results)} orderings reproduced")
        return EXIT_OK
