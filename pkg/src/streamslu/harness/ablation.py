"""Loss x train-labels ablation over several seeds.

Each cell trains one run directory under the ablation root, then is scored on
the held-out speakers of the 1-label corpus and the 2-label corpus. A comparison
counts the seeds on which one cell beats another on intent+slot exact match.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from streamslu.harness.config import ExperimentConfig
from streamslu.harness.evaluate import evaluate, model_predictor
from streamslu.harness.metrics import MetricsRecord, MetricsStream
from streamslu.harness.trainer import resolve_config, train_model
from streamslu.kernel.errors import ConfigError
from streamslu.kernel.features import accumulate_cmvn
from streamslu.kernel.layout import LayoutResolver
from streamslu.network.model import SluModel
from streamslu.network.objectives import LOSS_KINDS, head_mode_for
from streamslu.synth.corpus import CorpusSpec, SyntheticUtterance, generate, split

logger = logging.getLogger(__name__)

ABLATION_LOSSES = ("ce", "ctc", "ctl", "ctc+ce", "ctl+ce", "ctl+mil")
DEFAULT_SEEDS = (0, 1, 2)
TEST_LABELS = (1, 2)


@dataclass(frozen=True)
class Cell:
    loss: str
    train_labels: int

    @property
    def name(self) -> str:
        return f"{self.loss.replace('+', '-')}-{self.train_labels}l"


@dataclass(frozen=True)
class Comparison:
    """``better`` should beat ``worse`` on the ``test_labels`` test split."""

    name: str
    better: Cell
    worse: Cell
    test_labels: int


COMPARISONS = (
    Comparison("joint-ce-over-ctc", Cell("ctc+ce", 1), Cell("ctc", 1), 1),
    Comparison("joint-ce-over-ctl", Cell("ctl+ce", 1), Cell("ctl", 1), 1),
    Comparison("mil-over-ctl", Cell("ctl+mil", 1), Cell("ctl", 1), 1),
    Comparison("two-label-training", Cell("ctc+ce", 2), Cell("ctc+ce", 1), 2),
)


@dataclass(frozen=True)
class AblationPlan:
    base: ExperimentConfig
    corpus: CorpusSpec = CorpusSpec(size=300)
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    losses: tuple[str, ...] = ABLATION_LOSSES
    two_label_losses: tuple[str, ...] = ("ctc+ce",)
    epochs: int = 15

    def __post_init__(self) -> None:
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct and non-empty, got {self.seeds}")
        for loss in (*self.losses, *self.two_label_losses):
            if loss not in LOSS_KINDS:
                raise ConfigError(f"unknown loss '{loss}', expected one of {', '.join(LOSS_KINDS)}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    def cells(self) -> list[Cell]:
        return [Cell(loss, 1) for loss in self.losses] + [Cell(loss, 2) for loss in self.two_label_losses]

    def corpus_for(self, labels: int) -> CorpusSpec:
        return replace(self.corpus, labels_per_utterance=labels)

    def config_for(self, cell: Cell, seed: int) -> ExperimentConfig:
        base = self.base
        return replace(
            base,
            name=f"{cell.name}-s{seed}",
            loss=cell.loss,
            train_labels=cell.train_labels,
            seed=seed,
            epochs=self.epochs,
            pretrain_layer1=False,
            mil_weight=base.mil_weight if cell.loss == "ctl+mil" else None,
            model=replace(base.model, head_mode=head_mode_for(cell.loss)),
        )


@dataclass(frozen=True)
class Score:
    cell: Cell
    seed: int
    test_labels: int
    intent: float
    slot: float
    joint: float


@dataclass(frozen=True)
class ComparisonResult:
    comparison: Comparison
    pairs: tuple[tuple[int, float, float], ...]  # (seed, better joint, worse joint)

    @property
    def wins(self) -> int:
        return sum(better > worse for _, better, worse in self.pairs)

    @property
    def holds(self) -> bool:
        """Strictly better on a majority of seeds (2 of 3)."""
        return bool(self.pairs) and 2 * self.wins > len(self.pairs)

    def line(self) -> str:
        c = self.comparison
        mark = "✅" if self.holds else "❌"
        seeds = ", ".join(f"s{seed} {better:.3f}/{worse:.3f}" for seed, better, worse in self.pairs)
        return (
            f"{mark} {c.name}: {c.better.name} > {c.worse.name} on {c.test_labels}-label test, "
            f"{self.wins}/{len(self.pairs)} seeds ({seeds})"
        )


@dataclass
class AblationReport:
    scores: list[Score] = field(default_factory=list)
    results: list[ComparisonResult] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return all(r.holds for r in self.results)

    def joint(self, cell: Cell, seed: int, test_labels: int) -> Optional[float]:
        for s in self.scores:
            if (s.cell, s.seed, s.test_labels) == (cell, seed, test_labels):
                return s.joint
        return None


def compare(
    scores: Sequence[Score], comparisons: Iterable[Comparison] = COMPARISONS
) -> list[ComparisonResult]:
    """Pair the two cells of every comparison seed by seed; comparisons missing a cell are left out."""
    report = AblationReport(scores=list(scores))
    seeds = sorted({s.seed for s in scores})
    results = []
    for comparison in comparisons:
        pairs = []
        for seed in seeds:
            better = report.joint(comparison.better, seed, comparison.test_labels)
            worse = report.joint(comparison.worse, seed, comparison.test_labels)
            if better is not None and worse is not None:
                pairs.append((seed, better, worse))
        if not pairs:
            logger.info("skipping %s: its cells are not in this plan", comparison.name)
            continue
        results.append(ComparisonResult(comparison, tuple(pairs)))
    return results


def _splits(spec: CorpusSpec) -> dict[str, list[SyntheticUtterance]]:
    return split(generate(spec), seed=spec.seed)


def run_ablation(
    plan: AblationPlan,
    root: Path,
    workers: int = 1,
    progress: bool = False,
    resolver: Optional[LayoutResolver] = None,
) -> AblationReport:
    """Train every cell for every seed under ``root`` and compare the cells."""
    resolver = resolver or LayoutResolver()
    root = Path(root)
    corpora = {labels: _splits(plan.corpus_for(labels)) for labels in TEST_LABELS}
    report = AblationReport()
    for seed in plan.seeds:
        for cell in plan.cells():
            spec = plan.corpus_for(cell.train_labels)
            config = replace(resolve_config(plan.config_for(cell, seed), spec), workers=workers)
            train = corpora[cell.train_labels]["train"]
            cmvn = accumulate_cmvn(u.features for u in train)
            run = resolver.layout(root / config.name)
            result = train_model(config, run, train, cmvn, progress=progress)

            model = SluModel(config.model, result.params, cmvn)
            stream = MetricsStream(run.metrics)
            for test_labels in TEST_LABELS if cell.train_labels == 1 else (cell.train_labels,):
                predictor = model_predictor(model, config.theta, config.final_steps)
                tally, elapsed = evaluate(corpora[test_labels]["test"], predictor)
                intent, slot, joint = tally.rates()
                stream.append(
                    MetricsRecord(
                        epoch=config.epochs,
                        split="test",
                        intent_accuracy=intent,
                        slot_accuracy=slot,
                        joint_accuracy=joint,
                        loss=None,
                        wall_time=elapsed,
                        count=tally.count,
                        skipped=tally.skipped,
                        stage="ablation",
                        cell={**config.cell, "test_labels": test_labels, "seed": seed},
                    )
                )
                report.scores.append(Score(cell, seed, test_labels, intent, slot, joint))
                logger.info(
                    "%s seed %d on %d-label test: intent+slot %.4f", cell.name, seed, test_labels, joint
                )
    report.results = compare(report.scores)
    return report
