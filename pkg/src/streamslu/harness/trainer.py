"""Mini-batch training under the ctc / ctl / joint-CE / MIL strategies.

With ``pretrain_layer1`` the convolutional front-end and the first recurrent
layer are first trained alone with CTC on the per-frame auxiliary targets, then
frozen while the rest of the network trains on the head objectives.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import numpy as np
import numpy.typing as npt
from tqdm import tqdm

from streamslu.harness.config import ExperimentConfig
from streamslu.harness.evaluate import evaluate, model_predictor
from streamslu.harness.metrics import MetricsRecord, MetricsStream
from streamslu.harness.optim import build_optimizer
from streamslu.kernel.containers import write_cmvn
from streamslu.kernel.errors import ConfigError, NoAlignmentError, UnreachableTargetError
from streamslu.kernel.features import CmvnStats
from streamslu.kernel.layout import RunLayout
from streamslu.kernel.tape import Tape
from streamslu.network.checkpoint import save_checkpoint
from streamslu.network.layers import Dropout
from streamslu.network.model import SluModel, backward, forward
from streamslu.network.objectives import objective, pretrain_objective
from streamslu.network.params import FRONTEND_PREFIXES, ModelParams
from streamslu.synth.corpus import CorpusSpec, SyntheticUtterance

logger = logging.getLogger(__name__)

STAGES = ("pretrain", "train")
T = TypeVar("T")
R = TypeVar("R")


def resolve_config(config: ExperimentConfig, spec: CorpusSpec) -> ExperimentConfig:
    """Fill corpus-dependent model sizes (feature dim, vocabularies, frame-target alphabet)."""
    model = replace(
        config.model,
        feat_dim=spec.feat_dim,
        slot_vocab=spec.n_slots,
        intent_vocab=spec.n_intents,
        pretrain_vocab=spec.frame_classes if config.pretrain_layer1 else 0,
    )
    if spec.labels_per_utterance != config.train_labels:
        raise ConfigError(
            f"train_labels is {config.train_labels} but the corpus has "
            f"{spec.labels_per_utterance} label(s) per utterance"
        )
    return replace(config, model=model)


@dataclass(frozen=True)
class Example:
    uid: str
    x: npt.NDArray[np.float64]
    intents: tuple[int, ...]
    slots: tuple[int, ...]
    frame_targets: npt.NDArray[np.int64]


def prepare(model: SluModel, corpus: Iterable[SyntheticUtterance]) -> tuple[list[Example], int]:
    """CMVN + stacking for every utterance long enough for the network."""
    examples, dropped = [], 0
    minimum = model.cfg.min_raw_frames()
    for u in corpus:
        if u.frames < minimum:
            logger.warning("dropping %s: %d frames, network needs %d", u.uid, u.frames, minimum)
            dropped += 1
            continue
        examples.append(Example(u.uid, model.prepare(u.features), u.intent_labels, u.slot_labels, u.frame_targets))
    return examples, dropped


@dataclass
class TrainResult:
    params: ModelParams
    records: list[MetricsRecord] = field(default_factory=list)


class Trainer:
    def __init__(
        self,
        config: ExperimentConfig,
        run: RunLayout,
        train: Sequence[SyntheticUtterance],
        cmvn: CmvnStats,
        valid: Sequence[SyntheticUtterance] = (),
        progress: bool = False,
    ):
        self.config = config
        self.cfg = config.model
        self.run = run
        self.cmvn = cmvn
        self.valid = list(valid)
        self.progress = progress
        self.stream = MetricsStream(run.metrics)
        self.examples, _ = prepare(SluModel(self.cfg, ModelParams.zeros(self.cfg), cmvn), train)
        if not self.examples:
            raise ConfigError("no training utterance is long enough for the network")

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------
    def fit(self) -> TrainResult:
        self.run.root.mkdir(parents=True, exist_ok=True)
        self.run.metrics.unlink(missing_ok=True)
        result = TrainResult(params=ModelParams.init(self.cfg, self.config.seed))
        trainable = None
        if self.config.pretrain_layer1 and self.cfg.pretrain_vocab:
            frontend = result.params.mask(FRONTEND_PREFIXES)
            result.params = self._stage("pretrain", result, self.config.pretrain_epochs, frontend)
            trainable = ~frontend
            logger.info("froze %d front-end parameters", int(frontend.sum()))
        result.params = self._stage("train", result, self.config.epochs, trainable)

        save_checkpoint(self.run.checkpoint, result.params)
        write_cmvn(self.run.cmvn, self.cmvn)
        self.config.dump(self.run.config)
        return result

    def example_grad(
        self, params: ModelParams, stage: str, epoch: int, index: int
    ) -> Optional[tuple[float, npt.NDArray[np.float64]]]:
        """Loss and flat gradient for one utterance, or None when its target is infeasible."""
        ex = self.examples[index]
        rate = self.config.optimizer.dropout
        rng = np.random.default_rng([self.config.seed, epoch, index, STAGES.index(stage)])
        dropout = Dropout(rate, rng) if rate > 0 else None
        tape = Tape()
        try:
            if stage == "pretrain":
                out = forward(params, ex.x, self.cfg, tape=tape, dropout=dropout, pretrain=True, frontend_only=True)
                res = pretrain_objective(out, ex.frame_targets)
            else:
                out = forward(params, ex.x, self.cfg, tape=tape, dropout=dropout)
                res = objective(self.config.loss, self.cfg, out, ex.intents, ex.slots, self.config.weights)
        except (NoAlignmentError, UnreachableTargetError) as exc:
            logger.warning("skipping %s: %s", ex.uid, exc)
            return None
        return res.loss, backward(params, out, res.grads)

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------
    def _map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        if self.config.workers == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            return list(pool.map(fn, items))

    def _stage(
        self,
        stage: str,
        result: TrainResult,
        epochs: int,
        trainable: Optional[npt.NDArray[np.bool_]],
    ) -> ModelParams:
        optimizer = build_optimizer(self.config.optimizer, result.params.size)
        vector = result.params.flatten()
        batch_size = self.config.batch_size
        for epoch in range(1, epochs + 1):
            start = time.perf_counter()
            order = np.random.default_rng([self.config.seed, epoch, STAGES.index(stage)]).permutation(
                len(self.examples)
            )
            batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
            total, used, skipped = 0.0, 0, 0
            for batch in tqdm(batches, desc=f"{stage} {epoch}/{epochs}", disable=not self.progress, leave=False):
                params = ModelParams.from_vector(self.cfg, vector)
                outcomes = self._map(lambda i: self.example_grad(params, stage, epoch, int(i)), list(batch))
                kept = [o for o in outcomes if o is not None]
                skipped += len(outcomes) - len(kept)
                if not kept:
                    continue
                # reduce in batch order so the sum does not depend on worker count
                grad = np.zeros_like(vector)
                for loss, g in kept:
                    total += loss
                    grad += g
                vector = optimizer.step(vector, grad / len(kept), trainable)
                used += len(kept)

            mean_loss = total / used if used else None
            record = MetricsRecord(
                epoch=epoch,
                split="train",
                intent_accuracy=None,
                slot_accuracy=None,
                joint_accuracy=None,
                loss=mean_loss,
                wall_time=time.perf_counter() - start,
                count=used,
                skipped=skipped,
                stage=stage,
                cell={**self.config.cell, "test_labels": self.config.train_labels},
            )
            self._emit(result, record)
            logger.info(
                "%s epoch %d/%d loss %s skipped %d",
                stage,
                epoch,
                epochs,
                "n/a" if mean_loss is None else f"{mean_loss:.4f}",
                skipped,
            )
            if stage == "train" and self.valid:
                self._validate(result, ModelParams.from_vector(self.cfg, vector), epoch)
        return ModelParams.from_vector(self.cfg, vector)

    def _validate(self, result: TrainResult, params: ModelParams, epoch: int) -> None:
        model = SluModel(self.cfg, params, self.cmvn)
        predictor = model_predictor(model, self.config.theta, self.config.final_steps)
        tally, elapsed = evaluate(self.valid, predictor)
        intent, slot, joint = tally.rates()
        labels = max((len(u.intent_labels) for u in self.valid), default=self.config.train_labels)
        self._emit(
            result,
            MetricsRecord(
                epoch=epoch,
                split="valid",
                intent_accuracy=intent,
                slot_accuracy=slot,
                joint_accuracy=joint,
                loss=None,
                wall_time=elapsed,
                count=tally.count,
                skipped=tally.skipped,
                stage="train",
                cell={**self.config.cell, "test_labels": labels},
            ),
        )

    def _emit(self, result: TrainResult, record: MetricsRecord) -> None:
        result.records.append(record)
        self.stream.append(record)


def train_model(
    config: ExperimentConfig,
    run: RunLayout,
    train: Sequence[SyntheticUtterance],
    cmvn: CmvnStats,
    valid: Sequence[SyntheticUtterance] = (),
    progress: bool = False,
) -> TrainResult:
    return Trainer(config, run, train, cmvn, valid=valid, progress=progress).fit()


