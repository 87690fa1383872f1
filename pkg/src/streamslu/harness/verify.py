"""Verification suites: brute-force oracles, gradient checks, shape and streaming laws."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import log_softmax

from streamslu.decoder.streaming import chunked, decode_output, stream_decode
from streamslu.kernel.ctc import ctc_brute_force, ctc_grad_check, ctc_loss, required_frames
from streamslu.kernel.ctl import CtlTarget, ctl_brute_force, ctl_loss
from streamslu.kernel.errors import ConfigError, NoAlignmentError, UnreachableTargetError
from streamslu.kernel.features import accumulate_cmvn
from streamslu.kernel.gradcheck import central_difference, max_relative_error, relative_error
from streamslu.kernel.tape import Tape
from streamslu.network.config import ConvSpec, ModelConfig
from streamslu.network.model import SluModel, backward, forward
from streamslu.network.objectives import objective
from streamslu.network.params import ModelParams
from streamslu.synth.corpus import CorpusSpec, generate

logger = logging.getLogger(__name__)

MUTATIONS = ("ctl-grad-sign",)

ORACLE_TOLERANCE = 1e-9
LOSS_GRAD_TOLERANCE = 1e-4
NETWORK_GRAD_TOLERANCE = 1e-3
CHUNK_SIZES = (1, 2, 7, 16)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    trials: int
    max_error: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        mark = "✅" if self.passed else "❌"
        text = f"{mark} {self.name:<20} trials={self.trials:<5} max_err={self.max_error:.3e} tol={self.tolerance:.0e}"
        return f"{text}  {self.detail}" if self.detail else text


@dataclass
class VerifyContext:
    seed: int = 0
    quick: bool = False
    mutate: Optional[str] = None

    def trials(self, full: int, quick: int) -> int:
        return quick if self.quick else full


def _suite(name: str, tolerance: float, trials: int, errors: list[float], detail: str = "") -> SuiteResult:
    worst = max(errors, default=0.0)
    passed = bool(errors) and worst <= tolerance and all(math.isfinite(e) for e in errors)
    return SuiteResult(name, trials, worst, tolerance, passed, detail)


def _random_logp(rng: np.random.Generator, frames: int, vocab: int) -> np.ndarray:
    return log_softmax(rng.normal(size=(frames, vocab)), axis=1)


def ctc_oracle(ctx: VerifyContext) -> SuiteResult:
    rng = np.random.default_rng([ctx.seed, 1])
    trials = ctx.trials(1000, 100)
    errors, infeasible = [], 0
    for _ in range(trials):
        frames, vocab = int(rng.integers(1, 7)), int(rng.integers(2, 5))
        labels = [int(v) for v in rng.integers(1, vocab, size=int(rng.integers(0, 4)))]
        x = _random_logp(rng, frames, vocab)
        if required_frames(labels) > frames:
            infeasible += 1
            try:
                ctc_loss(x, labels)
                errors.append(math.inf)
            except NoAlignmentError:
                errors.append(0.0)
            continue
        errors.append(abs(ctc_loss(x, labels).loss - ctc_brute_force(x, labels)))
    return _suite("ctc-oracle", ORACLE_TOLERANCE, trials, errors, f"infeasible={infeasible}")


def ctl_oracle(ctx: VerifyContext) -> SuiteResult:
    rng = np.random.default_rng([ctx.seed, 2])
    trials = ctx.trials(1000, 100)
    errors, unreachable = [], 0
    for _ in range(trials):
        frames, events = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        target = CtlTarget.onsets(rng.integers(0, events, size=int(rng.integers(0, 4))))
        y = rng.uniform(size=(frames, events))
        if rng.uniform() < 0.1:
            y[:, int(rng.integers(events))] = 0.0
        try:
            expected = ctl_brute_force(y, target)
        except UnreachableTargetError:
            unreachable += 1
            try:
                ctl_loss(y, target)
                errors.append(math.inf)
            except UnreachableTargetError:
                errors.append(0.0)
            continue
        errors.append(abs(ctl_loss(y, target).loss - expected))
    return _suite("ctl-oracle", ORACLE_TOLERANCE, trials, errors, f"unreachable={unreachable}")


def ctc_gradient(ctx: VerifyContext) -> SuiteResult:
    rng = np.random.default_rng([ctx.seed, 3])
    trials = ctx.trials(50, 10)
    errors = []
    for _ in range(trials):
        x = _random_logp(rng, 5, 4)
        labels = [int(v) for v in rng.integers(1, 4, size=2)]
        errors.append(ctc_grad_check(x, labels, h=1e-5))
    return _suite("ctc-gradient", LOSS_GRAD_TOLERANCE, trials, errors)


def ctl_gradient(ctx: VerifyContext) -> SuiteResult:
    rng = np.random.default_rng([ctx.seed, 4])
    trials = ctx.trials(50, 10)
    sign = -1.0 if ctx.mutate == "ctl-grad-sign" else 1.0
    errors, redrawn = [], 0
    for _ in range(trials):
        while True:
            y = rng.uniform(0.05, 0.95, size=(4, 2))
            target = CtlTarget.onsets(rng.integers(0, 2, size=int(rng.integers(1, 4))))
            try:
                analytic = sign * ctl_loss(y, target).grad
                break
            except UnreachableTargetError:
                redrawn += 1
        numeric = central_difference(lambda point: ctl_loss(point, target).loss, y, 1e-6)
        errors.append(max_relative_error(analytic, numeric))
    detail = f"redrawn={redrawn}" + (f" mutation={ctx.mutate}" if ctx.mutate else "")
    return _suite("ctl-gradient", LOSS_GRAD_TOLERANCE, trials, errors, detail)


def tiny_config() -> ModelConfig:
    return ModelConfig(
        feat_dim=8,
        stack_width=2,
        stack_stride=1,
        conv=(
            ConvSpec(kernel=(3, 3, 1), stride=(2, 2, 1), out_channels=2),
            ConvSpec(kernel=(2, 3, 1), stride=(1, 1, 1), out_channels=2),
        ),
        hidden=(3, 3, 3),
        slot_reduction=1,
        intent_reduction=2,
        slot_projection=3,
        intent_projection=3,
        slot_vocab=3,
        intent_vocab=3,
    )


def network_gradient(ctx: VerifyContext) -> SuiteResult:
    cfg = tiny_config()
    rng = np.random.default_rng([ctx.seed, 5])
    params = ModelParams.init(cfg, ctx.seed)
    x = rng.normal(size=(12, cfg.stacked_dim))
    intents, slots = [1], [2]

    def loss_at(vector: np.ndarray) -> float:
        candidate = ModelParams.from_vector(cfg, vector)
        return objective("ctc+ce", cfg, forward(candidate, x, cfg), intents, slots).loss

    out = forward(params, x, cfg, tape=Tape())
    analytic = backward(params, out, objective("ctc+ce", cfg, out, intents, slots).grads)
    count = params.size if not ctx.quick else min(params.size, 60)
    indices = rng.choice(params.size, size=count, replace=False)
    numeric = central_difference(loss_at, params.flatten(), 1e-5, indices=[(int(i),) for i in indices])
    errors = [
        relative_error(float(analytic[index[0]]), value)
        for index, value in numeric.items()
        if abs(analytic[index[0]]) > 1e-8 or abs(value) > 1e-8
    ]
    return _suite("network-gradient", NETWORK_GRAD_TOLERANCE, len(errors), errors, f"params={params.size}")


def shape_and_causality(ctx: VerifyContext) -> SuiteResult:
    """Closed-form head lengths on a config grid, then a future-perturbation check."""
    rng = np.random.default_rng([ctx.seed, 6])
    errors = []
    trials = 0
    for slot_reduction in (1, 2):
        for intent_reduction in (1, 3, 4):
            cfg = ModelConfig(feat_dim=16, slot_reduction=slot_reduction, intent_reduction=intent_reduction)
            params = ModelParams.init(cfg, ctx.seed)
            model = SluModel(cfg, params)
            for raw in (cfg.min_raw_frames(), cfg.min_raw_frames() + 7, 80):
                trials += 1
                lengths = cfg.output_lengths(raw)
                out = model.forward(rng.normal(size=(raw, cfg.feat_dim)))
                errors.append(float(out.slot.shape[0] != lengths["slot"] or out.intent.shape[0] != lengths["intent"]))

    cfg = ModelConfig(feat_dim=16)
    model = SluModel(cfg, ModelParams.init(cfg, ctx.seed))
    raw = rng.normal(size=(90, cfg.feat_dim))
    cut = 60
    perturbed = raw.copy()
    perturbed[cut + 1:] = 0.0
    before, after = model.forward(raw), model.forward(perturbed)
    for head, ends in (("slot", cfg.slot_receptive_end), ("intent", cfg.intent_receptive_end)):
        a, b = getattr(before, head), getattr(after, head)
        for step in range(min(a.shape[0], b.shape[0])):
            if ends(step) <= cut:
                trials += 1
                errors.append(float(np.max(np.abs(a[step] - b[step]))))
    return _suite("shape-causality", 0.0, trials, errors)


def prefix_consistency(ctx: VerifyContext) -> SuiteResult:
    spec = CorpusSpec(size=ctx.trials(100, 10), seed=ctx.seed, command_frames=(40, 60), silence_frames=(6, 12))
    corpus = generate(spec)
    cfg = ModelConfig(feat_dim=spec.feat_dim, slot_vocab=spec.n_slots, intent_vocab=spec.n_intents)
    model = SluModel(cfg, ModelParams.init(cfg, ctx.seed), accumulate_cmvn(u.features for u in corpus))
    errors = []
    for u in corpus:
        single = decode_output(model.forward(u.features), cfg)
        reference = [(e.head, e.label, e.frame) for e in single.events]
        for size in CHUNK_SIZES + (u.frames,):
            streamed = stream_decode(model, chunked(u.features, size))
            got = [(e.head, e.label, e.frame) for e in streamed.events]
            same = got == reference and streamed.intents == single.intents and streamed.slots == single.slots
            errors.append(0.0 if same else 1.0)
    return _suite("prefix-consistency", 0.0, len(corpus), errors, f"chunks={CHUNK_SIZES}+full")


SUITES: dict[str, Callable[[VerifyContext], SuiteResult]] = {
    "ctc-oracle": ctc_oracle,
    "ctl-oracle": ctl_oracle,
    "ctc-gradient": ctc_gradient,
    "ctl-gradient": ctl_gradient,
    "network-gradient": network_gradient,
    "shape-causality": shape_and_causality,
    "prefix-consistency": prefix_consistency,
}


def run_suites(ctx: VerifyContext, names: Optional[list[str]] = None) -> list[SuiteResult]:
    if ctx.mutate is not None and ctx.mutate not in MUTATIONS:
        raise ConfigError(f"unknown mutation '{ctx.mutate}', expected one of {', '.join(MUTATIONS)}")
    selected = names or list(SUITES)
    unknown = [n for n in selected if n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suites: {', '.join(unknown)}")
    results = []
    for name in selected:
        start = time.perf_counter()
        try:
            result = SUITES[name](ctx)
        except Exception as exc:
            logger.debug("%s raised", name, exc_info=True)
            result = SuiteResult(name, 0, math.inf, 0.0, False, f"raised {type(exc).__name__}: {exc}")
        logger.debug("%s took %.2fs", name, time.perf_counter() - start)
        results.append(result)
    return results
