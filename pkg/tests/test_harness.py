from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

from streamslu.harness.ablation import (
    COMPARISONS,
    AblationPlan,
    Cell,
    Score,
    compare,
    run_ablation,
)
from streamslu.harness.config import ExperimentConfig, OptimizerConfig
from streamslu.harness.evaluate import evaluate, model_predictor, oracle_predictor, template_predictor
from streamslu.harness.metrics import MetricsRecord, MetricsStream, read_metrics
from streamslu.harness.optim import Adam, Sgd, build_optimizer, clip_by_norm
from streamslu.harness.runs import corpus_root, load_run
from streamslu.harness.trainer import Trainer, resolve_config, train_model
from streamslu.harness import verify
from streamslu.harness.verify import VerifyContext, run_suites
from streamslu.kernel.errors import ConfigError, UnreachableTargetError
from streamslu.kernel.features import accumulate_cmvn
from streamslu.kernel.layout import LayoutResolver
from streamslu.network.config import ConvSpec, ModelConfig
from streamslu.network.model import SluModel
from streamslu.network.params import FRONTEND_PREFIXES, ModelParams
from streamslu.synth.corpus import CorpusSpec, generate, make_templates, split
from streamslu.verbs.init import template_text

SMALL_MODEL = {
    "conv": [
        {"kernel": [5, 5, 1], "stride": [2, 2, 1], "out_channels": 2},
        {"kernel": [5, 5, 1], "stride": [2, 2, 1], "out_channels": 2},
    ],
    "hidden": [4, 4, 4],
    "slot_projection": 4,
    "intent_projection": 4,
}


def _experiment(**overrides) -> ExperimentConfig:
    data = {
        "name": "tiny",
        "loss": "ctc+ce",
        "epochs": 1,
        "batch_size": 4,
        "model": dict(SMALL_MODEL),
        "optimizer": {"learning_rate": 0.003, "dropout": 0.1},
    }
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


# ----------------------------------------------------------------------
# Config
# ----------------------------------------------------------------------
def test_head_mode_follows_loss() -> None:
    assert ExperimentConfig.from_dict({"loss": "ctl+mil"}).model.head_mode == "ctl"
    assert ExperimentConfig.from_dict({}).model.head_mode == "ctc"


def test_config_rejects_bad_combinations() -> None:
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"loss": "ctc+ce", "mil_weight": 0.3})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"loss": "ctc", "model": {"head_mode": "ctl"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"epochz": 3})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"optimizer": {"kind": "lbfgs"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"loss": "ctx"})


def test_weights() -> None:
    weights = ExperimentConfig.from_dict({"loss": "ctl+mil", "mil_weight": 0.3, "ce_weight": 0.25}).weights
    assert weights.mil == pytest.approx(0.3)
    assert weights.ctl == pytest.approx(0.7)
    assert weights.seq == pytest.approx(0.75)


def test_utterance_level_ce_config() -> None:
    config = ExperimentConfig.from_dict({"loss": "ce"})
    assert config.model.head_mode == "ctc"
    assert config.final_steps == 1
    pairs = ExperimentConfig.from_dict({"loss": "ce", "ce_target": "product", "train_labels": 2})
    assert pairs.final_steps == 2
    assert ExperimentConfig.from_dict({"loss": "ctc+ce"}).final_steps is None
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"loss": "ce", "mil_weight": 0.5})


def test_dump_and_load(tmp_path: Path) -> None:
    config = _experiment(loss="ctl+ce", ce_target="product", seed=4)
    loaded = ExperimentConfig.load(config.dump(tmp_path / "experiment.yml"))
    assert loaded == config
    assert loaded.with_overrides(seed=None, epochs=3).epochs == 3


def test_packaged_template_is_a_complete_config(tmp_path: Path) -> None:
    path = tmp_path / "experiment.yml"
    path.write_text(template_text("demo"))
    config = ExperimentConfig.load(path)
    assert config.name == "demo"
    assert config.corpus == "../corpus"
    assert corpus_root(config, path) == tmp_path / "../corpus"


def test_missing_or_malformed_config(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "nope.yml")
    bad = tmp_path / "bad.yml"
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)


def test_resolve_config_fills_corpus_sizes(small_spec: CorpusSpec) -> None:
    config = resolve_config(_experiment(pretrain_layer1=True), small_spec)
    assert config.model.intent_vocab == small_spec.n_intents
    assert config.model.pretrain_vocab == small_spec.frame_classes
    with pytest.raises(ConfigError):
        resolve_config(_experiment(train_labels=2), small_spec)


# ----------------------------------------------------------------------
# Optimizers
# ----------------------------------------------------------------------
def test_clip_by_norm() -> None:
    np.testing.assert_allclose(np.linalg.norm(clip_by_norm(np.array([3.0, 4.0]), 1.0)), 1.0)
    np.testing.assert_array_equal(clip_by_norm(np.array([0.3, 0.4]), 1.0), [0.3, 0.4])


def test_sgd_step() -> None:
    opt = Sgd(OptimizerConfig(kind="sgd", learning_rate=0.1, weight_decay=0.0, clip_norm=0.0), 2)
    np.testing.assert_allclose(opt.step(np.array([1.0, 1.0]), np.array([2.0, -1.0])), [0.8, 1.1])


def test_first_adam_step_moves_by_learning_rate() -> None:
    config = OptimizerConfig(kind="adam", learning_rate=0.01, weight_decay=0.0, clip_norm=0.0)
    params = build_optimizer(config, 3).step(np.zeros(3), np.array([5.0, -0.2, 1e-3]))
    np.testing.assert_allclose(params, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_adamw_decays_and_respects_trainable_mask() -> None:
    config = OptimizerConfig(kind="adamw", learning_rate=0.1, weight_decay=0.5, clip_norm=0.0)
    opt = build_optimizer(config, 2)
    assert isinstance(opt, Adam) and opt.decoupled
    moved = opt.step(np.array([1.0, 1.0]), np.zeros(2), trainable=np.array([True, False]))
    np.testing.assert_allclose(moved, [0.95, 1.0])
    with pytest.raises(ValueError):
        opt.step(np.zeros(3), np.zeros(3))


# ----------------------------------------------------------------------
# Metrics and evaluation
# ----------------------------------------------------------------------
def test_metrics_stream(tmp_path: Path) -> None:
    stream = MetricsStream(tmp_path / "run" / "metrics.jsonl")
    stream.append(MetricsRecord(1, "train", None, None, None, 2.5, 0.1, count=3, cell={"loss": "ctc"}))
    stream.append(MetricsRecord(1, "valid", 0.5, 0.25, 0.25, None, 0.2))
    records = list(read_metrics(stream.path))
    assert [r.split for r in records] == ["train", "valid"]
    assert records[0].cell == {"loss": "ctc"}
    assert list(read_metrics(tmp_path / "absent.jsonl")) == []
    with pytest.raises(ValueError):
        MetricsRecord(1, "valid", 1.5, 0.0, 0.0, None, 0.0)


def test_oracle_and_template_predictors(small_spec: CorpusSpec) -> None:
    corpus = generate(small_spec)
    tally, _ = evaluate(corpus, oracle_predictor)
    assert tally.rates() == (1.0, 1.0, 1.0)
    noiseless = replace(small_spec, noise=0.0)
    tally, _ = evaluate(generate(noiseless), template_predictor(make_templates(noiseless)))
    assert tally.rates() == (1.0, 1.0, 1.0)


def test_too_short_utterances_count_as_wrong(small_spec: CorpusSpec) -> None:
    cfg = ModelConfig(feat_dim=small_spec.feat_dim)
    model = SluModel(cfg, ModelParams.init(cfg, 0))
    u = generate(small_spec)[0]
    short = replace(u, features=u.features[:20])
    tally, _ = evaluate([short], model_predictor(model))
    assert tally.count == 1
    assert tally.skipped == 1
    assert tally.rates() == (0.0, 0.0, 0.0)


def test_untrained_model_is_near_chance(small_spec: CorpusSpec) -> None:
    corpus = generate(replace(small_spec, size=30))
    cfg = ModelConfig()
    model = SluModel(cfg, ModelParams.init(cfg, 0), accumulate_cmvn(u.features for u in corpus))
    tally, _ = evaluate(corpus, model_predictor(model))
    assert tally.rates()[0] < 0.2


# ----------------------------------------------------------------------
# Training
# ----------------------------------------------------------------------
@pytest.fixture(scope="module")
def tiny_corpus() -> tuple[CorpusSpec, list]:
    spec = CorpusSpec(size=8, speakers=3, seed=3, command_frames=(40, 44), silence_frames=(6, 8))
    return spec, generate(spec)


def test_fit_writes_run_files(tmp_path: Path, tiny_corpus) -> None:
    spec, corpus = tiny_corpus
    config = resolve_config(_experiment(epochs=2), spec)
    run = LayoutResolver().layout(tmp_path / "run")
    cmvn = accumulate_cmvn(u.features for u in corpus)
    result = train_model(config, run, corpus[:6], cmvn, valid=corpus[6:])
    assert [r.split for r in result.records] == ["train", "valid", "train", "valid"]
    assert all(r.cell["loss"] == "ctc+ce" for r in result.records)
    assert len(list(read_metrics(run.metrics))) == 4
    loaded_config, model, _ = load_run(run.root)
    assert loaded_config == config
    np.testing.assert_allclose(model.params.flatten(), result.params.flatten(), atol=1e-6)

    # a second fit starts a fresh metrics stream
    train_model(config, run, corpus[:6], cmvn)
    assert len(list(read_metrics(run.metrics))) == 2


def test_worker_count_does_not_change_the_result(tmp_path: Path, tiny_corpus) -> None:
    spec, corpus = tiny_corpus
    cmvn = accumulate_cmvn(u.features for u in corpus)
    params = []
    for workers in (1, 3):
        config = resolve_config(_experiment(workers=workers), spec)
        run = LayoutResolver().layout(tmp_path / f"w{workers}")
        params.append(train_model(config, run, corpus, cmvn).params.flatten())
    np.testing.assert_array_equal(params[0], params[1])


def test_ctl_training_step(tmp_path: Path, tiny_corpus) -> None:
    spec, corpus = tiny_corpus
    config = resolve_config(_experiment(loss="ctl+mil", mil_weight=0.5), spec)
    run = LayoutResolver().layout(tmp_path / "ctl")
    result = train_model(config, run, corpus, accumulate_cmvn(u.features for u in corpus))
    assert np.isfinite(result.records[0].loss)


def test_frozen_frontend_does_not_move(tmp_path: Path, tiny_corpus) -> None:
    spec, corpus = tiny_corpus
    config = resolve_config(_experiment(pretrain_layer1=True, pretrain_epochs=1), spec)
    run = LayoutResolver().layout(tmp_path / "pre")
    trainer = Trainer(config, run, corpus, accumulate_cmvn(u.features for u in corpus))
    result = trainer.fit()
    assert [r.stage for r in result.records] == ["pretrain", "train"]

    start = ModelParams.init(config.model, 0)
    frontend = start.mask(FRONTEND_PREFIXES)
    result.params = start
    after = trainer._stage("train", result, 1, ~frontend)
    np.testing.assert_array_equal(after.flatten()[frontend], start.flatten()[frontend])
    assert np.any(after.flatten()[~frontend] != start.flatten()[~frontend])


def test_example_gradient_skips_infeasible_targets(tiny_corpus) -> None:
    spec, corpus = tiny_corpus
    config = resolve_config(_experiment(), spec)
    trainer = Trainer(config, LayoutResolver().layout(Path("unused")), corpus[:1], accumulate_cmvn([corpus[0].features]))
    ex = trainer.examples[0]
    trainer.examples[0] = replace(ex, slots=tuple([0] * 40))
    assert trainer.example_grad(ModelParams.init(config.model, 0), "train", 1, 0) is None


def test_ce_training_step_and_final_step_validation(tmp_path: Path, tiny_corpus) -> None:
    spec, corpus = tiny_corpus
    config = resolve_config(_experiment(loss="ce"), spec)
    run = LayoutResolver().layout(tmp_path / "ce")
    result = train_model(config, run, corpus[:6], accumulate_cmvn(u.features for u in corpus), valid=corpus[6:])
    train, valid = result.records
    assert np.isfinite(train.loss)
    assert valid.cell["loss"] == "ce"
    assert valid.count == 2 and valid.skipped == 0


def _packaged_config(**overrides) -> ExperimentConfig:
    data = yaml.safe_load(template_text("desk"))
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


@pytest.mark.slow
def test_packaged_recipe_learns_the_default_corpus(tmp_path: Path) -> None:
    spec = CorpusSpec()
    parts = split(generate(spec), seed=spec.seed)
    config = resolve_config(_packaged_config(), spec)
    assert (config.loss, config.epochs) == ("ctc+ce", 50)
    cmvn = accumulate_cmvn(u.features for u in parts["train"])
    result = train_model(config, LayoutResolver().layout(tmp_path / "run"), parts["train"], cmvn)

    losses = [r.loss for r in result.records if r.split == "train"]
    assert losses[-1] <= 0.5 * losses[0], losses
    model = SluModel(config.model, result.params, cmvn)
    tally, _ = evaluate(parts["test"], model_predictor(model, config.theta, config.final_steps))
    assert tally.rates()[2] >= 0.9, tally


# ----------------------------------------------------------------------
# Ablation
# ----------------------------------------------------------------------
def _scores(pairs: dict[Cell, tuple[float, ...]], test_labels: int = 1) -> list[Score]:
    return [
        Score(cell, seed, test_labels, joint, joint, joint)
        for cell, joints in pairs.items()
        for seed, joint in enumerate(joints)
    ]


def test_comparison_needs_a_strict_majority_of_seeds() -> None:
    scores = _scores({Cell("ctc+ce", 1): (0.9, 0.8, 0.7), Cell("ctc", 1): (0.5, 0.8, 0.6)})
    (result,) = compare(scores, COMPARISONS[:1])
    assert result.pairs == ((0, 0.9, 0.5), (1, 0.8, 0.8), (2, 0.7, 0.6))
    assert result.wins == 2
    assert result.holds
    assert result.line().startswith("✅ joint-ce-over-ctc")

    tied = _scores({Cell("ctc+ce", 1): (0.9, 0.8, 0.6), Cell("ctc", 1): (0.5, 0.8, 0.6)})
    (result,) = compare(tied, COMPARISONS[:1])
    assert result.wins == 1
    assert not result.holds
    assert "1/3 seeds" in result.line()


def test_comparisons_without_both_cells_are_left_out() -> None:
    scores = _scores({Cell("ctl+mil", 1): (0.7,), Cell("ctl", 1): (0.6,)})
    results = compare(scores)
    assert [r.comparison.name for r in results] == ["mil-over-ctl"]
    assert compare([]) == []


def test_plan_configs_follow_the_cell() -> None:
    plan = AblationPlan(base=_experiment(), seeds=(3,), epochs=2)
    assert [c.name for c in plan.cells()][-1] == "ctc-ce-2l"
    mil = plan.config_for(Cell("ctl+mil", 1), 3)
    assert (mil.name, mil.seed, mil.epochs, mil.model.head_mode) == ("ctl-mil-1l-s3", 3, 2, "ctl")
    ce = plan.config_for(Cell("ce", 1), 3)
    assert ce.model.head_mode == "ctc" and ce.final_steps == 1
    assert plan.corpus_for(2).labels_per_utterance == 2
    with pytest.raises(ConfigError):
        AblationPlan(base=_experiment(), losses=("ctc+mil",))
    with pytest.raises(ConfigError):
        AblationPlan(base=_experiment(), seeds=(1, 1))


def test_ablation_writes_one_run_per_cell_and_seed(tmp_path: Path) -> None:
    corpus = CorpusSpec(size=18, speakers=3, seed=3, command_frames=(40, 44), silence_frames=(6, 8))
    plan = AblationPlan(base=_experiment(), corpus=corpus, seeds=(0,), losses=("ctc", "ctc+ce"), epochs=1)
    report = run_ablation(plan, tmp_path)

    cells = [(s.cell.name, s.test_labels) for s in report.scores]
    assert cells == [("ctc-1l", 1), ("ctc-1l", 2), ("ctc-ce-1l", 1), ("ctc-ce-1l", 2), ("ctc-ce-2l", 2)]
    assert [r.comparison.name for r in report.results] == ["joint-ce-over-ctc", "two-label-training"]
    for name in ("ctc-1l-s0", "ctc-ce-1l-s0", "ctc-ce-2l-s0"):
        assert (tmp_path / name / "model.ckpt").exists()
    tested = [r for r in read_metrics(tmp_path / "ctc-1l-s0" / "metrics.jsonl") if r.stage == "ablation"]
    assert [r.cell["test_labels"] for r in tested] == [1, 2]
    assert all(r.cell["seed"] == 0 and r.split == "test" for r in tested)


@pytest.mark.slow
def test_packaged_recipe_reproduces_the_loss_orderings(tmp_path: Path) -> None:
    plan = AblationPlan(base=_packaged_config())
    report = run_ablation(plan, tmp_path)
    assert {r.comparison.name for r in report.results} == {c.name for c in COMPARISONS}
    assert report.holds, [r.line() for r in report.results]


# ----------------------------------------------------------------------
# Verification suites
# ----------------------------------------------------------------------
def test_loss_suites_pass() -> None:
    results = run_suites(VerifyContext(seed=0, quick=True), ["ctc-oracle", "ctl-oracle", "ctc-gradient", "ctl-gradient"])
    assert all(r.passed for r in results), [r.line() for r in results]


def test_mutation_is_caught() -> None:
    (result,) = run_suites(VerifyContext(quick=True, mutate="ctl-grad-sign"), ["ctl-gradient"])
    assert not result.passed
    assert "mutation=ctl-grad-sign" in result.line()


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_ctl_gradient_suite_redraws_unreachable_targets(seed: int) -> None:
    (result,) = run_suites(VerifyContext(seed=seed), ["ctl-gradient"])
    assert result.passed, result.line()
    assert result.trials == 50


def test_suite_exception_becomes_a_failed_result(monkeypatch: pytest.MonkeyPatch) -> None:
    def explode(ctx: VerifyContext) -> None:
        raise UnreachableTargetError("3 labels cannot be emitted in 2 frames")

    monkeypatch.setitem(verify.SUITES, "ctl-gradient", explode)
    results = run_suites(VerifyContext(quick=True), ["ctc-gradient", "ctl-gradient"])
    assert [r.name for r in results] == ["ctc-gradient", "ctl-gradient"]
    assert results[0].passed
    assert not results[1].passed
    assert "UnreachableTargetError" in results[1].line()


def test_unknown_suite_or_mutation() -> None:
    with pytest.raises(ConfigError):
        run_suites(VerifyContext(), ["nope"])
    with pytest.raises(ConfigError):
        run_suites(VerifyContext(mutate="flip-everything"), ["ctc-oracle"])


@pytest.mark.slow
def test_network_suites_pass() -> None:
    results = run_suites(VerifyContext(seed=1, quick=True), ["network-gradient", "shape-causality", "prefix-consistency"])
    assert all(r.passed for r in results), [r.line() for r in results]
