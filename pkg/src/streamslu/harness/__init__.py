"""Training, evaluation and verification harness."""
from streamslu.harness.ablation import AblationPlan, AblationReport, run_ablation
from streamslu.harness.config import ExperimentConfig, OptimizerConfig
from streamslu.harness.evaluate import Tally, evaluate, model_predictor, oracle_predictor
from streamslu.harness.metrics import MetricsRecord, MetricsStream, read_metrics
from streamslu.harness.runs import load_run
from streamslu.harness.trainer import Trainer, resolve_config, train_model
from streamslu.harness.verify import SuiteResult, VerifyContext, run_suites

__all__ = [
    "AblationPlan",
    "AblationReport",
    "ExperimentConfig",
    "MetricsRecord",
    "MetricsStream",
    "OptimizerConfig",
    "SuiteResult",
    "Tally",
    "Trainer",
    "VerifyContext",
    "evaluate",
    "load_run",
    "model_predictor",
    "oracle_predictor",
    "read_metrics",
    "resolve_config",
    "run_ablation",
    "run_suites",
    "train_model",
]
