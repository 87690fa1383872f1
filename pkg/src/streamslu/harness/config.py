"""Experiment configuration loaded from YAML."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from streamslu.kernel.errors import ConfigError
from streamslu.network.config import ModelConfig
from streamslu.network.objectives import LOSS_KINDS, UTTERANCE_LOSSES, ObjectiveWeights, head_mode_for

OPTIMIZER_KINDS = ("adamw", "adam", "sgd")
CE_TARGETS = ("final", "product")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adamw"
    learning_rate: float = 1e-4
    weight_decay: float = 0.2
    dropout: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0

    def __post_init__(self) -> None:
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer '{self.kind}', expected one of {', '.join(OPTIMIZER_KINDS)}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.weight_decay < 0 or self.clip_norm < 0:
            raise ConfigError("weight_decay and clip_norm must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    corpus: str = "corpus"
    loss: str = "ctc+ce"
    pretrain_layer1: bool = False
    pretrain_epochs: int = 5
    train_labels: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    workers: int = 1
    ce_weight: float = 0.4
    mil_weight: Optional[float] = None
    ce_target: str = "final"
    theta: float = 0.5

    def __post_init__(self) -> None:
        mode = head_mode_for(self.loss)
        if self.model.head_mode != mode:
            raise ConfigError(f"loss '{self.loss}' needs model.head_mode '{mode}', got '{self.model.head_mode}'")
        if self.mil_weight is not None and self.loss != "ctl+mil":
            raise ConfigError(f"mil_weight is only valid with loss 'ctl+mil', not '{self.loss}'")
        if self.mil_weight is not None and not 0.0 <= self.mil_weight <= 1.0:
            raise ConfigError("mil_weight must lie in [0, 1]")
        if not 0.0 <= self.ce_weight <= 1.0:
            raise ConfigError("ce_weight must lie in [0, 1]")
        if self.ce_target not in CE_TARGETS:
            raise ConfigError(f"ce_target must be one of {', '.join(CE_TARGETS)}")
        if self.train_labels not in (1, 2):
            raise ConfigError("train_labels must be 1 or 2")
        if self.epochs < 1 or self.batch_size < 1 or self.workers < 1:
            raise ConfigError("epochs, batch_size and workers must be >= 1")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs must be >= 0")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)")

    @property
    def weights(self) -> ObjectiveWeights:
        mil = 0.5 if self.mil_weight is None else self.mil_weight
        return ObjectiveWeights(
            seq=1.0 - self.ce_weight,
            ce=self.ce_weight,
            ctl=1.0 - mil,
            mil=mil,
            ce_target=self.ce_target,  # type: ignore[arg-type]
        )

    @property
    def final_steps(self) -> Optional[int]:
        """Head steps an utterance-level (CE-only) model is read from; None for streaming losses."""
        if self.loss not in UTTERANCE_LOSSES:
            return None
        return 2 if self.ce_target == "product" and self.train_labels == 2 else 1

    @property
    def cell(self) -> dict[str, Any]:
        """Identifiers of this run's cell in the train-labels x loss x pretrain grid."""
        return {"train_labels": self.train_labels, "loss": self.loss, "pretrain": self.pretrain_layer1}

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Apply non-None CLI overrides."""
        values = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **values) if values else self

    # ------------------------------------------------------------------
    # YAML
    # ------------------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["model"] = self.model.to_dict()
        data["optimizer"] = asdict(self.optimizer)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown experiment keys: {', '.join(sorted(unknown))}")
        loss = data.get("loss", cls.loss)
        if loss not in LOSS_KINDS:
            raise ConfigError(f"unknown loss '{loss}', expected one of {', '.join(LOSS_KINDS)}")
        model = dict(data.get("model") or {})
        model.setdefault("head_mode", head_mode_for(loss))
        data["model"] = ModelConfig.from_dict(model)
        optimizer = dict(data.get("optimizer") or {})
        unknown = set(optimizer) - set(OptimizerConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown optimizer keys: {', '.join(sorted(unknown))}")
        data["optimizer"] = OptimizerConfig(**optimizer)
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config not found: {path}")
        with open(path) as f:
            try:
                data = yaml.safe_load(f)
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(data or {})

    def dump(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)
        return path
