"""Loading trained runs and the corpora they point at."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

from streamslu.harness.config import ExperimentConfig
from streamslu.kernel.containers import read_cmvn
from streamslu.kernel.errors import ConfigError
from streamslu.kernel.layout import LayoutResolver, RunLayout
from streamslu.network.checkpoint import load_checkpoint
from streamslu.network.model import SluModel


def corpus_root(config: ExperimentConfig, config_path: Path) -> Path:
    """The corpus directory; relative paths are taken from the config file's directory."""
    root = Path(config.corpus)
    return root if root.is_absolute() else (Path(config_path).parent / root)


def load_run(run: Path, resolver: Optional[LayoutResolver] = None) -> tuple[ExperimentConfig, SluModel, RunLayout]:
    layout = (resolver or LayoutResolver()).layout(run)
    for required in (layout.config, layout.checkpoint, layout.cmvn):
        if not required.exists():
            raise ConfigError(f"run {layout.root} has no {required.name}; train it first")
    config = ExperimentConfig.load(layout.config)
    params = load_checkpoint(layout.checkpoint, config.model)
    return config, SluModel(config.model, params, read_cmvn(layout.cmvn)), layout
