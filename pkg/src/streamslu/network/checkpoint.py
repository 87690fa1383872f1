"""Save and load parameter vectors tagged with the model config digest."""
from __future__ import annotations

import logging
from pathlib import Path

from streamslu.kernel.containers import read_checkpoint, write_checkpoint
from streamslu.kernel.errors import DigestMismatchError
from streamslu.network.config import ModelConfig
from streamslu.network.params import ModelParams

logger = logging.getLogger(__name__)


def save_checkpoint(path: Path, params: ModelParams) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_checkpoint(path, params.cfg.digest(), params.flatten())
    logger.debug("wrote %d parameters to %s", params.size, path)
    return path


def load_checkpoint(path: Path, cfg: ModelConfig) -> ModelParams:
    """Read a checkpoint; its digest must match ``cfg``."""
    digest, vector = read_checkpoint(Path(path))
    expected = cfg.digest()
    if digest != expected:
        raise DigestMismatchError(expected=expected, found=digest)
    return ModelParams.from_vector(cfg, vector)
