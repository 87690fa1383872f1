"""Run and corpus directory resolution for the harness verbs."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from streamslu.kernel.errors import ConfigError

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class RunLayout:
    """Filesystem locations owned by one corpus or experiment directory."""

    root: Path
    features: Path
    cmvn: Path
    checkpoint: Path
    metrics: Path
    config: Path
    events: Path

    def manifest(self, split: str) -> Path:
        return self.root / f"manifest-{split}.yml"


class LayoutResolver:
    """Locate manifests, checkpoints and metrics streams below a root directory."""

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root).resolve() if root else Path.cwd()
        self._aliases: Dict[str, str] = {
            "trn": "train",
            "training": "train",
            "dev": "valid",
            "val": "valid",
            "validation": "valid",
            "tst": "test",
            "eval": "test",
        }

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------
    def layout(self, root: Optional[Path] = None) -> RunLayout:
        base = Path(root).resolve() if root else self.root
        return RunLayout(
            root=base,
            features=base / "features",
            cmvn=base / "cmvn.feat",
            checkpoint=base / "model.ckpt",
            metrics=base / "metrics.jsonl",
            config=base / "experiment.yml",
            events=base / "events.jsonl",
        )

    def manifest(self, split: Optional[str] = None, root: Optional[Path] = None) -> Path:
        """Manifest path for a split; a path to an existing file is returned unchanged."""
        if split and Path(split).suffix in (".yml", ".yaml"):
            return Path(split)
        return self.layout(root).manifest(self.normalise_split(split))

    def normalise_split(self, split: Optional[str]) -> str:
        if not split:
            return "train"
        key = split.lower()
        key = self._aliases.get(key, key)
        if key not in SPLITS:
            raise ConfigError(f"Unknown split '{split}'. Known splits: {', '.join(SPLITS)}")
        return key

    def existing_manifests(self, root: Optional[Path] = None) -> List[str]:
        base = self.layout(root)
        return sorted(s for s in SPLITS if base.manifest(s).exists())
