from pathlib import Path

import numpy as np
import pytest

from streamslu.network.config import ConvSpec, ModelConfig
from streamslu.synth.corpus import CorpusSpec


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_cfg() -> ModelConfig:
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


@pytest.fixture(scope="session")
def small_spec() -> CorpusSpec:
    return CorpusSpec(size=24, speakers=4, seed=7, command_frames=(40, 50), silence_frames=(6, 10))


@pytest.fixture
def workdir(tmp_path: Path) -> Path:
    return tmp_path
