from pathlib import Path

import numpy as np
import pytest

from streamslu.kernel.containers import (
    decode_matrix,
    encode_matrix,
    read_checkpoint,
    read_cmvn,
    read_features,
    write_checkpoint,
    write_cmvn,
    write_features,
)
from streamslu.kernel.errors import ContainerError
from streamslu.kernel.features import CmvnStats


def test_features_file(tmp_path: Path, rng: np.random.Generator) -> None:
    x = rng.normal(size=(11, 16)).astype(np.float32)
    path = tmp_path / "u.feat"
    write_features(path, x)
    assert path.stat().st_size == 20 + 11 * 16 * 4
    np.testing.assert_array_equal(read_features(path), x)


def test_cmvn_file_keeps_count(tmp_path: Path) -> None:
    stats = CmvnStats(mean=np.array([1.0, -2.0]), variance=np.array([0.5, 4.0]), count=321)
    path = tmp_path / "cmvn.feat"
    write_cmvn(path, stats)
    loaded = read_cmvn(path)
    assert loaded.count == 321
    np.testing.assert_allclose(loaded.mean, stats.mean)
    np.testing.assert_allclose(loaded.variance, stats.variance)


def test_bad_magic_and_truncation() -> None:
    payload = encode_matrix(np.zeros((2, 3)))
    with pytest.raises(ContainerError, match="magic"):
        decode_matrix(b"XXXX" + payload[4:])
    with pytest.raises(ContainerError):
        decode_matrix(payload[:-4])
    with pytest.raises(ContainerError, match="header"):
        decode_matrix(payload[:8])


def test_checkpoint_file(tmp_path: Path) -> None:
    digest = "ab" * 32
    vector = np.linspace(-1.0, 1.0, 9)
    path = tmp_path / "model.ckpt"
    write_checkpoint(path, digest, vector)
    found, loaded = read_checkpoint(path)
    assert found == digest
    np.testing.assert_allclose(loaded, vector.astype(np.float32))
