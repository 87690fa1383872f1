"""Flat little-endian binary containers for features, CMVN stats and checkpoints."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import numpy.typing as npt

from streamslu.kernel.errors import ContainerError
from streamslu.kernel.features import CmvnStats, FeatureMatrix

FEAT_MAGIC = b"FEAT"
CKPT_MAGIC = b"CKPT"
VERSION = 1

_FEAT_HEADER = struct.Struct("<4sIIII")  # magic, version, T, D, reserved
_CKPT_HEADER = struct.Struct("<4sI32sI")  # magic, version, sha256 digest, count


def encode_matrix(frames: FeatureMatrix, reserved: int = 0) -> bytes:
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ContainerError(f"expected a 2-D matrix, got shape {frames.shape}")
    rows, dim = frames.shape
    header = _FEAT_HEADER.pack(FEAT_MAGIC, VERSION, rows, dim, reserved)
    return header + np.ascontiguousarray(frames, dtype="<f4").tobytes()


def decode_matrix(payload: bytes) -> tuple[npt.NDArray[np.float32], int]:
    if len(payload) < _FEAT_HEADER.size:
        raise ContainerError("truncated FEAT header")
    magic, version, rows, dim, reserved = _FEAT_HEADER.unpack_from(payload)
    if magic != FEAT_MAGIC:
        raise ContainerError(f"bad magic {magic!r}, expected {FEAT_MAGIC!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported FEAT version {version}")
    body = payload[_FEAT_HEADER.size:]
    expected = rows * dim * 4
    if len(body) != expected:
        raise ContainerError(f"FEAT body has {len(body)} bytes, header promises {expected}")
    frames = np.frombuffer(body, dtype="<f4").reshape(rows, dim).astype(np.float32)
    return frames, reserved


def write_features(path: Path, frames: FeatureMatrix) -> None:
    Path(path).write_bytes(encode_matrix(frames))


def read_features(path: Path) -> npt.NDArray[np.float32]:
    frames, _ = decode_matrix(Path(path).read_bytes())
    return frames


def write_cmvn(path: Path, stats: CmvnStats) -> None:
    rows = np.stack([stats.mean, stats.variance])
    Path(path).write_bytes(encode_matrix(rows, reserved=stats.count))


def read_cmvn(path: Path) -> CmvnStats:
    rows, count = decode_matrix(Path(path).read_bytes())
    if rows.shape[0] != 2:
        raise ContainerError(f"CMVN container must have 2 rows, found {rows.shape[0]}")
    if count < 1:
        raise ContainerError("CMVN container has zero frame count")
    return CmvnStats(
        mean=rows[0].astype(np.float64),
        variance=rows[1].astype(np.float64),
        count=int(count),
    )


def write_checkpoint(path: Path, digest: str, vector: npt.NDArray[np.floating]) -> None:
    vector = np.ascontiguousarray(vector, dtype="<f4").ravel()
    header = _CKPT_HEADER.pack(CKPT_MAGIC, VERSION, bytes.fromhex(digest), vector.size)
    Path(path).write_bytes(header + vector.tobytes())


def read_checkpoint(path: Path) -> tuple[str, npt.NDArray[np.float64]]:
    payload = Path(path).read_bytes()
    if len(payload) < _CKPT_HEADER.size:
        raise ContainerError(f"truncated checkpoint {path}")
    magic, version, digest, count = _CKPT_HEADER.unpack_from(payload)
    if magic != CKPT_MAGIC:
        raise ContainerError(f"bad magic {magic!r}, expected {CKPT_MAGIC!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported checkpoint version {version}")
    body = payload[_CKPT_HEADER.size:]
    if len(body) != count * 4:
        raise ContainerError(f"checkpoint body has {len(body)} bytes, expected {count * 4}")
    return digest.hex(), np.frombuffer(body, dtype="<f4").astype(np.float64)
