"""Feature-space preprocessing: global CMVN and temporal frame stacking.

Feature matrices are ``(T, D)`` arrays, one row per 10 ms frame. CMVN statistics
are corpus-global and are computed on the raw frames before stacking.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, NamedTuple

import numpy as np
import numpy.typing as npt

from streamslu.kernel.errors import ShapeError

FeatureMatrix = npt.NDArray[np.floating]

DEFAULT_EPS = 1e-8


@dataclass(frozen=True)
class CmvnStats:
    """Per-dimension mean and (population) variance over ``count`` frames."""

    mean: npt.NDArray[np.float64]
    variance: npt.NDArray[np.float64]
    count: int

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @classmethod
    def from_frames(cls, x: FeatureMatrix) -> "CmvnStats":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ShapeError("no frames")
        mean = x.mean(axis=0)
        variance = ((x - mean) ** 2).mean(axis=0)
        # constant columns: exact mean, zero variance
        constant = np.ptp(x, axis=0) == 0
        mean[constant] = x[0, constant]
        variance[constant] = 0.0
        return cls(mean=mean, variance=variance, count=int(x.shape[0]))

    def merge(self, other: "CmvnStats") -> "CmvnStats":
        """Combine two shard statistics with the pairwise parallel-variance update."""
        if other.dim != self.dim:
            raise ShapeError(f"cannot merge CMVN stats of dims {self.dim} and {other.dim}")
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = (
            self.variance * self.count
            + other.variance * other.count
            + delta**2 * (self.count * other.count / n)
        )
        return CmvnStats(mean=mean, variance=np.maximum(m2 / n, 0.0), count=n)


def accumulate_cmvn(corpus: Iterable[FeatureMatrix]) -> CmvnStats:
    """Corpus-global moments, folded matrix by matrix in corpus order."""
    shards = [CmvnStats.from_frames(x) for x in corpus if np.asarray(x).shape[0] > 0]
    if not shards:
        raise ShapeError("no frames")
    dims = {s.dim for s in shards}
    if len(dims) != 1:
        raise ShapeError(f"corpus mixes feature dims {sorted(dims)}")
    return reduce(CmvnStats.merge, shards)


def _scale(stats: CmvnStats, eps: float) -> npt.NDArray[np.float64]:
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    return np.sqrt(stats.variance + eps)


def apply_cmvn(x: FeatureMatrix, stats: CmvnStats, eps: float = DEFAULT_EPS) -> FeatureMatrix:
    """Standardise every dimension with the global statistics."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != stats.dim:
        raise ShapeError(f"feature dim {x.shape[-1]} does not match CMVN dim {stats.dim}")
    scale = _scale(stats, eps)
    centred = x - stats.mean
    # zero-variance dims with eps == 0 map to 0 instead of nan
    return np.divide(centred, scale, out=np.zeros_like(centred), where=scale > 0)


def invert_cmvn(x: FeatureMatrix, stats: CmvnStats, eps: float = DEFAULT_EPS) -> FeatureMatrix:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != stats.dim:
        raise ShapeError(f"feature dim {x.shape[-1]} does not match CMVN dim {stats.dim}")
    return x * _scale(stats, eps) + stats.mean


class StackedFrames(NamedTuple):
    frames: FeatureMatrix
    next_start: int

    @property
    def empty(self) -> bool:
        return self.frames.shape[0] == 0


def stacked_length(frames: int, width: int, stride: int) -> int:
    if frames < width:
        return 0
    return (frames - width) // stride + 1


def stack_frames(x: FeatureMatrix, width: int = 8, stride: int = 3) -> StackedFrames:
    """Concatenate ``width`` consecutive frames every ``stride`` frames.

    Trailing frames that do not fill a whole window are dropped; ``next_start``
    is the raw index where the following window would begin.
    """
    if width < 1 or stride < 1:
        raise ValueError(f"width and stride must be >= 1, got {width}, {stride}")
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"expected a (T, D) matrix, got shape {x.shape}")
    frames, dim = x.shape
    n = stacked_length(frames, width, stride)
    if n == 0:
        return StackedFrames(np.zeros((0, width * dim), dtype=x.dtype), 0)
    windows = np.lib.stride_tricks.sliding_window_view(x, width, axis=0)[::stride][:n]
    stacked = windows.transpose(0, 2, 1).reshape(n, width * dim)
    return StackedFrames(np.ascontiguousarray(stacked), n * stride)
