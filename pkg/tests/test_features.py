import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamslu.kernel.errors import ShapeError
from streamslu.kernel.features import (
    CmvnStats,
    accumulate_cmvn,
    apply_cmvn,
    invert_cmvn,
    stack_frames,
    stacked_length,
)


def test_cmvn_standardises_its_own_corpus(rng: np.random.Generator) -> None:
    x = rng.normal(3.0, 2.0, size=(500, 6))
    out = apply_cmvn(x, accumulate_cmvn([x]), eps=0.0)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-10)


def test_constant_dimension_maps_to_zero(rng: np.random.Generator) -> None:
    x = rng.normal(size=(50, 3))
    x[:, 1] = 4.2
    out = apply_cmvn(x, CmvnStats.from_frames(x), eps=1e-8)
    assert np.all(out[:, 1] == 0.0)


def test_constant_dimension_across_shards_maps_to_zero(rng: np.random.Generator) -> None:
    shards = [rng.normal(size=(n, 2)) for n in (7, 13, 31)]
    for shard in shards:
        shard[:, 0] = 0.1
    stats = accumulate_cmvn(shards)
    assert stats.variance[0] == 0.0
    out = apply_cmvn(np.concatenate(shards), stats, eps=1e-8)
    assert np.all(out[:, 0] == 0.0)
    assert abs(out[:, 1].std() - 1.0) < 1e-6


def test_merged_shards_match_single_pass(rng: np.random.Generator) -> None:
    shards = [rng.normal(size=(n, 4)) for n in (3, 17, 40)]
    merged = accumulate_cmvn(shards)
    whole = CmvnStats.from_frames(np.concatenate(shards))
    assert merged.count == whole.count == 60
    np.testing.assert_allclose(merged.mean, whole.mean)
    np.testing.assert_allclose(merged.variance, whole.variance)


def test_invert_undoes_apply(rng: np.random.Generator) -> None:
    x = rng.normal(1.0, 5.0, size=(30, 5))
    stats = CmvnStats.from_frames(x)
    np.testing.assert_allclose(invert_cmvn(apply_cmvn(x, stats), stats), x)


def test_cmvn_errors() -> None:
    with pytest.raises(ShapeError):
        accumulate_cmvn([])
    with pytest.raises(ShapeError):
        accumulate_cmvn([np.zeros((2, 3)), np.zeros((2, 4))])
    stats = CmvnStats.from_frames(np.ones((3, 2)))
    with pytest.raises(ShapeError):
        apply_cmvn(np.zeros((3, 5)), stats)


def test_stack_frames_concatenates_windows() -> None:
    x = np.arange(20, dtype=np.float64).reshape(10, 2)
    stacked = stack_frames(x, width=4, stride=3)
    assert stacked.frames.shape == (3, 8)
    np.testing.assert_array_equal(stacked.frames[1], x[3:7].ravel())
    assert stacked.next_start == 9


def test_stack_frames_short_input_is_empty() -> None:
    stacked = stack_frames(np.zeros((7, 4)), width=8, stride=3)
    assert stacked.empty
    assert stacked.frames.shape == (0, 32)


@settings(max_examples=60, deadline=None)
@given(frames=st.integers(0, 60), width=st.integers(1, 9), stride=st.integers(1, 5))
def test_stacked_length_matches_output(frames: int, width: int, stride: int) -> None:
    out = stack_frames(np.zeros((frames, 2)), width, stride)
    assert out.frames.shape[0] == stacked_length(frames, width, stride)
