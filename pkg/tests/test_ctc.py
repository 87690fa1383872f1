import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import log_softmax

from streamslu.kernel.ctc import (
    collapse,
    ctc_brute_force,
    ctc_grad_check,
    ctc_loss,
    required_frames,
)
from streamslu.kernel.errors import InstanceTooLargeError, NoAlignmentError, ShapeError


def test_single_frame() -> None:
    x = np.log([[0.3, 0.7]])
    assert ctc_loss(x, [1]).loss == pytest.approx(-math.log(0.7), abs=1e-12)


def test_two_frames_three_paths() -> None:
    x = np.log([[0.4, 0.6], [0.7, 0.3]])
    assert ctc_loss(x, [1]).loss == pytest.approx(-math.log(0.72), abs=1e-12)
    assert ctc_brute_force(x, [1]) == pytest.approx(-math.log(0.72), abs=1e-10)


def test_uniform_rows() -> None:
    x = np.log(np.full((2, 2), 0.5))
    assert ctc_loss(x, [1]).loss == pytest.approx(-math.log(0.75))


def test_empty_target_is_all_blank() -> None:
    x = np.log([[0.9, 0.1], [0.8, 0.2]])
    assert ctc_loss(x, []).loss == pytest.approx(-math.log(0.72))


def test_repeat_needs_separating_blank() -> None:
    assert required_frames([1, 1]) == 3
    assert required_frames([1, 2, 2, 2]) == 6
    x = log_softmax(np.zeros((2, 3)), axis=1)
    with pytest.raises(NoAlignmentError) as info:
        ctc_loss(x, [1, 1])
    assert info.value.required == 3


def test_pure_blank_frame_is_absorbed(rng: np.random.Generator) -> None:
    x = log_softmax(rng.normal(size=(4, 3)), axis=1)
    blank = np.array([[0.0, -np.inf, -np.inf]])
    for labels in ([1, 2], [2, 2], []):
        base = ctc_loss(x, labels).loss
        assert ctc_loss(np.vstack([x, blank]), labels).loss == pytest.approx(base, abs=1e-9)
        assert ctc_loss(np.vstack([blank, x]), labels).loss == pytest.approx(base, abs=1e-9)


def test_label_order_matters(rng: np.random.Generator) -> None:
    for _ in range(20):
        x = log_softmax(rng.normal(size=(5, 4)), axis=1)
        labels = [int(v) for v in rng.choice(np.arange(1, 4), size=2, replace=False)]
        assert abs(ctc_loss(x, labels).loss - ctc_loss(x, labels[::-1]).loss) > 1e-9


def test_input_validation() -> None:
    with pytest.raises(ShapeError, match="normalized"):
        ctc_loss(np.zeros((2, 3)), [1])
    with pytest.raises(ShapeError):
        ctc_loss(log_softmax(np.zeros((2, 3)), axis=1), [3])
    with pytest.raises(ShapeError):
        ctc_loss(np.zeros((0, 3)), [])


def test_gradient_rows_sum_to_zero(rng: np.random.Generator) -> None:
    x = log_softmax(rng.normal(size=(6, 4)), axis=1)
    grad = ctc_loss(x, [1, 3, 3]).grad
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


def test_forced_path_gradient() -> None:
    # T == required frames for [1, 1]: the only path is 1 0 1
    x = log_softmax(np.array([[0.1, 2.0], [1.5, -0.3], [0.2, 0.9]]), axis=1)
    result = ctc_loss(x, [1, 1])
    forced = np.zeros((3, 2))
    forced[[0, 1, 2], [1, 0, 1]] = 1.0
    np.testing.assert_allclose(result.grad, np.exp(x) - forced, atol=1e-12)
    assert ctc_grad_check(x, [1, 1], h=1e-5) <= 1e-4


def test_brute_force_refuses_large_instances() -> None:
    x = log_softmax(np.zeros((12, 5)), axis=1)
    with pytest.raises(InstanceTooLargeError):
        ctc_brute_force(x, [1])


def test_grad_check_step_range() -> None:
    with pytest.raises(ValueError):
        ctc_grad_check(np.log([[0.5, 0.5]]), [1], h=1e-2)


def test_collapse() -> None:
    assert collapse([0, 1, 1, 0, 1, 2, 2, 0]) == [1, 1, 2]
    assert collapse([]) == []


@settings(max_examples=80, deadline=None)
@given(
    frames=st.integers(1, 5),
    vocab=st.integers(2, 4),
    data=st.data(),
)
def test_matches_brute_force(frames: int, vocab: int, data: st.DataObject) -> None:
    labels = data.draw(st.lists(st.integers(1, vocab - 1), max_size=3))
    seed = data.draw(st.integers(0, 2**16))
    x = log_softmax(np.random.default_rng(seed).normal(size=(frames, vocab)), axis=1)
    if required_frames(labels) > frames:
        with pytest.raises(NoAlignmentError):
            ctc_loss(x, labels)
        return
    assert ctc_loss(x, labels).loss == pytest.approx(ctc_brute_force(x, labels), abs=1e-9)
