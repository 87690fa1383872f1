import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamslu.kernel.ctl import (
    CtlTarget,
    bag_labels,
    boundary_loss,
    ctl_brute_force,
    ctl_grad_check,
    ctl_loss,
    ctl_mil_loss,
    emission_prob,
    mil_bce,
    mil_pool,
    rectified_delta,
)
from streamslu.kernel.errors import ShapeError, UnreachableTargetError

PROB = st.integers(0, 20).map(lambda i: i / 20)


def test_rectified_delta_starts_from_silence() -> None:
    bp = rectified_delta(np.array([[0.2], [0.9], [0.4]]))
    np.testing.assert_allclose(bp.z_on[:, 0], [0.2, 0.7, 0.0])
    np.testing.assert_allclose(bp.z_off[:, 0], [0.0, 0.0, 0.5])
    assert np.all(bp.z_on * bp.z_off == 0.0)


def test_emission_is_a_product() -> None:
    assert emission_prob([0.9, 0.1], [0]) == pytest.approx(0.81)
    assert emission_prob([0.9, 0.1], []) == pytest.approx(0.09)
    assert emission_prob([0.9, 0.1], [0, 1]) == pytest.approx(0.09)


def test_single_frame_loss() -> None:
    assert ctl_loss(np.array([[0.8]]), CtlTarget.onsets([0])).loss == pytest.approx(-math.log(0.8), abs=1e-12)


def test_single_label_over_two_frames() -> None:
    result = boundary_loss(np.array([[0.6], [0.5]]), [0])
    assert result.loss == pytest.approx(-math.log(0.5), abs=1e-12)


def test_several_labels_in_one_frame() -> None:
    y = np.array([[0.7, 0.6]])
    loss = ctl_loss(y, CtlTarget.onsets([0, 1])).loss
    assert loss == pytest.approx(-math.log(0.42))


def test_interval_target_uses_offsets() -> None:
    y = np.array([[0.6], [0.1]])
    target = CtlTarget.intervals([0])
    assert target.labels == (0, 1)
    assert ctl_loss(y, target).loss == pytest.approx(ctl_brute_force(y, target), abs=1e-10)


def test_unreachable_target() -> None:
    with pytest.raises(UnreachableTargetError):
        ctl_loss(np.zeros((3, 2)), CtlTarget.onsets([1]))
    with pytest.raises(UnreachableTargetError):
        ctl_brute_force(np.zeros((3, 2)), CtlTarget.onsets([1]))
    y = np.array([[0.5, 0.0], [0.9, 0.0]])
    with pytest.raises(UnreachableTargetError):
        ctl_brute_force(y, CtlTarget.onsets([0, 1]))


def test_repeated_label_is_not_collapsed() -> None:
    y = np.array([[0.9], [0.1], [0.8]])
    target = CtlTarget.onsets([0, 0])
    loss = ctl_loss(y, target).loss
    assert loss == pytest.approx(-math.log(0.9 * 0.7), abs=1e-12)
    assert loss == pytest.approx(ctl_brute_force(y, target), abs=1e-10)


def test_repeated_label_needs_two_frames() -> None:
    y = np.array([[0.9]])
    target = CtlTarget.onsets([0, 0])
    with pytest.raises(UnreachableTargetError):
        ctl_loss(y, target)
    with pytest.raises(UnreachableTargetError):
        ctl_brute_force(y, target)


def test_single_label_loss_falls_as_its_boundary_rises() -> None:
    losses = [boundary_loss(np.array([[v, 0.3]]), [0]).loss for v in (0.1, 0.4, 0.7, 0.95)]
    assert all(a > b for a, b in zip(losses, losses[1:]))

    def spread(v: float) -> float:
        z = np.array([[0.0, 0.2], [v, 0.5], [0.0, 0.1]])
        return boundary_loss(z, [0]).loss

    losses = [spread(v) for v in (0.05, 0.3, 0.6, 0.99)]
    assert all(a > b for a, b in zip(losses, losses[1:]))

def test_probabilities_are_checked() -> None:
    with pytest.raises(ShapeError):
        ctl_loss(np.array([[1.2]]), CtlTarget.onsets([0]))
    with pytest.raises(ShapeError):
        ctl_loss(np.array([[0.2]]), CtlTarget.onsets([3]))


def test_gradient_agrees_with_finite_differences() -> None:
    y = np.array([[0.2, 0.6], [0.7, 0.3], [0.4, 0.9]])
    assert ctl_grad_check(y, CtlTarget.onsets([0, 1, 1])) <= 1e-4


def test_mil_pooling() -> None:
    np.testing.assert_allclose(mil_pool(np.array([[0.2], [0.8]])), [0.68])
    np.testing.assert_allclose(mil_pool(np.zeros((3, 1))), [0.0])


def test_bag_labels_cover_every_target_event() -> None:
    np.testing.assert_array_equal(bag_labels(CtlTarget.onsets([2, 0, 2]), 4), [1, 0, 1, 0])
    np.testing.assert_array_equal(bag_labels(CtlTarget.intervals([1]), 2), [0, 1])


def test_mil_weights() -> None:
    y = np.array([[0.8]])
    target = CtlTarget.onsets([0])
    assert ctl_mil_loss(y, target, [1.0], 1.0, 0.0).loss == ctl_loss(y, target).loss
    c = np.full((4, 1), 0.3)
    assert ctl_mil_loss(c, CtlTarget.onsets([0]), [1.0], 0.0, 1.0).loss == pytest.approx(-math.log(0.3))
    assert ctl_mil_loss(y, target, [1.0]).loss == pytest.approx(0.223144, abs=1e-6)
    with pytest.raises(ValueError):
        ctl_mil_loss(y, target, [1.0], 0.7, 0.7)


def test_mil_gradient(rng: np.random.Generator) -> None:
    y = rng.uniform(0.1, 0.9, size=(5, 3))
    bag = [1.0, 0.0, 1.0]
    analytic = mil_bce(y, bag).grad
    h = 1e-6
    for t, e in [(0, 0), (2, 1), (4, 2)]:
        up, down = y.copy(), y.copy()
        up[t, e] += h
        down[t, e] -= h
        numeric = (mil_bce(up, bag).loss - mil_bce(down, bag).loss) / (2 * h)
        assert analytic[t, e] == pytest.approx(numeric, rel=1e-5)


@settings(max_examples=60, deadline=None)
@given(frames=st.integers(1, 4), events=st.integers(1, 2), data=st.data())
def test_matches_brute_force(frames: int, events: int, data: st.DataObject) -> None:
    labels = data.draw(st.lists(st.integers(0, events - 1), max_size=3))
    y = np.array(
        data.draw(st.lists(st.lists(PROB, min_size=events, max_size=events), min_size=frames, max_size=frames))
    )
    target = CtlTarget.onsets(labels)
    try:
        expected = ctl_brute_force(y, target)
    except UnreachableTargetError:
        with pytest.raises(UnreachableTargetError):
            ctl_loss(y, target)
        return
    assert ctl_loss(y, target).loss == pytest.approx(expected, abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(data=st.data(), frames=st.integers(1, 6), events=st.integers(1, 3))
def test_mil_pool_stays_within_the_frame_range(data: st.DataObject, frames: int, events: int) -> None:
    y = np.array(
        data.draw(st.lists(st.lists(PROB, min_size=events, max_size=events), min_size=frames, max_size=frames))
    )
    pooled = mil_pool(y)
    assert np.all(pooled >= y.min(axis=0) - 1e-12)
    assert np.all(pooled <= y.max(axis=0) + 1e-12)
