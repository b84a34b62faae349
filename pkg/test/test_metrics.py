import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pose_boost.errors import PoseBoostError
from pose_boost.metrics import (
    evaluate_predictions,
    joint_errors,
    mean_error,
    pck,
    pck_from_errors,
    pckf,
    pckf_from_errors,
    reference_lengths,
    root_align,
)

# --- helpers ---------------------------------------------------------------


def _brute_force(pred, gt, threshold, root=0):
    """Loop-by-loop PCK and mean error."""
    hits, total, count = 0, 0.0, 0
    for n in range(len(pred)):
        for j in range(len(pred[n])):
            d = 0.0
            for k in range(3):
                a = pred[n][j][k] - pred[n][root][k]
                b = gt[n][j][k] - gt[n][root][k]
                d += (a - b) ** 2
            d = math.sqrt(d)
            hits += d <= threshold
            total += d
            count += 1
    return hits / count, total / count


_poses = arrays(np.float64, (3, 4, 3), elements=st.floats(-50, 50, allow_nan=False, width=64))


# --- examples --------------------------------------------------------------


def test_pck_of_listed_errors():
    assert pck_from_errors(np.array([5.0, 15.0, 25.0]), 20.0) == pytest.approx(2 / 3)
    assert pck_from_errors(np.array([5.0, 15.0, 25.0]), math.inf) == 1.0
    assert pck_from_errors(np.array([]), 10.0) == 0.0
    with pytest.raises(ValueError):
        pck_from_errors(np.array([1.0]), 0.0)


def test_perfect_prediction():
    gt = np.random.default_rng(0).normal(size=(4, 5, 3))
    report = evaluate_predictions(gt, gt, [5.0, 10.0])
    assert report.pck == {5.0: 1.0, 10.0: 1.0}
    assert report.mean_error == 0.0
    assert report.count == 4


def test_one_joint_off_by_thirty():
    gt = np.zeros((1, 3, 3))
    pred = gt.copy()
    pred[0, 2, 0] = 30.0
    assert pck(pred, gt, 20.0) == pytest.approx(2 / 3)
    assert mean_error(pred, gt) == pytest.approx(10.0)


def test_pckf_normalizes_by_reference():
    assert pckf_from_errors(np.array([4.0, 6.0]), 10.0, 0.5) == 0.5
    with pytest.raises(PoseBoostError):
        pckf_from_errors(np.array([4.0]), 0.0, 0.5)


def test_pckf_uses_per_sample_pair_distance():
    gt = np.array([[[0.0, 0.0], [10.0, 0.0], [5.0, 5.0]], [[0.0, 0.0], [0.0, 20.0], [5.0, 5.0]]])
    pred = gt.copy()
    pred[:, 2, 0] += 6.0
    np.testing.assert_array_equal(reference_lengths(gt, (0, 1)), [10.0, 20.0])
    # normalized errors are 0.6 and 0.3 for the moved joint, 0 elsewhere
    assert pckf(pred, gt, 0.5, (0, 1)) == pytest.approx(5 / 6)
    collapsed = gt.copy()
    collapsed[0, 1] = collapsed[0, 0]
    with pytest.raises(PoseBoostError):
        pckf(pred, collapsed, 0.5, (0, 1))


def test_visibility_masks_joints():
    gt = np.zeros((1, 3, 3))
    pred = gt.copy()
    pred[0, 2, 0] = 30.0
    vis = np.array([[True, True, False]])
    assert pck(pred, gt, 20.0, visibility=vis) == 1.0
    assert mean_error(pred, gt, visibility=vis) == 0.0
    with pytest.raises(PoseBoostError):
        pck(pred, gt, 20.0, visibility=np.array([True, False]))


def test_shape_mismatch_rejected():
    with pytest.raises(PoseBoostError):
        joint_errors(np.zeros((1, 3, 3)), np.zeros((1, 4, 3)))
    with pytest.raises(PoseBoostError):
        evaluate_predictions(np.zeros((3, 3)), np.zeros((3, 3)), [1.0])


def test_report_breakdowns():
    gt = np.zeros((2, 3, 3))
    pred = gt.copy()
    pred[0, 1, 1] = 4.0
    pred[1, 2, 2] = 8.0
    report = evaluate_predictions(pred, gt, [5.0], tags=[["facing_left"], ["facing_right"]])
    assert report.per_joint == [0.0, 2.0, 4.0]
    assert report.per_tag == {"facing_left": 4.0 / 3, "facing_right": 8.0 / 3}
    assert report.pckf is None


def test_report_pckf_when_pair_given():
    rng = np.random.default_rng(1)
    gt = rng.normal(size=(5, 4, 3)) * 10
    report = evaluate_predictions(gt, gt, [1.0], pckf_pair=(0, 1), pckf_thresholds=[0.5, 0.1])
    assert report.pckf == {0.1: 1.0, 0.5: 1.0}


def test_report_round_trips_through_dict():
    gt = np.zeros((1, 2, 3))
    pred = gt + np.array([[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]])
    report = evaluate_predictions(pred, gt, [5.0, 2.0], tags=[["facing_front"]])
    again = type(report).from_dict(report.to_dict())
    assert again == report


def test_root_alignment_subtracts_root():
    poses = np.array([[[1.0, 2.0, 3.0], [4.0, 6.0, 8.0]]])
    np.testing.assert_array_equal(root_align(poses), [[[0.0, 0.0, 0.0], [3.0, 4.0, 5.0]]])
    np.testing.assert_array_equal(root_align(poses, root=1)[0, 1], [0.0, 0.0, 0.0])


# --- properties ------------------------------------------------------------


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n, joints = rng.integers(1, 6), rng.integers(2, 8)
        gt = rng.normal(size=(n, joints, 3)) * 20
        pred = gt + rng.normal(size=gt.shape) * 10
        threshold = float(rng.uniform(1, 30))
        root = int(rng.integers(0, joints))
        expected_pck, expected_mean = _brute_force(pred, gt, threshold, root)
        report = evaluate_predictions(pred, gt, [threshold], root=root)
        assert abs(report.pck[threshold] - expected_pck) <= 1e-12
        assert abs(report.mean_error - expected_mean) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(pred=_poses, gt=_poses, t1=st.floats(0.1, 100), t2=st.floats(0.1, 100))
def test_pck_monotone_in_threshold(pred, gt, t1, t2):
    lo, hi = sorted((t1, t2))
    assert pck(pred, gt, lo) <= pck(pred, gt, hi)


@settings(max_examples=50, deadline=None)
@given(pred=_poses, gt=_poses, shift=arrays(np.float64, (3,), elements=st.floats(-100, 100, allow_nan=False)))
def test_global_translation_changes_nothing(pred, gt, shift):
    np.testing.assert_allclose(joint_errors(pred + shift, gt), joint_errors(pred, gt), atol=1e-9)
