# pose_boost/metrics.py
"""
Pose accuracy metrics.

3D errors are measured after root alignment: each pose has its own root
joint subtracted, so a global translation of either side changes nothing.
Only visible joints count.
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from pose_boost.errors import PoseBoostError
from pose_boost.models import MetricsReport

log = logging.getLogger(__name__)


def _check(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise PoseBoostError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")


def root_align(poses: np.ndarray, root: int = 0) -> np.ndarray:
    poses = np.asarray(poses, dtype=np.float64)
    return poses - poses[..., root : root + 1, :]


def joint_errors(pred: np.ndarray, gt: np.ndarray, root: int = 0) -> np.ndarray:
    """Euclidean error per joint after root alignment, ``[..., J]``."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    _check(pred, gt)
    return np.linalg.norm(root_align(pred, root) - root_align(gt, root), axis=-1)


def _visible(errors: np.ndarray, visibility: np.ndarray | None) -> np.ndarray:
    if visibility is None:
        return errors.reshape(-1)
    visibility = np.asarray(visibility, dtype=bool)
    if visibility.shape != errors.shape:
        raise PoseBoostError(f"visibility shape {visibility.shape} does not match errors {errors.shape}")
    return errors[visibility]


def pck_from_errors(errors: np.ndarray, threshold: float) -> float:
    """Fraction of errors at or below `threshold`."""
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    errors = np.asarray(errors, dtype=np.float64).reshape(-1)
    if errors.size == 0:
        return 0.0
    return float(np.count_nonzero(errors <= threshold)) / errors.size


def pck(
    pred: np.ndarray,
    gt: np.ndarray,
    threshold: float,
    *,
    root: int = 0,
    visibility: np.ndarray | None = None,
) -> float:
    return pck_from_errors(_visible(joint_errors(pred, gt, root), visibility), threshold)


def mean_error(
    pred: np.ndarray, gt: np.ndarray, *, root: int = 0, visibility: np.ndarray | None = None
) -> float:
    errors = _visible(joint_errors(pred, gt, root), visibility)
    return float(errors.mean()) if errors.size else 0.0


def reference_lengths(gt2d: np.ndarray, pair: Sequence[int]) -> np.ndarray:
    """Per-sample distance between the two reference joints."""
    gt2d = np.asarray(gt2d, dtype=np.float64)
    a, b = pair
    return np.linalg.norm(gt2d[..., a, :] - gt2d[..., b, :], axis=-1)


def pckf_from_errors(errors: np.ndarray, reference: np.ndarray | float, threshold: float) -> float:
    """PCK on errors divided by each sample's reference length."""
    errors = np.asarray(errors, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if np.any(reference <= 0):
        raise PoseBoostError("PCKf reference length must be positive")
    if reference.ndim:
        reference = reference.reshape(reference.shape + (1,) * (errors.ndim - reference.ndim))
    return pck_from_errors(errors / reference, threshold)


def pckf(
    pred2d: np.ndarray,
    gt2d: np.ndarray,
    threshold: float,
    pair: Sequence[int],
    *,
    visibility: np.ndarray | None = None,
) -> float:
    """2D PCK normalized by the per-sample distance between the joints in `pair`."""
    pred2d, gt2d = np.asarray(pred2d, dtype=np.float64), np.asarray(gt2d, dtype=np.float64)
    _check(pred2d, gt2d)
    reference = reference_lengths(gt2d, pair)
    if np.any(reference <= 0):
        raise PoseBoostError(f"PCKf reference joints {tuple(pair)} coincide in some sample")
    normalized = np.linalg.norm(pred2d - gt2d, axis=-1) / reference[..., None]
    return pck_from_errors(_visible(normalized, visibility), threshold)


def evaluate_predictions(
    pred: np.ndarray,
    gt: np.ndarray,
    thresholds: Sequence[float],
    *,
    root: int = 0,
    visibility: np.ndarray | None = None,
    tags: Sequence[Sequence[str]] | None = None,
    pckf_pair: Sequence[int] = (),
    pckf_thresholds: Sequence[float] = (),
) -> MetricsReport:
    """Full report for poses ``[N, J, 3]``."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    _check(pred, gt)
    if pred.ndim != 3:
        raise PoseBoostError(f"expected poses [N, J, 3], got {pred.shape}")
    errors = joint_errors(pred, gt, root)
    vis = np.ones(errors.shape, dtype=bool) if visibility is None else np.asarray(visibility, dtype=bool)
    flat = _visible(errors, vis)
    per_joint = [float(errors[vis[:, j], j].mean()) if vis[:, j].any() else 0.0 for j in range(errors.shape[1])]
    per_tag: dict[str, float] = {}
    if tags is not None:
        for tag in sorted({t for ts in tags for t in ts}):
            rows = np.array([tag in ts for ts in tags])
            tagged = _visible(errors[rows], vis[rows])
            per_tag[tag] = float(tagged.mean()) if tagged.size else 0.0
    report = MetricsReport(
        pck={float(t): pck_from_errors(flat, t) for t in sorted(thresholds)},
        mean_error=float(flat.mean()) if flat.size else 0.0,
        count=int(pred.shape[0]),
        per_joint=per_joint,
        per_tag=per_tag,
    )
    if pckf_pair:
        report.pckf = {
            float(t): pckf(pred[..., :2], gt[..., :2], t, pckf_pair, visibility=vis) for t in sorted(pckf_thresholds)
        }
    log.debug("Evaluated %d poses: mean error %.4f", report.count, report.mean_error)
    return report
