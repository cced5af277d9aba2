# src/pose/metrics.py
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..geometry.sim3 import Sim3
from ..utils.errors import EmptyInputError, ShapeMismatchError

# errors are rounded before the strict threshold comparison
_ROUND_DEG = 9
_ROUND_M = 12


@dataclass(frozen=True)
class PoseEvalReport:
    acc_10cm: float
    acc_10deg: float
    acc_joint: float
    count: int

    def to_dict(self) -> dict:
        return asdict(self)


def rotation_error_deg(pred: Sim3, gt: Sim3) -> float:
    cos = (np.trace(pred.rotation.T @ gt.rotation) - 1.0) / 2.0
    return math.degrees(math.acos(float(np.clip(cos, -1.0, 1.0))))


def translation_error(pred: Sim3, gt: Sim3) -> float:
    return float(np.linalg.norm(pred.translation - gt.translation))


def eval_pose(
    pred: Sequence[Optional[Sim3]],
    gt: Sequence[Sim3],
    max_translation: float = 0.10,
    max_rotation_deg: float = 10.0,
) -> PoseEvalReport:
    """
    Threshold accuracies over matched (pred[i], gt[i]) pairs. A None
    prediction is an unmatched ground-truth object and fails every test.
    """
    if len(pred) != len(gt):
        raise ShapeMismatchError(f"{len(pred)} predictions for {len(gt)} ground-truth poses")
    if not gt:
        raise EmptyInputError("pose evaluation needs at least one matched pair")

    ok_t, ok_r, ok_joint = 0, 0, 0
    for p, g in zip(pred, gt):
        if p is None:
            continue
        t_ok = round(translation_error(p, g), _ROUND_M) < max_translation
        r_ok = round(rotation_error_deg(p, g), _ROUND_DEG) < max_rotation_deg
        ok_t += t_ok
        ok_r += r_ok
        ok_joint += t_ok and r_ok

    n = len(gt)
    return PoseEvalReport(
        acc_10cm=100.0 * ok_t / n,
        acc_10deg=100.0 * ok_r / n,
        acc_joint=100.0 * ok_joint / n,
        count=n,
    )
