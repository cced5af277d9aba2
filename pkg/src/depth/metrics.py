# src/depth/metrics.py
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..utils.errors import DomainError, EmptyInputError, ShapeMismatchError
from ..utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class DepthEvalReport:
    """
    Monocular depth metrics. delta_k are percentages; SILog is the plain
    standard deviation of the log residual (no x100 scaling).
    """

    delta1: float
    delta2: float
    delta3: float
    abs_rel: float
    log10: float
    rmse: float
    rmse_log: float
    silog: float

    def to_dict(self) -> dict:
        return asdict(self)


def eval_depth(pred: np.ndarray, gt: np.ndarray, valid_mask: Optional[np.ndarray] = None) -> DepthEvalReport:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"eval_depth: pred {pred.shape} vs gt {gt.shape}")
    mask = np.ones(gt.shape, dtype=bool) if valid_mask is None else np.asarray(valid_mask, dtype=bool)
    if mask.shape != gt.shape:
        raise ShapeMismatchError(f"eval_depth: mask {mask.shape} vs gt {gt.shape}")
    if not mask.any():
        raise EmptyInputError("eval_depth: empty valid mask")

    p = pred[mask]
    g = gt[mask]
    if np.any(g <= 0) or np.any(p <= 0):
        raise DomainError("eval_depth: pred and gt must be positive on the mask")

    thresh = np.maximum(p / g, g / p)
    log_diff = np.log(p) - np.log(g)

    report = DepthEvalReport(
        delta1=float(100.0 * (thresh < 1.25).mean()),
        delta2=float(100.0 * (thresh < 1.25**2).mean()),
        delta3=float(100.0 * (thresh < 1.25**3).mean()),
        abs_rel=float(np.mean(np.abs(p - g) / g)),
        log10=float(np.mean(np.abs(np.log10(p) - np.log10(g)))),
        rmse=float(np.sqrt(np.mean((p - g) ** 2))),
        rmse_log=float(np.sqrt(np.mean(log_diff**2))),
        silog=float(np.sqrt(max(np.var(log_diff), 0.0))),
    )
    logger.debug("[EVAL-DEPTH] %d pixels: %s", p.size, report)
    return report


def depth_eval_mask(gt_depth: np.ndarray, foreground: Optional[np.ndarray] = None, use_mask: bool = True) -> np.ndarray:
    """
    Pixels eval_depth should score: finite positive ground truth, limited to
    `foreground` when use_mask is set (depth.use_mask).
    """
    gt_depth = np.asarray(gt_depth, dtype=np.float64)
    valid = np.isfinite(gt_depth) & (gt_depth > 0)
    if use_mask and foreground is not None:
        foreground = np.asarray(foreground, dtype=bool)
        if foreground.shape != gt_depth.shape:
            raise ShapeMismatchError(f"depth mask {foreground.shape} vs gt {gt_depth.shape}")
        valid &= foreground
    return valid
