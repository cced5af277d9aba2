# src/semantics/metrics.py
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.special import log_softmax

from ..utils.errors import DomainError, EmptyInputError, ShapeMismatchError
from ..utils.logger import get_logger
from .unaries import cosine_logits

logger = get_logger(__name__)


@dataclass(frozen=True)
class SegEvalReport:
    miou: float
    fb_iou: float
    hit_at_5: float

    def to_dict(self) -> dict:
        return asdict(self)


def _iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def eval_segmentation(pred_topk: np.ndarray, gt: np.ndarray, background: int = -1) -> SegEvalReport:
    """
    mIoU of the top-1 prediction over the foreground classes present in the
    ground truth, FB-IoU as the mean of foreground and background binary IoUs,
    and hit@5 over ground-truth foreground pixels.
    """
    pred_topk = np.asarray(pred_topk)
    gt = np.asarray(gt)
    if pred_topk.ndim == 2:
        pred_topk = pred_topk[..., None]
    if pred_topk.shape[:2] != gt.shape:
        raise ShapeMismatchError(f"prediction {pred_topk.shape[:2]} vs ground truth {gt.shape}")

    fg_gt = gt != background
    if not fg_gt.any():
        raise EmptyInputError("ground truth has no foreground pixels")

    top1 = pred_topk[..., 0]
    classes = np.unique(gt[fg_gt])
    miou = float(np.mean([_iou(top1 == c, gt == c) for c in classes]))

    fg_pred = top1 != background
    fb_iou = 0.5 * (_iou(fg_pred, fg_gt) + _iou(~fg_pred, ~fg_gt))

    hits = np.any(pred_topk[fg_gt] == gt[fg_gt][:, None], axis=-1)
    hit_at_5 = float(np.mean(hits))

    return SegEvalReport(miou=100.0 * miou, fb_iou=100.0 * fb_iou, hit_at_5=100.0 * hit_at_5)


def pixel_accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(gt)))


def semantics_loss(
    embeddings: np.ndarray,
    vocab: np.ndarray,
    gt_labels: np.ndarray,
    tau: float = 0.07,
    image_vocab_mask: Optional[np.ndarray] = None,
    ignore_label: int = -1,
) -> float:
    """
    Cross-entropy of softmax(cos(e, l_c) / tau) against the ground-truth
    class, with the softmax restricted to the categories enabled in
    `image_vocab_mask`. Pixels labelled `ignore_label` or whose class is
    masked out are skipped.
    """
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    logits = cosine_logits(embeddings, vocab) / tau
    gt_labels = np.asarray(gt_labels)
    if gt_labels.shape != logits.shape[:-1]:
        raise ShapeMismatchError(f"labels {gt_labels.shape} vs embeddings {logits.shape[:-1]}")

    num_classes = logits.shape[-1]
    enabled = np.ones(num_classes, dtype=bool) if image_vocab_mask is None else np.asarray(image_vocab_mask, dtype=bool)
    if enabled.shape != (num_classes,):
        raise ShapeMismatchError(f"vocabulary mask {enabled.shape} vs {num_classes} classes")

    labelled = gt_labels != ignore_label
    absent = labelled & ~enabled[np.clip(gt_labels, 0, num_classes - 1)]
    if absent.any():
        logger.warning("[SEM-LOSS] %d pixels have a class outside the image vocabulary; ignored", int(absent.sum()))
    keep = labelled & ~absent
    if not keep.any():
        raise EmptyInputError("semantics loss: no labelled pixel")

    masked = np.where(enabled, logits[keep], -np.inf)
    log_probs = log_softmax(masked, axis=-1)
    return float(-np.mean(log_probs[np.arange(keep.sum()), gt_labels[keep]]))
