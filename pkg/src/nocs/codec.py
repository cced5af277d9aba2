# src/nocs/codec.py
"""
Bin-and-delta NOCS encoding. Each axis of [0, 1] is split into M centered
bins; bin i has center (i + 0.5) / M and a coordinate is stored as its bin
plus the offset from that center. c = 1.0 lands in bin M - 1 with offset
+0.5 / M.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import log_softmax

from ..utils.errors import DomainError, EmptyInputError, ShapeMismatchError

DEFAULT_BINS = 64


@dataclass(frozen=True, eq=False)
class NocsBinned:
    """Per-pixel, per-axis bin logits (..., 3, M) and offsets (..., 3)."""

    logits: np.ndarray
    delta: np.ndarray

    def __post_init__(self) -> None:
        if self.logits.shape[:-1] != self.delta.shape:
            raise ShapeMismatchError(f"NocsBinned: logits {self.logits.shape} vs delta {self.delta.shape}")

    @property
    def bins(self) -> int:
        return int(self.logits.shape[-1])


def encode(c, bins: int = DEFAULT_BINS):
    """Return (bin_index, delta); works on scalars and arrays alike."""
    values = np.asarray(c, dtype=np.float64)
    if not np.all(np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise DomainError(f"NOCS coordinate must lie in [0, 1], got {c}")
    index = np.minimum(np.floor(values * bins), bins - 1).astype(np.int64)
    delta = values - (index + 0.5) / bins
    if np.ndim(c) == 0:
        return int(index), float(delta)
    return index, delta


def encode_field(nocs: np.ndarray, bins: int = DEFAULT_BINS) -> tuple[np.ndarray, np.ndarray]:
    index, delta = encode(np.asarray(nocs, dtype=np.float64), bins)
    return np.asarray(index), np.asarray(delta)


def decode(bin_index, delta, bins: int = DEFAULT_BINS):
    index = np.asarray(bin_index)
    if np.any(index < 0) or np.any(index >= bins):
        raise DomainError(f"bin index must lie in [0, {bins}), got {bin_index}")
    value = np.clip((index + 0.5) / bins + np.asarray(delta, dtype=np.float64), 0.0, 1.0)
    if np.ndim(bin_index) == 0 and np.ndim(delta) == 0:
        return float(value)
    return value


def decode_logits(logits: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Argmax bin per axis, then decode."""
    logits = np.asarray(logits)
    index = np.argmax(logits, axis=-1)
    return decode(index, delta, bins=logits.shape[-1])


def nocs_loss(
    pred: NocsBinned,
    gt_nocs: np.ndarray,
    foreground_mask: np.ndarray,
    ce_weight: float = 1.0,
    mse_weight: float = 1.0,
) -> float:
    """
    Mean over foreground pixels and the three axes of
    ce_weight * CE(logits, gt_bin) + mse_weight * (delta_pred - gt_delta)^2.
    """
    mask = np.asarray(foreground_mask, dtype=bool)
    if not mask.any():
        raise EmptyInputError("nocs_loss: empty foreground mask")
    gt_nocs = np.asarray(gt_nocs, dtype=np.float64)
    if gt_nocs.shape != pred.delta.shape or mask.shape != gt_nocs.shape[:-1]:
        raise ShapeMismatchError(
            f"nocs_loss: gt {gt_nocs.shape}, delta {pred.delta.shape}, mask {mask.shape} disagree"
        )
    gt_index, gt_delta = encode_field(gt_nocs[mask], pred.bins)
    log_probs = log_softmax(np.asarray(pred.logits, dtype=np.float64)[mask], axis=-1)
    ce = -np.take_along_axis(log_probs, gt_index[..., None], axis=-1)[..., 0]
    mse = (np.asarray(pred.delta, dtype=np.float64)[mask] - gt_delta) ** 2
    return float(np.mean(ce_weight * ce + mse_weight * mse))


def one_hot_field(nocs: np.ndarray, bins: int = DEFAULT_BINS, confidence: Optional[float] = None) -> NocsBinned:
    """
    NocsBinned whose argmax decodes back to `nocs`: logit `confidence` on the
    right bin and 0 elsewhere (or one-hot of 1.0 when confidence is None).
    """
    index, delta = encode_field(nocs, bins)
    logits = np.zeros(index.shape + (bins,), dtype=np.float64)
    np.put_along_axis(logits, index[..., None], 1.0 if confidence is None else confidence, axis=-1)
    return NocsBinned(logits=logits, delta=delta)
