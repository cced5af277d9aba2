# src/depth/canonical.py
from __future__ import annotations

import numpy as np

from ..geometry.camera import CameraIntrinsics
from ..utils.errors import DomainError, ShapeMismatchError


def _first_nonpositive(values: np.ndarray, what: str) -> None:
    bad = ~(values > 0) | ~np.isfinite(values)
    if bad.any():
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DomainError(f"{what} must be positive and finite; offending pixel {index} = {values[index]}")


def to_canonical_inverse(depth: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """C = f_w / (W * d)."""
    depth = np.asarray(depth, dtype=np.float64)
    _first_nonpositive(np.atleast_1d(depth), "depth")
    return K.f_w / (K.width * depth)


def from_canonical_inverse(canonical: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """d = f_w / (W * C)."""
    canonical = np.asarray(canonical, dtype=np.float64)
    _first_nonpositive(np.atleast_1d(canonical), "canonical inverse depth")
    return K.f_w / (K.width * canonical)


def depth_loss(c_pred: np.ndarray, c_gt: np.ndarray, lambda_grad: float = 1.0) -> float:
    """
    Mean per-pixel |C_pred - C_gt| plus lambda_grad times the mean absolute
    forward differences of the residual along x and y (the last column / row
    has no forward neighbour and is left out).
    """
    c_pred = np.asarray(c_pred, dtype=np.float64)
    c_gt = np.asarray(c_gt, dtype=np.float64)
    if c_pred.shape != c_gt.shape or c_pred.ndim != 2:
        raise ShapeMismatchError(f"depth_loss: shapes {c_pred.shape} and {c_gt.shape} must match and be 2-D")
    residual = c_pred - c_gt
    loss = np.abs(residual).mean()
    grad_terms = 0.0
    if residual.shape[1] > 1:
        grad_terms += np.abs(np.diff(residual, axis=1)).mean()
    if residual.shape[0] > 1:
        grad_terms += np.abs(np.diff(residual, axis=0)).mean()
    return float(loss + lambda_grad * grad_terms)
