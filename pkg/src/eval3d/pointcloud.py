# src/eval3d/pointcloud.py
"""
Point-cloud reconstruction metrics. Chamfer distance is the symmetric sum
of mean nearest-neighbour L2 distances, unsquared unless `squared=True`.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..utils.errors import DomainError, EmptyInputError, ShapeMismatchError


@dataclass(frozen=True)
class Recon3dReport:
    chamfer: float
    f1_at_threshold: float
    threshold: float

    def to_dict(self) -> dict:
        return asdict(self)


def _cloud(points, name: str) -> np.ndarray:
    cloud = np.asarray(points, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ShapeMismatchError(f"{name}: expected (n, 3) points, got shape {cloud.shape}")
    if len(cloud) == 0:
        raise EmptyInputError(f"{name}: empty point cloud")
    return cloud


def nearest_distances(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Distance from every query point to its nearest reference point."""
    distances, _ = cKDTree(reference).query(query, k=1)
    return np.asarray(distances, dtype=np.float64)


def chamfer(a, b, squared: bool = False) -> float:
    a = _cloud(a, "chamfer a")
    b = _cloud(b, "chamfer b")
    d_ab = nearest_distances(a, b)
    d_ba = nearest_distances(b, a)
    if squared:
        d_ab, d_ba = d_ab**2, d_ba**2
    return float(d_ab.mean() + d_ba.mean())


def fscore(a, b, threshold: float = 0.1) -> float:
    """F1 (percent) of precision (a near b) and recall (b near a)."""
    if not threshold > 0:
        raise DomainError(f"fscore threshold must be positive, got {threshold}")
    a = _cloud(a, "fscore a")
    b = _cloud(b, "fscore b")
    precision = float(np.mean(nearest_distances(a, b) < threshold))
    recall = float(np.mean(nearest_distances(b, a) < threshold))
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def recon_report(pred, gt, threshold: float = 0.1, squared: bool = False) -> Recon3dReport:
    return Recon3dReport(
        chamfer=chamfer(pred, gt, squared=squared),
        f1_at_threshold=fscore(pred, gt, threshold),
        threshold=float(threshold),
    )
