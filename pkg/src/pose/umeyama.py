# src/pose/umeyama.py
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.sim3 import Sim3
from ..utils.errors import ArityError, DegenerateConfigurationError, DomainError, ShapeMismatchError

# relative singular-value floor below which the canonical points count as collinear
_RANK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Paired canonical (NOCS) and camera-frame points."""

    canonical: np.ndarray
    camera: np.ndarray

    def __post_init__(self) -> None:
        canonical = np.asarray(self.canonical, dtype=np.float64)
        camera = np.asarray(self.camera, dtype=np.float64)
        if canonical.ndim != 2 or canonical.shape[1] != 3 or canonical.shape != camera.shape:
            raise ShapeMismatchError(f"correspondences need equal (n, 3) arrays, got {canonical.shape} and {camera.shape}")
        if not (np.all(np.isfinite(canonical)) and np.all(np.isfinite(camera))):
            raise DomainError("correspondences must be finite")
        object.__setattr__(self, "canonical", canonical)
        object.__setattr__(self, "camera", camera)

    def __len__(self) -> int:
        return int(self.canonical.shape[0])

    def subset(self, index: np.ndarray) -> "CorrespondenceSet":
        return CorrespondenceSet(self.canonical[index], self.camera[index])


def fit_similarity(src: np.ndarray, dst: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Least-squares (s, R, t) with dst ~ s R src + t. Inputs are (n, 3);
    raises when src has rank < 2 after centering.
    """
    n = src.shape[0]
    if n < 3:
        raise ArityError(f"similarity fit needs at least 3 correspondences, got {n}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    d_src = src - mu_src
    d_dst = dst - mu_dst

    spread = np.linalg.svd(d_src, compute_uv=False)
    if spread[0] == 0 or spread[1] <= _RANK_TOL * spread[0]:
        raise DegenerateConfigurationError("canonical points are collinear or coincident")

    sigma = d_dst.T @ d_src / n
    U, d, V_t = np.linalg.svd(sigma)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(V_t) < 0:
        S[2, 2] = -1.0

    R = U @ S @ V_t
    var_src = np.square(d_src).sum() / n
    s = float((d * S.diagonal()).sum() / var_src)
    if not s > 0:
        raise DegenerateConfigurationError(f"similarity fit produced non-positive scale {s}")
    t = mu_dst - s * R @ mu_src
    return s, R, t


def residuals(s: float, R: np.ndarray, t: np.ndarray, corr: CorrespondenceSet) -> np.ndarray:
    return np.linalg.norm(corr.camera - (s * corr.canonical @ R.T + t), axis=1)


def umeyama_sim3(corr: CorrespondenceSet) -> Sim3:
    """Closed-form Sim3 mapping canonical points onto camera points."""
    s, R, t = fit_similarity(corr.canonical, corr.camera)
    return Sim3.from_matrix(s, R, t)


def alignment_error(pose: Sim3, corr: CorrespondenceSet) -> float:
    """Sum of squared residuals ||p - pose(c)||^2."""
    return float(np.sum(np.square(corr.camera - pose.apply(corr.canonical))))
