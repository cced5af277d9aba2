# src/pose/ransac.py
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ..geometry.sim3 import Sim3
from ..utils.errors import ArityError, DegenerateConfigurationError, DomainError
from ..utils.helpers import named_rng
from ..utils.logger import get_logger
from .umeyama import CorrespondenceSet, fit_similarity, residuals

logger = get_logger(__name__)

SAMPLE_SIZE = 3
_RESAMPLE_ATTEMPTS = 100
_BATCH = 64


@dataclass(frozen=True)
class RansacConfig:
    inlier_threshold: float = 0.01
    max_iterations: int = 2000
    confidence: float = 0.999
    min_inliers: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.inlier_threshold > 0:
            raise DomainError(f"inlier_threshold must be positive, got {self.inlier_threshold}")
        if not 0 < self.confidence < 1:
            raise DomainError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.max_iterations < 1:
            raise DomainError(f"max_iterations must be >= 1, got {self.max_iterations}")

    @classmethod
    def from_settings(cls, settings, seed: int) -> "RansacConfig":
        return cls(
            inlier_threshold=settings.inlier_threshold,
            max_iterations=settings.max_iterations,
            confidence=settings.confidence,
            min_inliers=settings.min_inliers,
            seed=seed,
        )


class RansacResult(NamedTuple):
    pose: Sim3
    inliers: np.ndarray
    iterations: int


class _Hypothesis(NamedTuple):
    count: int
    mean_residual: float
    model: Optional[tuple[float, np.ndarray, np.ndarray]]


def required_iterations(inlier_ratio: float, confidence: float, max_iterations: int) -> int:
    """log(1 - confidence) / log(1 - w^3), capped at max_iterations."""
    if inlier_ratio <= 0:
        return max_iterations
    p_good = inlier_ratio**SAMPLE_SIZE
    if p_good >= 1:
        return 1
    return min(max_iterations, int(math.ceil(math.log(1 - confidence) / math.log(1 - p_good))))


def _collinear(points: np.ndarray) -> bool:
    a = points[1] - points[0]
    b = points[2] - points[0]
    scale = max(np.linalg.norm(a) * np.linalg.norm(b), 1e-300)
    return np.linalg.norm(np.cross(a, b)) <= 1e-9 * scale


def _hypothesis(corr: CorrespondenceSet, cfg: RansacConfig, stream: int, iteration: int) -> _Hypothesis:
    rng = named_rng(cfg.seed, "ransac", stream, iteration)
    n = len(corr)
    for _ in range(_RESAMPLE_ATTEMPTS):
        sample = rng.choice(n, SAMPLE_SIZE, replace=False)
        if _collinear(corr.canonical[sample]):
            continue
        try:
            model = fit_similarity(corr.canonical[sample], corr.camera[sample])
        except DegenerateConfigurationError:
            continue
        res = residuals(*model, corr)
        inliers = res < cfg.inlier_threshold
        count = int(inliers.sum())
        mean = float(res[inliers].mean()) if count else math.inf
        return _Hypothesis(count, mean, model)
    return _Hypothesis(0, math.inf, None)


def ransac_sim3(
    corr: CorrespondenceSet,
    cfg: RansacConfig,
    stream: int = 0,
    threads: int = 1,
) -> Optional[RansacResult]:
    """
    Robust Sim3 from minimal 3-point samples. Hypothesis i draws from its
    own random stream (seed, stream, i) and hypotheses are scored in index
    order, so the result does not depend on `threads`. Returns None when
    no hypothesis reaches `min_inliers`.
    """
    n = len(corr)
    if n < SAMPLE_SIZE:
        raise ArityError(f"ransac needs at least {SAMPLE_SIZE} correspondences, got {n}")

    best = _Hypothesis(0, math.inf, None)
    needed = cfg.max_iterations
    iteration = 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while iteration < needed:
            batch = range(iteration, min(needed, iteration + _BATCH))
            if pool is not None:
                hypotheses = list(pool.map(lambda i: _hypothesis(corr, cfg, stream, i), batch))
            else:
                hypotheses = [_hypothesis(corr, cfg, stream, i) for i in batch]
            for hyp in hypotheses:
                iteration += 1
                better = hyp.count > best.count or (
                    hyp.count == best.count and hyp.count > 0 and hyp.mean_residual < best.mean_residual
                )
                if better:
                    best = hyp
                    needed = required_iterations(best.count / n, cfg.confidence, cfg.max_iterations)
                if iteration >= needed:
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    if best.model is None or best.count < max(cfg.min_inliers, SAMPLE_SIZE):
        logger.warning(
            "[RANSAC] no model with >= %d inliers among %d correspondences (best %d, %d iterations)",
            cfg.min_inliers, n, best.count, iteration,
        )
        return None

    inliers = np.flatnonzero(residuals(*best.model, corr) < cfg.inlier_threshold)
    try:
        model = fit_similarity(corr.canonical[inliers], corr.camera[inliers])
    except DegenerateConfigurationError:
        model = best.model
    refit = np.flatnonzero(residuals(*model, corr) < cfg.inlier_threshold)
    if len(refit) >= len(inliers):
        inliers = refit
    else:
        model = best.model

    s, R, t = model
    logger.debug("[RANSAC] %d/%d inliers after %d iterations", len(inliers), n, iteration)
    return RansacResult(pose=Sim3.from_matrix(s, R, t), inliers=inliers, iterations=iteration)
