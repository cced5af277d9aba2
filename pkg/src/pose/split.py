# src/pose/split.py
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.camera import CameraIntrinsics, pixel_rays
from ..geometry.sim3 import Sim3
from ..utils.logger import get_logger
from .ransac import RansacConfig, ransac_sim3
from .umeyama import CorrespondenceSet, umeyama_sim3

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class SplitInstance:
    pixels: np.ndarray  # (n, 2) rows of (row, col)
    pose: Sim3
    inlier_count: int


def correspondences(pixels: np.ndarray, nocs: np.ndarray, depth: np.ndarray, K: CameraIntrinsics) -> CorrespondenceSet:
    rows, cols = pixels[:, 0], pixels[:, 1]
    camera = pixel_rays(K)[rows, cols] * np.asarray(depth, dtype=np.float64)[rows, cols, None]
    return CorrespondenceSet(canonical=np.asarray(nocs, dtype=np.float64)[rows, cols], camera=camera)


def split_instances(
    pixels: np.ndarray,
    nocs: np.ndarray,
    depth: np.ndarray,
    K: CameraIntrinsics,
    cfg: RansacConfig,
    threads: int = 1,
    stream: int = 0,
) -> list[SplitInstance]:
    """
    Peel instances off one semantic component: run RANSAC on the remaining
    pixels, emit the inliers as an object, drop them and repeat until fewer
    than `min_inliers` pixels agree on a pose. Each round r uses the random
    stream (stream, r).
    """
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    corr = correspondences(pixels, nocs, depth, K)
    remaining = np.arange(len(pixels))
    found: list[SplitInstance] = []

    round_index = 0
    while len(remaining) >= max(cfg.min_inliers, 3):
        result = ransac_sim3(corr.subset(remaining), cfg, stream=stream * 1_000 + round_index, threads=threads)
        if result is None:
            break
        taken = remaining[result.inliers]
        found.append(SplitInstance(pixels=pixels[taken], pose=result.pose, inlier_count=len(taken)))
        remaining = np.setdiff1d(remaining, taken, assume_unique=True)
        round_index += 1

    logger.info("[SPLIT] %d pixels -> %d instances, %d pixels unassigned", len(pixels), len(found), len(remaining))
    return found


@dataclass(frozen=True, eq=False)
class Fragment:
    label: int
    pixels: np.ndarray
    pose: Sim3
    inlier_count: int


def merge_fragments(
    fragments: list[Fragment],
    nocs: np.ndarray,
    depth: np.ndarray,
    K: CameraIntrinsics,
    threshold: float,
) -> list[Fragment]:
    """
    Join same-label fragments that a single pose explains, e.g. one object
    cut in two by an occluder. A fragment joins the first earlier fragment
    whose pose fits its correspondences with median residual below
    `threshold`; the pose is then refit on the union and its inliers
    recounted under the new pose.
    """
    merged: list[Fragment] = []
    for piece in fragments:
        corr = correspondences(piece.pixels, nocs, depth, K)
        for i, kept in enumerate(merged):
            if kept.label != piece.label:
                continue
            residual = np.linalg.norm(corr.camera - kept.pose.apply(corr.canonical), axis=1)
            if np.median(residual) >= threshold:
                continue
            union = np.concatenate([kept.pixels, piece.pixels])
            union_corr = correspondences(union, nocs, depth, K)
            pose = umeyama_sim3(union_corr)
            inliers = np.linalg.norm(union_corr.camera - pose.apply(union_corr.canonical), axis=1) < threshold
            merged[i] = Fragment(kept.label, union, pose, int(inliers.sum()))
            logger.info("[MERGE] label %d: joined %d + %d pixels", piece.label, len(kept.pixels), len(piece.pixels))
            break
        else:
            merged.append(piece)
    return merged
