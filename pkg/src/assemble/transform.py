# src/assemble/transform.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..gaussians.canonical import to_canonical
from ..gaussians.primitives import GaussianSet, materialize
from ..geometry.sim3 import Sim3
from ..mapio.bundle import DenseMaps
from ..pose.ransac import RansacConfig
from ..pose.split import Fragment, merge_fragments, split_instances
from ..semantics.crf import BACKGROUND, CrfResult, crf_mean_field, to_label_map, topk_labels
from ..semantics.instances import extract_instances
from ..semantics.unaries import unaries_from_embeddings
from ..utils.config import PipelineConfig
from ..utils.errors import InvariantError
from ..utils.logger import get_logger

logger = get_logger(__name__)

TOPK = 5


@dataclass(frozen=True, eq=False)
class Segmentation:
    unary_labels: np.ndarray
    labels: np.ndarray
    topk: np.ndarray
    crf: CrfResult
    background_index: int


@dataclass(frozen=True, eq=False)
class AssembledInstance:
    instance_id: int
    label_id: int
    label_name: str
    pose: Sim3
    pixels: np.ndarray
    inlier_count: int
    gaussians: GaussianSet

    @property
    def pixel_count(self) -> int:
        return int(len(self.pixels))


def segment(maps: DenseMaps, cfg: PipelineConfig, threads: int = 1) -> Segmentation:
    """Unaries from cosine similarity, then dense mean-field smoothing."""
    crf = cfg.crf
    background = maps.background_index(crf.background_name)
    unary = unaries_from_embeddings(maps.embeddings, maps.vocab, crf.tau)
    result = crf_mean_field(
        unary,
        maps.embeddings,
        iterations=crf.iterations,
        pairwise_weight=crf.pairwise_weight,
        window=crf.window,
        exact_max_pixels=crf.exact_max_pixels,
        background_index=background,
        threads=threads,
    )
    unary_labels = to_label_map(unary.argmax(), background)
    changed = int(np.count_nonzero(unary_labels != result.labels))
    logger.info("[ASSEMBLE-TRANSFORM] CRF relabelled %d pixels", changed)
    return Segmentation(
        unary_labels=unary_labels,
        labels=result.labels,
        topk=topk_labels(result.marginals, TOPK, background),
        crf=result,
        background_index=background,
    )


def discover_instances(
    maps: DenseMaps,
    labels: np.ndarray,
    cfg: PipelineConfig,
    threads: int = 1,
) -> list[AssembledInstance]:
    """
    Connected components per label, each split by pose into objects whose
    Gaussians are materialized and moved into their canonical frame.
    Component c draws its random numbers from stream c. Fragments of one
    object split by an occluder are merged before materializing.
    """
    ransac = RansacConfig.from_settings(cfg.ransac, cfg.runtime.seed)
    depth = maps.metric_depth()
    K = maps.intrinsics
    nocs = np.asarray(maps.nocs, dtype=np.float64)
    k = cfg.gaussians.k
    if k > maps.k:
        logger.warning(
            "[ASSEMBLE-TRANSFORM] gaussians.k=%d but the bundle carries %d per pixel; using %d", k, maps.k, maps.k
        )
        k = maps.k

    components = extract_instances(labels, min_pixels=cfg.crf.min_pixels, background=BACKGROUND)
    fragments: list[Fragment] = []
    for c, component in enumerate(components):
        for split in split_instances(component.pixels, nocs, depth, K, ransac, threads=threads, stream=c):
            fragments.append(Fragment(component.label, split.pixels, split.pose, split.inlier_count))
    fragments = merge_fragments(fragments, nocs, depth, K, ransac.inlier_threshold)

    instances: list[AssembledInstance] = []
    for fragment in fragments:
        camera = materialize(maps, fragment.pixels, K, offset_mode=cfg.gaussians.offset_mode, k=k)
        instances.append(
            AssembledInstance(
                instance_id=len(instances) + 1,
                label_id=fragment.label,
                label_name=maps.vocab_names[fragment.label],
                pose=fragment.pose,
                pixels=fragment.pixels,
                inlier_count=fragment.inlier_count,
                gaussians=to_canonical(camera, fragment.pose, cfg.gaussians.canonical_mode),
            )
        )
    logger.info("[ASSEMBLE-TRANSFORM] %d components -> %d instances", len(components), len(instances))
    return instances


def instance_map(instances: list[AssembledInstance], height: int, width: int) -> np.ndarray:
    """int32 map of instance ids, 0 where no instance claimed the pixel."""
    out = np.zeros((height, width), dtype=np.int32)
    for inst in instances:
        rows, cols = inst.pixels[:, 0], inst.pixels[:, 1]
        taken = out[rows, cols] != 0
        if taken.any():
            row, col = int(rows[np.argmax(taken)]), int(cols[np.argmax(taken)])
            raise InvariantError(
                f"pixel (row={row}, col={col}) claimed by instances {out[row, col]} and {inst.instance_id}"
            )
        out[rows, cols] = inst.instance_id
    return out


def pixel_accuracy_gain(seg: Segmentation, gt_labels: Optional[np.ndarray]) -> Optional[float]:
    """CRF accuracy minus unary-argmax accuracy against known labels."""
    if gt_labels is None:
        return None
    return float(np.mean(seg.labels == gt_labels) - np.mean(seg.unary_labels == gt_labels))
