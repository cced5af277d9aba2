# src/eval3d/report.py
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from ..depth.metrics import depth_eval_mask, eval_depth
from ..gaussians.primitives import GaussianSet
from ..mapio.bundle import DenseMaps, GroundTruth, require_file
from ..mapio.ply import import_gaussians_ply
from ..mapio.scene import SceneDescriptor, read_scene
from ..oracle.renders import canonical_gt_renders, primitive_from_gt, sample_surface_points
from ..pose.metrics import eval_pose, rotation_error_deg, translation_error
from ..semantics.metrics import eval_segmentation
from ..splat.rasterizer import render_views
from ..splat.ssim import psnr
from ..splat.views import canonical_views
from ..utils.config import EvalSettings, RenderSettings
from ..utils.errors import BundleError, ShapeMismatchError
from ..utils.logger import get_logger
from .pointcloud import recon_report

logger = get_logger(__name__)


@dataclass
class Prediction:
    """What the assemble command leaves in its output directory."""

    scene: SceneDescriptor
    topk: Optional[np.ndarray] = None
    instance_map: Optional[np.ndarray] = None
    gaussians: dict[int, GaussianSet] = field(default_factory=dict)

    @classmethod
    def empty(cls, scene: SceneDescriptor) -> "Prediction":
        return cls(scene=scene)


@dataclass
class ObjectReport:
    gt_id: int
    label_name: str
    pred_id: Optional[int] = None
    mask_iou: float = 0.0
    rotation_error_deg: Optional[float] = None
    translation_error: Optional[float] = None
    chamfer: Optional[float] = None
    f1: float = 0.0
    psnr: Optional[float] = None


@dataclass
class EvalReport:
    depth: Optional[dict] = None
    segmentation: Optional[dict] = None
    pose: Optional[dict] = None
    objects: list[ObjectReport] = field(default_factory=list)
    unmatched_gt: list[int] = field(default_factory=list)
    unmatched_pred: list[int] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _finite(asdict(self))


def _finite(value):
    """JSON has no infinity; replace non-finite floats with None."""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def read_prediction(scene_dir: str | Path) -> Prediction:
    scene_dir = Path(scene_dir)
    scene = read_scene(scene_dir)
    topk = np.load(scene_dir / "topk.npy", allow_pickle=False) if (scene_dir / "topk.npy").exists() else None
    instance_map = None
    if (scene_dir / "instances.npy").exists():
        instance_map = np.load(scene_dir / "instances.npy", allow_pickle=False)
    gaussians = {}
    for inst in scene.instances:
        if inst.ply:
            gaussians[inst.instance_id] = import_gaussians_ply(require_file(scene_dir, inst.ply))
    logger.info("[EVAL] Loaded prediction with %d instances from %s", len(scene.instances), scene_dir)
    return Prediction(scene=scene, topk=topk, instance_map=instance_map, gaussians=gaussians)


def match_instances(
    pred_map: np.ndarray,
    pred_ids: list[int],
    gt: GroundTruth,
    min_iou: float = 0.5,
) -> tuple[dict[int, tuple[int, float]], np.ndarray]:
    """
    Hungarian assignment on mask IoU. Returns {gt_id: (pred_id, iou)} for
    pairs at or above `min_iou`, and the full IoU matrix (gt x pred).
    """
    gt_ids = [inst.instance_id for inst in gt.instances]
    iou = np.zeros((len(gt_ids), len(pred_ids)))
    if pred_map.shape != gt.mask.shape:
        raise ShapeMismatchError(f"instance map {pred_map.shape} vs gt mask {gt.mask.shape}")
    for i, g in enumerate(gt_ids):
        gm = gt.mask == g
        for j, p in enumerate(pred_ids):
            pm = pred_map == p
            union = np.count_nonzero(gm | pm)
            iou[i, j] = np.count_nonzero(gm & pm) / union if union else 0.0
    matches: dict[int, tuple[int, float]] = {}
    if iou.size:
        rows, cols = linear_sum_assignment(-iou)
        for r, c in zip(rows, cols):
            if iou[r, c] >= min_iou:
                matches[gt_ids[r]] = (pred_ids[c], float(iou[r, c]))
    return matches, iou


def _canonical_psnr(g: GaussianSet, gt_inst, settings: EvalSettings, render: Optional[RenderSettings], threads: int) -> float:
    views = canonical_views(settings.psnr_views, resolution=settings.psnr_resolution)
    targets = views.targets()
    truth = canonical_gt_renders(primitive_from_gt(gt_inst), targets)
    renders = render_views(g, targets, render, threads)
    return float(np.mean([psnr(r, t) for r, t in zip(renders, truth)]))


def evaluate_scene(
    maps: DenseMaps,
    gt: GroundTruth,
    prediction: Optional[Prediction] = None,
    settings: Optional[EvalSettings] = None,
    render_settings: Optional[RenderSettings] = None,
    threads: int = 1,
    use_mask: bool = True,
) -> EvalReport:
    """
    Full report: depth on the bundle, segmentation from the stored top-k
    labels, instance matching, poses and per-object canonical geometry.
    Ground-truth objects with no matching prediction score zero. Depth is
    scored on ground-truth foreground only when `use_mask` is set.
    """
    settings = settings or EvalSettings()
    report = EvalReport()

    if gt.depth is not None:
        if gt.depth.shape != (maps.height, maps.width):
            raise ShapeMismatchError(f"gt depth {gt.depth.shape} vs bundle {maps.height}x{maps.width}")
        valid = depth_eval_mask(gt.depth, gt.mask > 0, use_mask)
        if valid.any():
            report.depth = eval_depth(maps.metric_depth(), gt.depth, valid).to_dict()
        else:
            logger.warning("[EVAL] no pixels to score depth on (use_mask=%s)", use_mask)

    labels = gt.label_map()
    if prediction is not None and prediction.topk is not None and np.any(labels != -1):
        report.segmentation = eval_segmentation(prediction.topk, labels).to_dict()

    pred_instances = {inst.instance_id: inst for inst in prediction.scene.instances} if prediction else {}
    if prediction is not None and prediction.instance_map is not None:
        matches, _ = match_instances(prediction.instance_map, sorted(pred_instances), gt, settings.match_iou)
    else:
        if prediction is not None and pred_instances:
            raise BundleError("prediction has instances but no instances.npy to match them against")
        matches = {}

    poses = []
    for inst in gt.instances:
        entry = ObjectReport(gt_id=inst.instance_id, label_name=inst.label_name)
        match = matches.get(inst.instance_id)
        if match is None:
            report.unmatched_gt.append(inst.instance_id)
            logger.warning("[EVAL] ground-truth instance %d (%s) has no match", inst.instance_id, inst.label_name)
            poses.append(None)
            report.objects.append(entry)
            continue

        pred_id, iou = match
        pose = pred_instances[pred_id].sim3
        poses.append(pose)
        entry.pred_id = pred_id
        entry.mask_iou = iou
        entry.rotation_error_deg = rotation_error_deg(pose, inst.sim3)
        entry.translation_error = translation_error(pose, inst.sim3)

        g = prediction.gaussians.get(pred_id)
        if g is not None:
            kept = g.filter_by_opacity(settings.min_opacity)
            if len(kept):
                surface = sample_surface_points(inst.shape, settings.surface_samples, seed=inst.instance_id)
                recon = recon_report(kept.means, surface, settings.fscore_threshold, settings.chamfer_squared)
                entry.chamfer = recon.chamfer
                entry.f1 = recon.f1_at_threshold
            if settings.psnr_views > 0:
                entry.psnr = _canonical_psnr(g, inst, settings, render_settings, threads)
        report.objects.append(entry)

    matched_pred = {m[0] for m in matches.values()}
    report.unmatched_pred = [pid for pid in sorted(pred_instances) if pid not in matched_pred]
    if report.unmatched_pred:
        logger.warning("[EVAL] %d predicted instances matched no ground truth", len(report.unmatched_pred))

    if gt.instances:
        report.pose = eval_pose(poses, [inst.sim3 for inst in gt.instances]).to_dict()

    chamfers = [o.chamfer for o in report.objects if o.chamfer is not None]
    report.summary = {
        "gt_instances": len(gt.instances),
        "pred_instances": len(pred_instances),
        "matched": len(matches),
        "instance_recall": 100.0 * len(matches) / len(gt.instances) if gt.instances else 100.0,
        "mean_chamfer": float(np.mean(chamfers)) if chamfers else None,
        "mean_f1": float(np.mean([o.f1 for o in report.objects])) if report.objects else None,
    }
    logger.info(
        "[EVAL] matched %d/%d instances, mean F1 %s",
        len(matches), len(gt.instances), report.summary["mean_f1"],
    )
    return report


def report_table(report: EvalReport | Mapping) -> str:
    """Aligned text rendering of a report: one metrics table and one row per object."""
    data = report.to_dict() if isinstance(report, EvalReport) else dict(report)
    rows = []
    for section in ("depth", "segmentation", "pose", "summary"):
        for metric, value in (data.get(section) or {}).items():
            rows.append({"section": section, "metric": metric, "value": value})
    parts = []
    if rows:
        parts.append(pd.DataFrame(rows).to_string(index=False))
    if data.get("objects"):
        parts.append(pd.DataFrame(data["objects"]).to_string(index=False, float_format=lambda x: f"{x:.4f}"))
    return "\n\n".join(parts)
