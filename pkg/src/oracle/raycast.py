# src/oracle/raycast.py
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..geometry.camera import pixel_rays
from ..mapio.bundle import COLOR, GAUSS_PARAMS, LOG_SCALE, OFFSET, OPACITY_LOGIT, QUAT, DenseMaps, GroundTruth, GtInstance
from ..utils.config import OracleSettings
from ..utils.helpers import named_rng
from ..utils.logger import get_logger
from .scene import SceneOracle, first_hits

logger = get_logger(__name__)

ORACLE_K = 2
OPACITY_LOGIT_VALUE = 4.0
BACKGROUND_COLOR = 0.5


@dataclass(frozen=True, eq=False)
class OracleOutput:
    maps: DenseMaps
    ground_truth: GroundTruth
    exit_depth: np.ndarray


def _background_depth(rays: np.ndarray, ground_height: float, wall_depth: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        ground = np.where(rays[..., 1] > 0, ground_height / rays[..., 1], np.inf)
    return np.minimum(ground, wall_depth)


def _rotate_embeddings(e: np.ndarray, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate each unit row by `angle` toward a random orthogonal direction."""
    u = rng.standard_normal(e.shape)
    u -= np.sum(u * e, axis=-1, keepdims=True) * e
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    return math.cos(angle) * e + math.sin(angle) * u


def raycast_maps(scene: SceneOracle, settings: Optional[OracleSettings] = None, provenance: Optional[dict] = None) -> OracleOutput:
    """
    Perfect dense maps for the scene: first-hit depth, NOCS, class
    embeddings and k=2 Gaussians per pixel (the surface point and the point
    where the pixel ray leaves the object), then the configured corruption.
    """
    settings = settings or OracleSettings()
    K = scene.camera
    rays = pixel_rays(K)
    height, width = K.height, K.width

    owner, t_in, t_out = first_hits(scene.objects, rays)
    fg = owner >= 0
    depth = np.where(fg, t_in, _background_depth(rays, scene.ground_height, scene.wall_depth))
    exit_depth = np.where(fg, t_out, np.inf)

    mask = np.zeros((height, width), dtype=np.uint16)
    nocs = np.zeros((height, width, 3))
    exit_nocs = np.zeros((height, width, 3))
    embeddings = np.broadcast_to(scene.class_embeddings[0], (height, width, scene.class_embeddings.shape[1])).copy()
    gauss = np.zeros((height, width, ORACLE_K, GAUSS_PARAMS))
    gauss[..., QUAT] = (1.0, 0.0, 0.0, 0.0)
    gauss[..., OPACITY_LOGIT] = OPACITY_LOGIT_VALUE
    gauss[..., COLOR] = BACKGROUND_COLOR

    footprint = depth / K.f_w
    gauss[..., LOG_SCALE] = np.log(0.5 * footprint)[..., None, None]

    for i, obj in enumerate(scene.objects):
        sel = owner == i
        if not sel.any():
            continue
        origins, dirs = obj.camera_rays_to_canonical(rays[sel])
        surface = np.clip(origins + t_in[sel, None] * dirs, 0.0, 1.0)
        leaving = np.clip(origins + t_out[sel, None] * dirs, 0.0, 1.0)
        mask[sel] = obj.instance_id
        nocs[sel] = surface
        exit_nocs[sel] = leaving
        embeddings[sel] = scene.class_embeddings[obj.category]

        params = gauss[sel]
        params[:, 1, OFFSET] = (t_out[sel] - t_in[sel])[:, None] * rays[sel]
        # shape parameters live in canonical units
        params[:, 0, LOG_SCALE] = np.log(0.5 * footprint[sel] / obj.pose.scale)[:, None]
        params[:, 1, LOG_SCALE] = np.log(0.5 * (t_out[sel] / K.f_w) / obj.pose.scale)[:, None]
        params[:, 0, COLOR] = obj.color_at(surface)
        params[:, 1, COLOR] = obj.color_at(leaving)
        gauss[sel] = params

    clean_depth = depth.copy()
    depth, nocs, embeddings = _corrupt(scene, settings, fg, depth, nocs, embeddings)

    maps = DenseMaps(
        depth=depth,
        embeddings=embeddings,
        nocs=nocs,
        gauss_params=gauss,
        fov=scene.fov,
        vocab=scene.class_embeddings.copy(),
        vocab_names=list(scene.vocab_names),
        depth_kind="metric",
        provenance=dict(provenance or {}),
    )
    instances = [
        GtInstance(
            instance_id=obj.instance_id,
            label_id=obj.category,
            label_name=obj.label_name,
            shape=obj.shape,
            sim3=obj.pose,
            albedo=[list(c) for c in obj.albedo],
        )
        for obj in scene.objects
    ]
    gt = GroundTruth(mask=mask, depth=clean_depth, instances=instances, fov=scene.fov)
    logger.info(
        "[ORACLE] raycast %dx%d: %d foreground pixels, %d objects", width, height, int(fg.sum()), len(scene.objects)
    )
    return OracleOutput(maps=maps, ground_truth=gt, exit_depth=exit_depth)


def _corrupt(
    scene: SceneOracle,
    settings: OracleSettings,
    fg: np.ndarray,
    depth: np.ndarray,
    nocs: np.ndarray,
    embeddings: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if settings.noise_depth > 0:
        rng = named_rng(scene.seed, "oracle-noise-depth")
        depth = np.maximum(depth * (1.0 + settings.noise_depth * rng.standard_normal(depth.shape)), 1e-3)

    if settings.noise_nocs > 0:
        rng = named_rng(scene.seed, "oracle-noise-nocs")
        noisy = np.clip(nocs + settings.noise_nocs * rng.standard_normal(nocs.shape), 0.0, 1.0)
        nocs = np.where(fg[..., None], noisy, nocs)

    if settings.noise_embedding_angle > 0:
        rng = named_rng(scene.seed, "oracle-noise-embedding")
        embeddings = _rotate_embeddings(embeddings, settings.noise_embedding_angle, rng)

    if settings.label_flip_rate > 0:
        present = {0} | {obj.category for obj in scene.objects}
        absent = np.array([c for c in range(len(scene.vocab_names)) if c not in present])
        if len(absent) == 0:
            logger.warning("[ORACLE] label flips skipped: every category appears in the scene")
        else:
            rng = named_rng(scene.seed, "oracle-label-flip")
            flip = fg & (rng.random(fg.shape) < settings.label_flip_rate)
            distractors = scene.class_embeddings[rng.choice(absent, size=int(flip.sum()))]
            beta = settings.flip_mix
            mixed = (1.0 - beta) * embeddings[flip] + beta * distractors
            embeddings = embeddings.copy()
            embeddings[flip] = mixed / np.linalg.norm(mixed, axis=-1, keepdims=True)
            logger.info("[ORACLE] flipped %d of %d foreground embeddings", int(flip.sum()), int(fg.sum()))
    return depth, nocs, embeddings
