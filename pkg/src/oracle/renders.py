# src/oracle/renders.py
from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..geometry.camera import pixel_rays
from ..mapio.bundle import GtInstance, write_bundle, write_ground_truth
from ..splat.rasterizer import RenderTarget
from ..utils.errors import DomainError
from ..utils.helpers import named_rng
from ..utils.logger import get_logger
from .raycast import OracleOutput
from .scene import SHAPES, PrimitiveObject, intersect_unit_shape

logger = get_logger(__name__)

# cylinder side area pi, each cap pi / 4
_CYLINDER_SIDE = 2.0 / 3.0


def primitive_from_gt(inst: GtInstance) -> PrimitiveObject:
    return PrimitiveObject(
        instance_id=inst.instance_id,
        shape=inst.shape,
        category=inst.label_id,
        label_name=inst.label_name,
        pose=inst.sim3,
        albedo=tuple(tuple(float(x) for x in c) for c in inst.albedo),
    )


def canonical_gt_renders(obj: Optional[PrimitiveObject], targets: Sequence[RenderTarget]) -> list[np.ndarray]:
    """
    Ray-traced images of the object's unit shape in its canonical frame,
    one per target. A missing object gives background-only images.
    """
    images = []
    for target in targets:
        K = target.intrinsics
        image = np.broadcast_to(np.asarray(target.background, dtype=np.float64), (K.height, K.width, 3)).copy()
        if obj is not None:
            inverse = target.extrinsic.inverse()
            rays = pixel_rays(K).reshape(-1, 3)
            dirs = inverse.scale * (rays @ inverse.rotation.T)
            origins = np.broadcast_to(inverse.translation, dirs.shape)
            t_in, _, hit = intersect_unit_shape(obj.shape, origins, dirs)
            points = origins[hit] + t_in[hit, None] * dirs[hit]
            flat = image.reshape(-1, 3)
            flat[hit] = obj.color_at(points)
        images.append(image)
    return images


def _box_points(rng: np.random.Generator, n: int) -> np.ndarray:
    face = rng.integers(0, 6, size=n)
    points = rng.random((n, 3))
    axis = face // 2
    points[np.arange(n), axis] = (face % 2).astype(np.float64)
    return points


def _sphere_points(rng: np.random.Generator, n: int) -> np.ndarray:
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return 0.5 + 0.5 * d


def _cylinder_points(rng: np.random.Generator, n: int) -> np.ndarray:
    side = rng.random(n) < _CYLINDER_SIDE
    angle = rng.random(n) * 2.0 * math.pi
    radius = np.where(side, 0.5, 0.5 * np.sqrt(rng.random(n)))
    y = np.where(side, rng.random(n), rng.integers(0, 2, size=n).astype(np.float64))
    return np.stack([0.5 + radius * np.cos(angle), y, 0.5 + radius * np.sin(angle)], axis=1)


_SAMPLERS = {"box": _box_points, "sphere": _sphere_points, "cylinder": _cylinder_points}


def sample_surface_points(shape: str | PrimitiveObject, n: int, seed: int = 0) -> np.ndarray:
    """Area-uniform samples on the surface of a unit-cube primitive, canonical frame."""
    if isinstance(shape, PrimitiveObject):
        shape = shape.shape
    if shape not in SHAPES:
        raise DomainError(f"unknown primitive shape {shape!r}")
    if n < 1:
        raise DomainError(f"need at least one surface sample, got {n}")
    return _SAMPLERS[shape](named_rng(seed, "surface-samples", SHAPES.index(shape)), n)


def write_oracle(output: OracleOutput, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    write_bundle(output.maps, out_dir)
    write_ground_truth(output.ground_truth, out_dir)
    logger.info("[ORACLE] wrote bundle and ground truth (%d objects) to %s", len(output.ground_truth.instances), out_dir)
    return out_dir
