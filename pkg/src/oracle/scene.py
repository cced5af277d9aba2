# src/oracle/scene.py
"""
Analytic scenes of unit-cube primitives standing on a ground plane.

Camera frame: camera at the origin looking down +z, y pointing down. The
ground is the plane y = ground_height and a wall at z = wall_depth closes
the view, so every pixel has finite depth. Each object's canonical frame
has +y up; its pose maps canonical -> camera as

    R = Ry(yaw) diag(1, -1, -1),   t = base - s R (0.5, 0, 0.5)

so the bottom face of the canonical cube rests on the ground at `base`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..geometry.camera import CameraIntrinsics, intrinsics_from_fov, pixel_rays
from ..geometry.sim3 import Sim3
from ..utils.config import OracleSettings
from ..utils.errors import DomainError, PlacementError
from ..utils.helpers import named_rng
from ..utils.logger import get_logger

logger = get_logger(__name__)

SHAPES = ("box", "sphere", "cylinder")
BACKGROUND_NAME = "background"
CHECKER_CELLS = 4

_EPS = 1e-12
_GROUND_HEIGHT = 0.5
_WALL_DEPTH = 6.0
_DEPTH_RANGE = (1.4, 2.6)
_SCALE_RANGE = (0.3, 0.5)
_GAP = 0.03
_RETRIES = 200
_MIN_VISIBLE_FRACTION = 0.6


def intersect_unit_shape(shape: str, origins: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Ray / primitive intersection in the canonical frame. Returns (t_in,
    t_out, hit) per ray for o + t d; hit requires t_out > t_in and t_in > 0.
    """
    o = np.asarray(origins, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    if shape == "box":
        t_in, t_out = _slab(o, d, axes=(0, 1, 2))
    elif shape == "sphere":
        oc = o - 0.5
        a = np.einsum("...i,...i->...", d, d)
        b = np.einsum("...i,...i->...", oc, d)
        c = np.einsum("...i,...i->...", oc, oc) - 0.25
        t_in, t_out = _quadratic(a, b, c)
    elif shape == "cylinder":
        ox, oz = o[..., 0] - 0.5, o[..., 2] - 0.5
        dx, dz = d[..., 0], d[..., 2]
        t_in, t_out = _quadratic(dx * dx + dz * dz, ox * dx + oz * dz, ox * ox + oz * oz - 0.25)
        y_in, y_out = _slab(o, d, axes=(1,))
        t_in, t_out = np.maximum(t_in, y_in), np.minimum(t_out, y_out)
    else:
        raise DomainError(f"unknown primitive shape {shape!r}")
    hit = (t_out > t_in) & (t_in > 0)
    return t_in, t_out, hit


def _slab(o: np.ndarray, d: np.ndarray, axes: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    t_in = np.full(o.shape[:-1], -np.inf)
    t_out = np.full(o.shape[:-1], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in axes:
            oa, da = o[..., axis], d[..., axis]
            parallel = np.abs(da) < _EPS
            t0 = (0.0 - oa) / np.where(parallel, 1.0, da)
            t1 = (1.0 - oa) / np.where(parallel, 1.0, da)
            lo, hi = np.minimum(t0, t1), np.maximum(t0, t1)
            inside = (oa >= 0.0) & (oa <= 1.0)
            lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
            hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
            t_in, t_out = np.maximum(t_in, lo), np.minimum(t_out, hi)
    return t_in, t_out


def _quadratic(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Roots of a t^2 + 2 b t + c = 0 as (smaller, larger); (inf, -inf) when none."""
    disc = b * b - a * c
    ok = (disc >= 0) & (a > _EPS)
    root = np.sqrt(np.where(ok, disc, 0.0))
    safe_a = np.where(ok, a, 1.0)
    return np.where(ok, (-b - root) / safe_a, np.inf), np.where(ok, (-b + root) / safe_a, -np.inf)


def unit_shape_contains(shape: str, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    in_box = np.all((p >= -tol) & (p <= 1 + tol), axis=-1)
    if shape == "box":
        return in_box
    if shape == "sphere":
        return np.sum((p - 0.5) ** 2, axis=-1) <= 0.25 + tol
    if shape == "cylinder":
        return in_box & ((p[..., 0] - 0.5) ** 2 + (p[..., 2] - 0.5) ** 2 <= 0.25 + tol)
    raise DomainError(f"unknown primitive shape {shape!r}")


@dataclass(frozen=True, eq=False)
class PrimitiveObject:
    instance_id: int
    shape: str
    category: int
    label_name: str
    pose: Sim3
    albedo: tuple[tuple[float, float, float], tuple[float, float, float]]

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise DomainError(f"unknown primitive shape {self.shape!r}")

    def color_at(self, nocs: np.ndarray) -> np.ndarray:
        """Two-color checker on the canonical coordinates."""
        cells = np.floor(np.clip(nocs, 0.0, 1.0 - 1e-12) * CHECKER_CELLS).astype(np.int64)
        parity = cells.sum(axis=-1) % 2
        colors = np.asarray(self.albedo, dtype=np.float64)
        return colors[parity]

    def footprint_radius(self) -> float:
        return self.pose.scale * math.sqrt(0.5)

    def corners(self) -> np.ndarray:
        grid = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.float64)
        return self.pose.apply(grid)

    def camera_rays_to_canonical(self, rays: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Camera rays t * r (camera at origin) expressed in the canonical frame; t is unchanged."""
        inverse = self.pose.inverse()
        origin = inverse.translation
        dirs = inverse.scale * (rays @ inverse.rotation.T)
        return np.broadcast_to(origin, rays.shape), dirs


@dataclass(frozen=True, eq=False)
class SceneOracle:
    objects: list[PrimitiveObject]
    camera: CameraIntrinsics
    class_embeddings: np.ndarray
    vocab_names: list[str]
    seed: int
    ground_height: float = _GROUND_HEIGHT
    wall_depth: float = _WALL_DEPTH

    @property
    def fov(self) -> tuple[float, float]:
        K = self.camera
        return (2.0 * math.atan(K.width / (2.0 * K.f_w)), 2.0 * math.atan(K.height / (2.0 * K.f_h)))

    def object_by_id(self, instance_id: int) -> Optional[PrimitiveObject]:
        return next((o for o in self.objects if o.instance_id == instance_id), None)


def object_pose(base: np.ndarray, yaw: float, scale: float) -> Sim3:
    c, s = math.cos(yaw), math.sin(yaw)
    Ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    R = Ry @ np.diag([1.0, -1.0, -1.0])
    t = np.asarray(base, dtype=np.float64) - scale * R @ np.array([0.5, 0.0, 0.5])
    return Sim3.from_matrix(scale, R, t)


def category_names(vocab_size: int) -> list[str]:
    """Row 0 is background; category c has shape SHAPES[(c - 1) % 3]."""
    return [BACKGROUND_NAME] + [f"{SHAPES[(c - 1) % len(SHAPES)]}-{c:02d}" for c in range(1, vocab_size)]


def category_shape(category: int) -> str:
    return SHAPES[(category - 1) % len(SHAPES)]


def class_embeddings(seed: int, vocab_size: int, dim: int) -> np.ndarray:
    """Orthonormal rows standing in for text embeddings."""
    if dim < vocab_size:
        raise DomainError(f"embedding_dim {dim} must be >= vocab_size {vocab_size} for orthonormal classes")
    rng = named_rng(seed, "oracle-classes")
    q, r = np.linalg.qr(rng.standard_normal((dim, vocab_size)))
    q = q * np.sign(np.diag(r))
    return q.T.copy()


def first_hits(objects: list[PrimitiveObject], rays: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per ray: index of the nearest object (-1 none), entry depth and exit depth."""
    shape = rays.shape[:-1]
    owner = np.full(shape, -1, dtype=np.int64)
    t_near = np.full(shape, np.inf)
    t_far = np.full(shape, np.inf)
    for i, obj in enumerate(objects):
        origins, dirs = obj.camera_rays_to_canonical(rays)
        t_in, t_out, hit = intersect_unit_shape(obj.shape, origins, dirs)
        closer = hit & (t_in < t_near)
        owner[closer] = i
        t_near[closer] = t_in[closer]
        t_far[closer] = t_out[closer]
    return owner, t_near, t_far


def _visible_counts(objects: list[PrimitiveObject], rays: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    owner, _, _ = first_hits(objects, rays)
    visible = np.array([np.count_nonzero(owner == i) for i in range(len(objects))])
    alone = np.array([np.count_nonzero(first_hits([o], rays)[0] == 0) for o in objects])
    return visible, alone


def _in_frustum(obj: PrimitiveObject, K: CameraIntrinsics) -> bool:
    corners = obj.corners()
    if np.any(corners[:, 2] <= 0.1):
        return False
    u = K.f_w * corners[:, 0] / corners[:, 2] + K.c_x
    v = K.f_h * corners[:, 1] / corners[:, 2] + K.c_y
    return bool(np.all((u >= 1) & (u <= K.width - 2) & (v >= 1) & (v <= K.height - 2)))


def generate_scene(
    count: int,
    seed: int,
    fov: Optional[tuple[float, float]] = None,
    resolution: Optional[tuple[int, int]] = None,
    settings: Optional[OracleSettings] = None,
) -> SceneOracle:
    """
    Place `count` non-intersecting primitives on the ground inside the view.
    Categories are distinct while the vocabulary allows it. Every object
    keeps most of its silhouette visible.
    """
    settings = settings or OracleSettings()
    if count < 0:
        raise DomainError(f"object count must be >= 0, got {count}")
    width, height = resolution or (settings.width, settings.height)
    if fov is None:
        theta_w = math.radians(settings.fov_deg)
        theta_h = 2.0 * math.atan(math.tan(theta_w / 2.0) * height / width)
        fov = (theta_w, theta_h)
    K = intrinsics_from_fov(fov[0], fov[1], width, height)
    rays = pixel_rays(K)
    embeddings = class_embeddings(seed, settings.vocab_size, settings.embedding_dim)
    names = category_names(settings.vocab_size)

    rng = named_rng(seed, "oracle-placement")
    classes = np.arange(1, settings.vocab_size)
    replace = count > len(classes)
    categories = rng.choice(classes, size=count, replace=replace) if count else np.zeros(0, dtype=np.int64)

    objects: list[PrimitiveObject] = []
    for i in range(count):
        category = int(categories[i])
        for _attempt in range(_RETRIES):
            scale = rng.uniform(*_SCALE_RANGE)
            z = rng.uniform(*_DEPTH_RANGE)
            half_width = z * math.tan(fov[0] / 2.0)
            x = rng.uniform(-half_width, half_width)
            yaw = rng.uniform(0.0, 2.0 * math.pi)
            albedo = tuple(tuple(float(c) for c in rng.uniform(0.15, 0.95, size=3)) for _ in range(2))
            candidate = PrimitiveObject(
                instance_id=i + 1,
                shape=category_shape(category),
                category=category,
                label_name=names[category],
                pose=object_pose(np.array([x, _GROUND_HEIGHT, z]), yaw, scale),
                albedo=albedo,
            )
            if not _in_frustum(candidate, K):
                continue
            base = np.array([x, z])
            if any(
                np.linalg.norm(base - o.pose.apply(np.array([0.5, 0.0, 0.5]))[[0, 2]])
                < candidate.footprint_radius() + o.footprint_radius() + _GAP
                for o in objects
            ):
                continue
            trial = objects + [candidate]
            visible, alone = _visible_counts(trial, rays)
            if np.all(visible >= np.maximum(settings.min_visible_pixels, _MIN_VISIBLE_FRACTION * alone)):
                objects = trial
                break
        else:
            raise PlacementError(f"could not place object {i + 1} of {count} after {_RETRIES} attempts (seed {seed})")

    logger.info("[ORACLE] scene seed=%d: %d objects at %dx%d", seed, len(objects), width, height)
    return SceneOracle(objects=objects, camera=K, class_embeddings=embeddings, vocab_names=names, seed=seed)
