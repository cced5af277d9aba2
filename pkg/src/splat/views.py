# src/splat/views.py
"""
Canonical camera rigs around the unit cube. Vertex counts 10 * 4^L + 2
(12, 42, 162, ...) use a level-L subdivided icosahedron; any other count
uses a Fibonacci sphere. Cameras sit at `radius` from the cube center
(0.5, 0.5, 0.5) and look at it with +y as the up reference; the two views
along +-y take +z instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry.camera import CameraIntrinsics, intrinsics_from_fov
from ..geometry.sim3 import Sim3, look_at
from ..utils.errors import DomainError
from .rasterizer import RenderTarget

CUBE_CENTER = np.array([0.5, 0.5, 0.5])
UP = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True, eq=False)
class CanonicalViewSet:
    directions: np.ndarray
    extrinsics: list[Sim3]
    intrinsics: CameraIntrinsics
    radius: float
    center: np.ndarray = field(default_factory=lambda: CUBE_CENTER.copy())

    def __len__(self) -> int:
        return len(self.extrinsics)

    @property
    def eyes(self) -> np.ndarray:
        return self.center + self.radius * self.directions

    def targets(self, background=(1.0, 1.0, 1.0)) -> list[RenderTarget]:
        return [RenderTarget(self.intrinsics, ext, tuple(background)) for ext in self.extrinsics]


def _icosahedron() -> tuple[list[np.ndarray], list[tuple[int, int, int]]]:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts], faces


def icosphere(level: int) -> np.ndarray:
    verts, faces = _icosahedron()
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined
    return np.stack(verts)


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n, dtype=np.float64) + 0.5
    y = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - y * y)
    theta = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(theta), y, r * np.sin(theta)], axis=1)


def _icosphere_level(n: int) -> int | None:
    level = 0
    while 10 * 4**level + 2 <= n:
        if 10 * 4**level + 2 == n:
            return level
        level += 1
    return None


def canonical_views(
    n: int = 42,
    resolution: int = 512,
    radius: float = 2.0,
    fov_deg: float = 40.0,
) -> CanonicalViewSet:
    if n < 4:
        raise DomainError(f"need at least 4 canonical views, got {n}")
    if not radius > 0:
        raise DomainError(f"view radius must be positive, got {radius}")
    level = _icosphere_level(n)
    directions = icosphere(level) if level is not None else fibonacci_sphere(n)
    extrinsics = [look_at(CUBE_CENTER + radius * d, CUBE_CENTER, UP) for d in directions]
    fov = math.radians(fov_deg)
    return CanonicalViewSet(
        directions=directions,
        extrinsics=extrinsics,
        intrinsics=intrinsics_from_fov(fov, fov, resolution, resolution),
        radius=float(radius),
    )
