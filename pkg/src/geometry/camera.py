# src/geometry/camera.py
"""
Pinhole camera model.

Convention: +z forward, +x right, +y down; pixel (0, 0) is the top-left pixel
and pixel centers sit at integer coordinates. The oracle ray caster and the
splat rasterizer both rely on this.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..utils.errors import DomainError


@dataclass(frozen=True)
class CameraIntrinsics:
    f_w: float
    f_h: float
    c_x: float
    c_y: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.f_w > 0 and self.f_h > 0):
            raise DomainError(f"focal lengths must be positive, got f_w={self.f_w}, f_h={self.f_h}")
        if self.width <= 0 or self.height <= 0:
            raise DomainError(f"image size must be positive, got {self.width}x{self.height}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.f_w, 0.0, self.c_x], [0.0, self.f_h, self.c_y], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )

    def to_dict(self) -> dict:
        return {
            "f_w": self.f_w,
            "f_h": self.f_h,
            "c_x": self.c_x,
            "c_y": self.c_y,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        return cls(
            f_w=float(data["f_w"]),
            f_h=float(data["f_h"]),
            c_x=float(data["c_x"]),
            c_y=float(data["c_y"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )


def _check_angle(name: str, theta: float) -> None:
    if not math.isfinite(theta) or not (0.0 < theta < math.pi):
        raise DomainError(f"{name} must be a finite angle in (0, pi), got {theta}")


def intrinsics_from_fov(theta_w: float, theta_h: float, width: int, height: int) -> CameraIntrinsics:
    """K from horizontal/vertical field of view, principal point (W/2, H/2)."""
    _check_angle("theta_w", theta_w)
    _check_angle("theta_h", theta_h)
    f_w = width / (2.0 * math.tan(theta_w / 2.0))
    f_h = height / (2.0 * math.tan(theta_h / 2.0))
    return CameraIntrinsics(f_w=f_w, f_h=f_h, c_x=width / 2.0, c_y=height / 2.0, width=width, height=height)


def fov_from_intrinsics(K: CameraIntrinsics) -> tuple[float, float]:
    return (
        2.0 * math.atan(K.width / (2.0 * K.f_w)),
        2.0 * math.atan(K.height / (2.0 * K.f_h)),
    )


def backproject(u: float, v: float, depth: float, K: CameraIntrinsics) -> np.ndarray:
    """p = d * K^-1 (u, v, 1)^T."""
    if not (depth > 0) or not math.isfinite(depth):
        raise DomainError(f"depth must be positive and finite, got {depth}")
    return np.array(
        [depth * (u - K.c_x) / K.f_w, depth * (v - K.c_y) / K.f_h, depth],
        dtype=np.float64,
    )


def project(p: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates (u, v) of camera-frame points (..., 3)."""
    p = np.asarray(p, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise DomainError("cannot project points with z <= 0")
    u = K.f_w * p[..., 0] / z + K.c_x
    v = K.f_h * p[..., 1] / z + K.c_y
    return np.stack([u, v], axis=-1)


def pixel_rays(K: CameraIntrinsics) -> np.ndarray:
    """
    H x W x 3 array of K^-1 (u, v, 1): rays whose z component is 1, so the
    ray parameter equals depth.
    """
    v, u = np.meshgrid(
        np.arange(K.height, dtype=np.float64),
        np.arange(K.width, dtype=np.float64),
        indexing="ij",
    )
    return np.stack([(u - K.c_x) / K.f_w, (v - K.c_y) / K.f_h, np.ones_like(u)], axis=-1)


def backproject_map(depth: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (K.height, K.width):
        raise DomainError(f"depth map shape {depth.shape} does not match camera {K.height}x{K.width}")
    return pixel_rays(K) * depth[..., None]
