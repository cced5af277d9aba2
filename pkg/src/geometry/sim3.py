# src/geometry/sim3.py
"""
Similarity transforms x -> s R x + t with R stored as a unit quaternion
[w, x, y, z]. Quaternions are kept with w >= 0 so equal rotations compare
equal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from ..utils.errors import DomainError


def canonical_quat(q: np.ndarray) -> np.ndarray:
    """Normalize and flip sign so that w >= 0 (first nonzero component positive on ties)."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise DomainError("quaternion must be finite and nonzero")
    q = q / norm
    sign = np.where(q[..., :1] < 0, -1.0, 1.0)
    return q * sign


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) from quaternions (..., 4); input is normalized first."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    xyzw = Rotation.from_matrix(np.asarray(R, dtype=np.float64)).as_quat()
    return canonical_quat(np.concatenate([xyzw[..., 3:], xyzw[..., :3]], axis=-1))


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b (rotation b first, then a)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


@dataclass(frozen=True, eq=False)
class Sim3:
    scale: float = 1.0
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        if not math.isfinite(self.scale) or self.scale <= 0:
            raise DomainError(f"Sim3 scale must be positive and finite, got {self.scale}")
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise DomainError("Sim3 translation must be finite")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "quat", canonical_quat(np.asarray(self.quat, dtype=np.float64).reshape(4)))
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_matrix(cls, scale: float, rotation: np.ndarray, translation: np.ndarray) -> "Sim3":
        return cls(scale=scale, quat=matrix_to_quat(rotation), translation=translation)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.scale * self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, x: np.ndarray) -> np.ndarray:
        return sim3_apply(self, x)

    def inverse(self) -> "Sim3":
        return sim3_inverse(self)

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "quat": [float(v) for v in self.quat],
            "t": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Sim3":
        return cls(scale=float(data["scale"]), quat=np.asarray(data["quat"]), translation=np.asarray(data["t"]))

    def allclose(self, other: "Sim3", atol: float = 1e-9) -> bool:
        return (
            abs(self.scale - other.scale) <= atol
            and np.allclose(self.rotation, other.rotation, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
        )

    def __repr__(self) -> str:
        return f"Sim3(scale={self.scale:.6g}, quat={np.round(self.quat, 6).tolist()}, t={np.round(self.translation, 6).tolist()})"


def sim3_identity() -> Sim3:
    return Sim3()


def sim3_apply(transform: Sim3, x: np.ndarray) -> np.ndarray:
    """s R x + t for points (..., 3)."""
    x = np.asarray(x, dtype=np.float64)
    return transform.scale * (x @ transform.rotation.T) + transform.translation


def sim3_inverse(transform: Sim3) -> Sim3:
    """x -> s^-1 R^T (x - t)."""
    R_t = transform.rotation.T
    inv_scale = 1.0 / transform.scale
    return Sim3(
        scale=inv_scale,
        quat=quat_conjugate(transform.quat),
        translation=-inv_scale * (R_t @ transform.translation),
    )


def sim3_compose(a: Sim3, b: Sim3) -> Sim3:
    """a o b: apply b first, then a."""
    return Sim3(
        scale=a.scale * b.scale,
        quat=quat_multiply(a.quat, b.quat),
        translation=a.scale * (a.rotation @ b.translation) + a.translation,
    )


def look_at(eye: np.ndarray, target: np.ndarray, up: np.ndarray = (0.0, 1.0, 0.0)) -> Sim3:
    """
    World->camera rigid transform for a camera at `eye` looking at `target`.
    Image +y points along -up; when the view direction is parallel to `up`
    the world z axis stands in for it.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    z = target - eye
    norm = np.linalg.norm(z)
    if norm == 0:
        raise DomainError("look_at: eye and target coincide")
    z = z / norm
    down = -np.asarray(up, dtype=np.float64)
    x = np.cross(down, z)
    if np.linalg.norm(x) < 1e-9:
        down = np.array([0.0, 0.0, -1.0]) if abs(z[2]) < 0.9 else np.array([0.0, -1.0, 0.0])
        x = np.cross(down, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return Sim3.from_matrix(1.0, R, -R @ eye)
