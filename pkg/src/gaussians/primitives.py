# src/gaussians/primitives.py
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Literal, Optional, Sequence

import numpy as np
from scipy.special import expit

from ..geometry.camera import CameraIntrinsics, pixel_rays
from ..geometry.sim3 import quat_to_matrix
from ..utils.errors import DomainError, ShapeMismatchError

if TYPE_CHECKING:
    from ..mapio.bundle import DenseMaps

Frame = Literal["camera", "canonical"]
OffsetMode = Literal["off-ray", "along-ray"]

# keeps opacities inside the open interval so their logits stay finite
_OPACITY_EPS = 1e-12


@dataclass(frozen=True)
class GaussianPrimitive:
    mean: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    color: np.ndarray

    @property
    def covariance(self) -> np.ndarray:
        R = quat_to_matrix(self.rotation)
        return R @ np.diag(np.exp(2.0 * self.log_scale)) @ R.T


@dataclass(frozen=True, eq=False)
class GaussianSet:
    """
    Structure-of-arrays Gaussian set in one frame. `source_pixels` holds
    (row, col, i) for Gaussians materialized from a dense map.
    """

    means: np.ndarray
    log_scales: np.ndarray
    quats: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray
    frame: Frame = "camera"
    source_pixels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        n = np.asarray(self.means).reshape(-1, 3).shape[0]
        fields = {
            "means": (3,),
            "log_scales": (3,),
            "quats": (4,),
            "opacities": (),
            "colors": (3,),
        }
        for name, tail in fields.items():
            array = np.array(getattr(self, name), dtype=np.float64).reshape((n,) + tail)
            if not np.all(np.isfinite(array)):
                raise DomainError(f"gaussian {name} must be finite")
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if np.any((self.opacities <= 0) | (self.opacities >= 1)):
            raise DomainError("gaussian opacities must lie in the open interval (0, 1)")
        if self.frame not in ("camera", "canonical"):
            raise DomainError(f"unknown frame tag {self.frame!r}")
        if self.source_pixels is not None:
            src = np.array(self.source_pixels, dtype=np.int64).reshape(n, 3)
            src.setflags(write=False)
            object.__setattr__(self, "source_pixels", src)

    def __len__(self) -> int:
        return int(self.means.shape[0])

    def __iter__(self) -> Iterator[GaussianPrimitive]:
        for i in range(len(self)):
            yield GaussianPrimitive(
                mean=self.means[i],
                log_scale=self.log_scales[i],
                rotation=self.quats[i],
                opacity=float(self.opacities[i]),
                color=self.colors[i],
            )

    @classmethod
    def empty(cls, frame: Frame = "camera") -> "GaussianSet":
        return cls(
            means=np.zeros((0, 3)),
            log_scales=np.zeros((0, 3)),
            quats=np.zeros((0, 4)),
            opacities=np.zeros(0),
            colors=np.zeros((0, 3)),
            frame=frame,
        )

    @classmethod
    def concat(cls, sets: Sequence["GaussianSet"], frame: Optional[Frame] = None) -> "GaussianSet":
        if not sets:
            return cls.empty(frame or "camera")
        frames = {s.frame for s in sets}
        if len(frames) != 1:
            raise ShapeMismatchError(f"cannot concatenate gaussian sets in frames {sorted(frames)}")
        with_src = all(s.source_pixels is not None for s in sets)
        return cls(
            means=np.concatenate([s.means for s in sets]),
            log_scales=np.concatenate([s.log_scales for s in sets]),
            quats=np.concatenate([s.quats for s in sets]),
            opacities=np.concatenate([s.opacities for s in sets]),
            colors=np.concatenate([s.colors for s in sets]),
            frame=frames.pop(),
            source_pixels=np.concatenate([s.source_pixels for s in sets]) if with_src else None,
        )

    def replace(self, **changes) -> "GaussianSet":
        return dataclasses.replace(self, **changes)

    def subset(self, index) -> "GaussianSet":
        return self.replace(
            means=self.means[index],
            log_scales=self.log_scales[index],
            quats=self.quats[index],
            opacities=self.opacities[index],
            colors=self.colors[index],
            source_pixels=None if self.source_pixels is None else self.source_pixels[index],
        )

    def filter_by_opacity(self, min_opacity: float) -> "GaussianSet":
        return self.subset(self.opacities >= min_opacity)

    def rotations(self) -> np.ndarray:
        return quat_to_matrix(self.quats) if len(self) else np.zeros((0, 3, 3))

    def covariances(self) -> np.ndarray:
        """Sigma = R diag(exp(2 log_scale)) R^T per Gaussian."""
        R = self.rotations()
        return np.einsum("nij,nj,nkj->nik", R, np.exp(2.0 * self.log_scales), R)

    def unit_quats(self) -> np.ndarray:
        return self.quats / np.linalg.norm(self.quats, axis=1, keepdims=True)


def _first_pixel(pixels: np.ndarray, bad: np.ndarray) -> tuple[int, int]:
    row, col = pixels[np.argmax(bad)]
    return int(row), int(col)


def materialize(
    maps: "DenseMaps",
    pixels: np.ndarray,
    K: Optional[CameraIntrinsics] = None,
    offset_mode: OffsetMode = "off-ray",
    k: Optional[int] = None,
) -> GaussianSet:
    """
    Camera-frame Gaussians for the given (row, col) pixels: k per pixel,
    each centred at the back-projected pixel plus its predicted offset.
    `along-ray` keeps only the offset component along the pixel ray.
    `k` keeps the first k of the maps' Gaussians per pixel (all when None).
    """
    from ..mapio.bundle import COLOR, LOG_SCALE, OFFSET, OPACITY_LOGIT, QUAT

    K = K or maps.intrinsics
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    rows, cols = pixels[:, 0], pixels[:, 1]
    if k is None:
        k = maps.k
    elif not 1 <= k <= maps.k:
        raise ShapeMismatchError(f"k={k} Gaussians per pixel requested, the maps carry {maps.k}")
    n = len(pixels)
    if n == 0:
        return GaussianSet.empty("camera")

    depth = maps.metric_depth()[rows, cols]
    bad = ~np.isfinite(depth) | (depth <= 0)
    if bad.any():
        row, col = _first_pixel(pixels, bad)
        raise DomainError(f"invalid depth {depth[np.argmax(bad)]} at pixel (row={row}, col={col})")

    params = np.asarray(maps.gauss_params, dtype=np.float64)[rows, cols, :k]  # (n, k, 14)
    bad = ~np.all(np.isfinite(params), axis=(1, 2))
    if bad.any():
        row, col = _first_pixel(pixels, bad)
        raise DomainError(f"non-finite gaussian parameter at pixel (row={row}, col={col})")

    quats = params[..., QUAT]
    norms = np.linalg.norm(quats, axis=-1, keepdims=True)
    bad = np.any(norms[..., 0] == 0, axis=1)
    if bad.any():
        row, col = _first_pixel(pixels, bad)
        raise DomainError(f"zero rotation quaternion at pixel (row={row}, col={col})")

    rays = pixel_rays(K)[rows, cols]
    offsets = params[..., OFFSET]
    if offset_mode == "along-ray":
        direction = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
        along = np.einsum("nkd,nd->nk", offsets, direction)
        offsets = along[..., None] * direction[:, None, :]
    elif offset_mode != "off-ray":
        raise DomainError(f"unknown offset mode {offset_mode!r}")

    means = (rays * depth[:, None])[:, None, :] + offsets
    opacity = np.clip(expit(params[..., OPACITY_LOGIT]), _OPACITY_EPS, 1.0 - _OPACITY_EPS)
    source = np.concatenate(
        [np.repeat(pixels, k, axis=0), np.tile(np.arange(k), n)[:, None]],
        axis=1,
    )
    return GaussianSet(
        means=means.reshape(n * k, 3),
        log_scales=params[..., LOG_SCALE].reshape(n * k, 3),
        quats=(quats / norms).reshape(n * k, 4),
        opacities=opacity.reshape(n * k),
        colors=np.clip(params[..., COLOR], 0.0, 1.0).reshape(n * k, 3),
        frame="camera",
        source_pixels=source,
    )


def offset_regularizer(offsets: np.ndarray, tau_offset: float = 0.05) -> float:
    """Sum over offsets of max(0, ||offset||_1 - tau_offset)."""
    if tau_offset < 0:
        raise DomainError(f"tau_offset must be >= 0, got {tau_offset}")
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 3)
    return float(np.sum(np.maximum(0.0, np.abs(offsets).sum(axis=1) - tau_offset)))
