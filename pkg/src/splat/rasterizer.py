# src/splat/rasterizer.py
"""
CPU Gaussian splatting with an exact backward pass.

Forward, per Gaussian: camera point t = W mu + t_w, EWA screen covariance
Sigma' = J W Sigma W^T J^T + lowpass * I, conic K = Sigma'^-1. Per pixel,
Gaussians are composited front to back in order of camera z:

    alpha_i = min(alpha_max, o_i * exp(-1/2 d^T K_i d))
    C       = sum_i c_i alpha_i T_i + bg * T_final,   T_i = prod_{j<i} (1 - alpha_j)

The image is processed in square pixel tiles. A tile only sees Gaussians
whose `cull_sigma` ellipse bound overlaps it (all Gaussians when
cull_sigma is None). Tiles may run on a thread pool; results are assembled
and gradient partials summed in fixed tile order, so output does not depend
on the thread count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from PIL import Image

from ..geometry.camera import CameraIntrinsics
from ..geometry.sim3 import Sim3, quat_to_matrix
from ..gaussians.primitives import GaussianSet
from ..utils.config import RenderSettings
from ..utils.errors import DomainError, ShapeMismatchError
from ..utils.logger import get_logger

logger = get_logger(__name__)

_TINY = 1e-300


@dataclass(frozen=True, eq=False)
class RenderTarget:
    """Camera to render into; `image` optionally carries a reference image."""

    intrinsics: CameraIntrinsics
    extrinsic: Sim3 = Sim3()
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    image: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.intrinsics.height, self.intrinsics.width, 3)


@dataclass(frozen=True, eq=False)
class RenderGrad:
    """Gradients per Gaussian parameter; opacity gradient is w.r.t. the probability."""

    means: np.ndarray
    log_scales: np.ndarray
    quats: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "RenderGrad":
        return cls(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 4)), np.zeros(n), np.zeros((n, 3)))

    def __add__(self, other: "RenderGrad") -> "RenderGrad":
        return RenderGrad(
            self.means + other.means,
            self.log_scales + other.log_scales,
            self.quats + other.quats,
            self.opacities + other.opacities,
            self.colors + other.colors,
        )


@dataclass(frozen=True, eq=False)
class _Projection:
    index: np.ndarray       # original Gaussian index, front to back
    t: np.ndarray           # camera-frame centers
    W: np.ndarray           # 3x3 linear part of the extrinsic
    J: np.ndarray
    T: np.ndarray           # J W
    R: np.ndarray
    scale: np.ndarray
    M: np.ndarray           # R diag(scale)
    sigma: np.ndarray
    conic: np.ndarray
    mean2d: np.ndarray
    radius: np.ndarray
    opacity: np.ndarray
    color: np.ndarray


@dataclass(frozen=True, eq=False)
class _TileCache:
    rows: slice
    cols: slice
    sel: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    raw: np.ndarray
    alpha: np.ndarray
    t_excl: np.ndarray
    t_final: np.ndarray


def _project(g: GaussianSet, target: RenderTarget, settings: RenderSettings) -> _Projection:
    K = target.intrinsics
    ext = target.extrinsic
    W = ext.scale * ext.rotation
    t_all = g.means @ W.T + ext.translation if len(g) else np.zeros((0, 3))
    visible = np.flatnonzero(t_all[:, 2] > settings.near)
    index = visible[np.argsort(t_all[visible, 2], kind="stable")]

    t = t_all[index]
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    n = len(index)
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = K.f_w / tz
    J[:, 0, 2] = -K.f_w * tx / tz**2
    J[:, 1, 1] = K.f_h / tz
    J[:, 1, 2] = -K.f_h * ty / tz**2

    R = quat_to_matrix(g.quats[index]) if n else np.zeros((0, 3, 3))
    scale = np.exp(g.log_scales[index])
    M = R * scale[:, None, :]
    sigma = M @ M.transpose(0, 2, 1)
    T = J @ W
    cov2d = T @ sigma @ T.transpose(0, 2, 1) + settings.lowpass * np.eye(2)

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    conic = np.stack([np.stack([c, -b], -1), np.stack([-b, a], -1)], -2) / det[:, None, None]
    mean2d = np.stack([K.f_w * tx / tz + K.c_x, K.f_h * ty / tz + K.c_y], axis=-1)
    if settings.cull_sigma is None:
        radius = np.full(n, np.inf)
    else:
        lam = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
        radius = settings.cull_sigma * np.sqrt(lam)

    return _Projection(
        index=index, t=t, W=W, J=J, T=T, R=R, scale=scale, M=M, sigma=sigma,
        conic=conic, mean2d=mean2d, radius=radius,
        opacity=g.opacities[index], color=g.colors[index],
    )


def _tiles(height: int, width: int, size: int) -> list[tuple[slice, slice]]:
    return [
        (slice(y, min(y + size, height)), slice(x, min(x + size, width)))
        for y in range(0, height, size)
        for x in range(0, width, size)
    ]


def _tile_forward(
    proj: _Projection, rows: slice, cols: slice, bg: np.ndarray, alpha_max: float
) -> tuple[np.ndarray, _TileCache]:
    mx, my = proj.mean2d[:, 0], proj.mean2d[:, 1]
    r = proj.radius
    sel = np.flatnonzero(
        (mx + r >= cols.start) & (mx - r <= cols.stop - 1) & (my + r >= rows.start) & (my - r <= rows.stop - 1)
    )
    ys, xs = np.mgrid[rows, cols]
    px = xs.reshape(-1).astype(np.float64)
    py = ys.reshape(-1).astype(np.float64)

    dx = px[:, None] - mx[sel]
    dy = py[:, None] - my[sel]
    conic = proj.conic[sel]
    power = -0.5 * (conic[:, 0, 0] * dx * dx + 2.0 * conic[:, 0, 1] * dx * dy + conic[:, 1, 1] * dy * dy)
    raw = proj.opacity[sel] * np.exp(power)
    alpha = np.minimum(alpha_max, raw)

    transmit = np.cumprod(1.0 - alpha, axis=1)
    t_excl = np.concatenate([np.ones((len(px), 1)), transmit], axis=1)[:, :-1]
    t_final = transmit[:, -1] if len(sel) else np.ones(len(px))

    color = (alpha * t_excl) @ proj.color[sel] + t_final[:, None] * bg
    block = color.reshape(rows.stop - rows.start, cols.stop - cols.start, 3)
    return block, _TileCache(rows, cols, sel, dx, dy, raw, alpha, t_excl, t_final)


def _tile_backward(
    proj: _Projection, cache: _TileCache, image_grad: np.ndarray, bg: np.ndarray, alpha_max: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    sel = cache.sel
    gp = image_grad[cache.rows, cache.cols].reshape(-1, 3)
    colors = proj.color[sel]
    weight = cache.alpha * cache.t_excl

    d_color = weight.T @ gp
    cg = gp @ colors.T
    contrib = weight * cg
    after = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1] - contrib
    after += (cache.t_final * (gp @ bg))[:, None]
    d_alpha = cg * cache.t_excl - after / np.maximum(1.0 - cache.alpha, _TINY)

    free = cache.raw < alpha_max
    d_power = np.where(free, d_alpha * cache.raw, 0.0)
    d_opacity = d_power.sum(axis=0) / np.maximum(proj.opacity[sel], _TINY)

    conic = proj.conic[sel]
    dx, dy = cache.dx, cache.dy
    d_mean2d = np.stack(
        [
            (d_power * (conic[:, 0, 0] * dx + conic[:, 0, 1] * dy)).sum(axis=0),
            (d_power * (conic[:, 0, 1] * dx + conic[:, 1, 1] * dy)).sum(axis=0),
        ],
        axis=-1,
    )
    g00 = -0.5 * (d_power * dx * dx).sum(axis=0)
    g01 = -0.5 * (d_power * dx * dy).sum(axis=0)
    g11 = -0.5 * (d_power * dy * dy).sum(axis=0)
    d_conic = np.stack([np.stack([g00, g01], -1), np.stack([g01, g11], -1)], -2)
    return sel, d_mean2d, d_conic, d_opacity, d_color


def _quat_backward(q: np.ndarray, dR: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(q, axis=1, keepdims=True)
    qn = q / norm
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    d = lambda i, j: dR[:, i, j]  # noqa: E731
    dw = 2 * (-z * d(0, 1) + y * d(0, 2) + z * d(1, 0) - x * d(1, 2) - y * d(2, 0) + x * d(2, 1))
    dx = 2 * (y * d(0, 1) + z * d(0, 2) + y * d(1, 0) - 2 * x * d(1, 1) - w * d(1, 2) + z * d(2, 0) + w * d(2, 1) - 2 * x * d(2, 2))
    dy = 2 * (-2 * y * d(0, 0) + x * d(0, 1) + w * d(0, 2) + x * d(1, 0) + z * d(1, 2) - w * d(2, 0) + z * d(2, 1) - 2 * y * d(2, 2))
    dz = 2 * (-2 * z * d(0, 0) - w * d(0, 1) + x * d(0, 2) + w * d(1, 0) - 2 * z * d(1, 1) + y * d(1, 2) + x * d(2, 0) + y * d(2, 1))
    dqn = np.stack([dw, dx, dy, dz], axis=1)
    return (dqn - qn * np.sum(qn * dqn, axis=1, keepdims=True)) / norm


def _gaussian_backward(
    g: GaussianSet,
    target: RenderTarget,
    proj: _Projection,
    d_mean2d: np.ndarray,
    d_conic: np.ndarray,
    d_opacity: np.ndarray,
    d_color: np.ndarray,
) -> RenderGrad:
    K = target.intrinsics
    tx, ty, tz = proj.t[:, 0], proj.t[:, 1], proj.t[:, 2]
    fx, fy = K.f_w, K.f_h

    d_cov2d = -proj.conic @ d_conic @ proj.conic
    Tt = proj.T.transpose(0, 2, 1)
    d_sigma = Tt @ d_cov2d @ proj.T
    d_T = 2.0 * d_cov2d @ proj.T @ proj.sigma
    d_J = d_T @ proj.W.T

    d_t = np.zeros_like(proj.t)
    d_t[:, 0] = -fx / tz**2 * d_J[:, 0, 2] + fx / tz * d_mean2d[:, 0]
    d_t[:, 1] = -fy / tz**2 * d_J[:, 1, 2] + fy / tz * d_mean2d[:, 1]
    d_t[:, 2] = (
        -fx / tz**2 * d_J[:, 0, 0]
        + 2.0 * fx * tx / tz**3 * d_J[:, 0, 2]
        - fy / tz**2 * d_J[:, 1, 1]
        + 2.0 * fy * ty / tz**3 * d_J[:, 1, 2]
        - fx * tx / tz**2 * d_mean2d[:, 0]
        - fy * ty / tz**2 * d_mean2d[:, 1]
    )
    d_mean = d_t @ proj.W

    d_M = 2.0 * d_sigma @ proj.M
    d_R = d_M * proj.scale[:, None, :]
    d_log_scale = np.einsum("nij,nij->nj", proj.R, d_M) * proj.scale
    d_quat = _quat_backward(g.quats[proj.index], d_R)

    out = RenderGrad.zeros(len(g))
    idx = proj.index
    out.means[idx] = d_mean
    out.log_scales[idx] = d_log_scale
    out.quats[idx] = d_quat
    out.opacities[idx] = d_opacity
    out.colors[idx] = d_color
    return out


class _Pass:
    """One camera: projection plus per-tile forward caches."""

    def __init__(self, g: GaussianSet, target: RenderTarget, settings: RenderSettings, threads: int) -> None:
        self.g = g
        self.target = target
        self.settings = settings
        self.threads = threads
        self.bg = np.asarray(target.background, dtype=np.float64)
        if self.bg.shape != (3,) or np.any(self.bg < 0) or np.any(self.bg > 1):
            raise DomainError(f"background must be an RGB triple in [0, 1], got {target.background}")
        self.proj = _project(g, target, settings)
        self.tiles = _tiles(target.intrinsics.height, target.intrinsics.width, settings.tile_size)
        self.caches: list[_TileCache] = []

    def _map(self, fn: Callable, items: Sequence) -> list:
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    def forward(self, keep: bool) -> np.ndarray:
        alpha_max = self.settings.alpha_max
        results = self._map(lambda tile: _tile_forward(self.proj, tile[0], tile[1], self.bg, alpha_max), self.tiles)
        image = np.empty(self.target.shape)
        for block, cache in results:
            image[cache.rows, cache.cols] = block
        if keep:
            self.caches = [cache for _, cache in results]
        return image

    def backward(self, image_grad: np.ndarray) -> RenderGrad:
        image_grad = np.asarray(image_grad, dtype=np.float64)
        if image_grad.shape != self.target.shape:
            raise ShapeMismatchError(f"image gradient {image_grad.shape} vs image {self.target.shape}")
        n = len(self.proj.index)
        alpha_max = self.settings.alpha_max
        parts = self._map(lambda c: _tile_backward(self.proj, c, image_grad, self.bg, alpha_max), self.caches)

        d_mean2d = np.zeros((n, 2))
        d_conic = np.zeros((n, 2, 2))
        d_opacity = np.zeros(n)
        d_color = np.zeros((n, 3))
        for sel, dm, dk, do, dc in parts:
            d_mean2d[sel] += dm
            d_conic[sel] += dk
            d_opacity[sel] += do
            d_color[sel] += dc
        return _gaussian_backward(self.g, self.target, self.proj, d_mean2d, d_conic, d_opacity, d_color)


def render(
    g: GaussianSet,
    target: RenderTarget,
    settings: Optional[RenderSettings] = None,
    threads: int = 1,
) -> np.ndarray:
    """H x W x 3 image of `g` seen from `target`."""
    settings = settings or RenderSettings()
    image = _Pass(g, target, settings, threads).forward(keep=False)
    logger.debug("[RENDER] %d gaussians -> %dx%d", len(g), target.intrinsics.width, target.intrinsics.height)
    return image


def render_grad(
    g: GaussianSet,
    target: RenderTarget,
    image_grad: np.ndarray,
    settings: Optional[RenderSettings] = None,
    threads: int = 1,
) -> RenderGrad:
    """Adjoint of `render`: pull dL/dImage back onto every Gaussian parameter."""
    settings = settings or RenderSettings()
    raster = _Pass(g, target, settings, threads)
    raster.forward(keep=True)
    return raster.backward(image_grad)


def render_and_grad(
    g: GaussianSet,
    target: RenderTarget,
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    settings: Optional[RenderSettings] = None,
    threads: int = 1,
) -> tuple[float, np.ndarray, RenderGrad]:
    """
    Render once, evaluate `loss_fn(image) -> (loss, dloss/dimage)` and
    back-propagate using the cached forward pass.
    """
    settings = settings or RenderSettings()
    raster = _Pass(g, target, settings, threads)
    image = raster.forward(keep=True)
    loss, image_grad = loss_fn(image)
    return loss, image, raster.backward(image_grad)


def render_views(
    g: GaussianSet,
    targets: Sequence[RenderTarget],
    settings: Optional[RenderSettings] = None,
    threads: int = 1,
) -> list[np.ndarray]:
    return [render(g, target, settings, threads) for target in targets]


def write_png(image: np.ndarray, path: str | Path) -> None:
    """8-bit PNG of an RGB image in [0, 1]."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def read_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def write_npy(image: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.ascontiguousarray(image, dtype=np.float32), allow_pickle=False)
