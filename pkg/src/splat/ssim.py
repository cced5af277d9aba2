# src/splat/ssim.py
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from ..utils.errors import DomainError, ShapeMismatchError

WINDOW = 11
SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2


@lru_cache(maxsize=None)
def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    window = np.outer(g, g)[:, :, None]
    window.setflags(write=False)
    return window


def _check(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"ssim: image shapes differ, {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < WINDOW or a.shape[1] < WINDOW:
        raise DomainError(f"ssim needs images of at least {WINDOW}x{WINDOW}, got {a.shape[:2]}")
    return a, b


def _valid(x: np.ndarray) -> np.ndarray:
    return fftconvolve(x, gaussian_window(), mode="valid", axes=(0, 1))


def _full(x: np.ndarray) -> np.ndarray:
    return fftconvolve(x, gaussian_window(), mode="full", axes=(0, 1))


def _stats(a: np.ndarray, b: np.ndarray):
    mu_a, mu_b = _valid(a), _valid(b)
    e_aa, e_bb, e_ab = _valid(a * a), _valid(b * b), _valid(a * b)
    a1 = 2.0 * mu_a * mu_b + C1
    a2 = 2.0 * (e_ab - mu_a * mu_b) + C2
    b1 = mu_a * mu_a + mu_b * mu_b + C1
    b2 = (e_aa - mu_a * mu_a) + (e_bb - mu_b * mu_b) + C2
    return mu_a, mu_b, a1, a2, b1, b2


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over channels and valid 11x11 window positions."""
    a, b = _check(a, b)
    _, _, a1, a2, b1, b2 = _stats(a, b)
    return float(np.mean((a1 * a2) / (b1 * b2)))


def ssim_grad(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """SSIM and its gradient with respect to the second image."""
    a_in = np.asarray(a)
    a, b = _check(a, b)
    mu_a, mu_b, a1, a2, b1, b2 = _stats(a, b)
    denom = b1 * b2
    s = (a1 * a2) / denom
    count = s.size

    d_mu_b = (2.0 * mu_a * (a2 - a1)) / denom - 2.0 * mu_b * s * (1.0 / b1 - 1.0 / b2)
    d_e_bb = -s / b2
    d_e_ab = 2.0 * a1 / denom
    grad = (_full(d_mu_b) + 2.0 * b * _full(d_e_bb) + a * _full(d_e_ab)) / count
    if a_in.ndim == 2:
        grad = grad[..., 0]
    return float(np.mean(s)), grad


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; inf for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"psnr: image shapes differ, {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)
