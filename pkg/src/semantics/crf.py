# src/semantics/crf.py
"""
Mean-field inference for a fully connected CRF whose pairwise affinity is
the clamped cosine similarity of pixel embeddings, with Potts compatibility:

    Q_i(l) ~ exp(-unary_i(l) - w * sum_{j != i} k_ij * (1 - Q_j(l)))
    k_ij   = max(0, cos(e_i, e_j))

Updates are synchronous. Images up to `exact_max_pixels` pixels use every
pair; larger images only use the (2r+1)^2 window around each pixel.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import softmax

from ..utils.errors import ShapeMismatchError
from ..utils.logger import get_logger
from .unaries import UnaryField, normalize_rows

logger = get_logger(__name__)

BACKGROUND = -1
_ROW_BLOCK = 512
_MAX_UNIQUE = 4096


@dataclass(frozen=True, eq=False)
class CrfResult:
    labels: np.ndarray
    marginals: np.ndarray
    exact: bool


def to_label_map(indices: np.ndarray, background_index: Optional[int]) -> np.ndarray:
    labels = np.asarray(indices, dtype=np.int64).copy()
    if background_index is not None:
        labels[labels == background_index] = BACKGROUND
    return labels


def topk_labels(marginals: np.ndarray, k: int = 5, background_index: Optional[int] = None) -> np.ndarray:
    """H x W x k label candidates, most probable first (ties by index)."""
    k = min(k, marginals.shape[-1])
    order = np.argsort(-marginals, axis=-1, kind="stable")[..., :k]
    return to_label_map(order, background_index)


class _ExactMessages:
    """sum_{j != i} k_ij (1 - Q_j) over all pixel pairs."""

    def __init__(self, e: np.ndarray, threads: int) -> None:
        self.e = e
        self.threads = threads
        self.self_affinity = np.maximum(0.0, np.einsum("nd,nd->n", e, e))
        uniq, inverse = np.unique(e, axis=0, return_inverse=True)
        self.inverse = inverse.reshape(-1)
        self.kernel = np.maximum(0.0, uniq @ uniq.T) if len(uniq) <= _MAX_UNIQUE else None
        logger.debug("[CRF] exact kernel: %d pixels, %d distinct embeddings", len(e), len(uniq))

    def __call__(self, q: np.ndarray) -> np.ndarray:
        disagree = 1.0 - q
        if self.kernel is not None:
            sums = np.zeros((self.kernel.shape[0], q.shape[1]))
            np.add.at(sums, self.inverse, disagree)
            return (self.kernel @ sums)[self.inverse] - self.self_affinity[:, None] * disagree

        starts = range(0, len(self.e), _ROW_BLOCK)

        def block(start: int) -> np.ndarray:
            rows = self.e[start : start + _ROW_BLOCK]
            kernel = np.maximum(0.0, rows @ self.e.T)
            idx = np.arange(len(rows))
            kernel[idx, start + idx] = 0.0
            return kernel @ disagree

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                parts = list(pool.map(block, starts))
        else:
            parts = [block(s) for s in starts]
        return np.concatenate(parts, axis=0)


class _WindowMessages:
    """Same sum restricted to a (2r+1)^2 neighbourhood."""

    def __init__(self, e: np.ndarray, radius: int) -> None:
        self.height, self.width, _ = e.shape
        self.radius = radius
        padded = np.pad(e, ((radius, radius), (radius, radius), (0, 0)))
        self.affinities = []
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                if dy == 0 and dx == 0:
                    continue
                shifted = padded[radius + dy : radius + dy + self.height, radius + dx : radius + dx + self.width]
                self.affinities.append(((dy, dx), np.maximum(0.0, np.einsum("hwd,hwd->hw", e, shifted))))

    def __call__(self, q: np.ndarray) -> np.ndarray:
        r = self.radius
        disagree = (1.0 - q).reshape(self.height, self.width, -1)
        padded = np.pad(disagree, ((r, r), (r, r), (0, 0)))
        out = np.zeros_like(disagree)
        for (dy, dx), kappa in self.affinities:
            out += kappa[..., None] * padded[r + dy : r + dy + self.height, r + dx : r + dx + self.width]
        return out.reshape(q.shape)


def crf_mean_field(
    unary: UnaryField,
    embeddings: np.ndarray,
    iterations: int = 5,
    pairwise_weight: float = 0.05,
    window: int = 8,
    exact_max_pixels: int = 16384,
    background_index: Optional[int] = None,
    threads: int = 1,
) -> CrfResult:
    """Run `iterations` synchronous mean-field updates; 0 iterations returns the unary argmax."""
    u = np.asarray(unary.unary, dtype=np.float64)
    if u.ndim != 3 or np.asarray(embeddings).shape[:2] != u.shape[:2]:
        raise ShapeMismatchError(f"crf: unary {u.shape} vs embeddings {np.asarray(embeddings).shape}")
    height, width, labels = u.shape
    n = height * width
    flat_u = u.reshape(n, labels)
    q = softmax(-flat_u, axis=-1)

    exact = n <= exact_max_pixels
    if iterations > 0 and pairwise_weight > 0:
        e = normalize_rows(embeddings, "embedding")
        messages = _ExactMessages(e.reshape(n, -1), threads) if exact else _WindowMessages(e, window)
        for it in range(iterations):
            q = softmax(-flat_u - pairwise_weight * messages(q), axis=-1)
            logger.debug("[CRF] iteration %d/%d done", it + 1, iterations)

    marginals = q.reshape(height, width, labels)
    result = CrfResult(
        labels=to_label_map(np.argmax(marginals, axis=-1), background_index),
        marginals=marginals,
        exact=exact,
    )
    logger.info(
        "[CRF] %dx%d, %d labels, %d iterations, w=%.4g, %s kernel",
        height, width, labels, iterations, pairwise_weight, "exact" if exact else f"window r={window}",
    )
    return result
