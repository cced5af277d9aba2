# src/semantics/unaries.py
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from ..utils.errors import DomainError, ShapeMismatchError


@dataclass(frozen=True, eq=False)
class UnaryField:
    """H x W x C negative log-probabilities and the softmax temperature."""

    unary: np.ndarray
    tau: float

    @property
    def num_labels(self) -> int:
        return int(self.unary.shape[-1])

    def probabilities(self) -> np.ndarray:
        return np.exp(-self.unary)

    def argmax(self) -> np.ndarray:
        return np.argmin(self.unary, axis=-1)


def normalize_rows(vectors: np.ndarray, what: str = "embedding") -> np.ndarray:
    """Unit-normalize along the last axis; a zero vector is an error naming its index."""
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    bad = ~(norms[..., 0] > 0) | ~np.isfinite(norms[..., 0])
    if bad.any():
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DomainError(f"zero-norm or non-finite {what} at index {index}")
    return vectors / norms


def cosine_logits(embeddings: np.ndarray, vocab: np.ndarray) -> np.ndarray:
    e = normalize_rows(embeddings, "embedding")
    labels = normalize_rows(vocab, "vocabulary row")
    if e.shape[-1] != labels.shape[-1]:
        raise ShapeMismatchError(f"embedding dim {e.shape[-1]} vs vocabulary dim {labels.shape[-1]}")
    return e @ labels.T


def unaries_from_embeddings(embeddings: np.ndarray, vocab: np.ndarray, tau: float = 0.07) -> UnaryField:
    """unary(u, v, c) = -log softmax_c(cos(e_uv, l_c) / tau)."""
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    logits = cosine_logits(embeddings, vocab) / tau
    return UnaryField(unary=-log_softmax(logits, axis=-1), tau=float(tau))
