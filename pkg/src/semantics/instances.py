# src/semantics/instances.py
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..utils.logger import get_logger

logger = get_logger(__name__)

# 4-connectivity
_STRUCTURE = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True, eq=False)
class InstanceCandidate:
    label: int
    pixels: np.ndarray  # (n, 2) rows of (row, col), raster order

    @property
    def size(self) -> int:
        return int(len(self.pixels))

    def mask(self, height: int, width: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        out[self.pixels[:, 0], self.pixels[:, 1]] = True
        return out


def extract_instances(labels: np.ndarray, min_pixels: int = 32, background: int = -1) -> list[InstanceCandidate]:
    """
    4-connected components of every non-background label, ordered by label
    and then by raster position of the first pixel. Components smaller than
    `min_pixels` are dropped.
    """
    labels = np.asarray(labels)
    candidates: list[InstanceCandidate] = []
    dropped = 0
    for label in np.unique(labels):
        if label == background:
            continue
        components, count = ndimage.label(labels == label, structure=_STRUCTURE)
        for component in range(1, count + 1):
            pixels = np.argwhere(components == component)
            if len(pixels) < min_pixels:
                dropped += 1
                continue
            candidates.append(InstanceCandidate(label=int(label), pixels=pixels))

    if dropped:
        logger.warning("[INSTANCES] dropped %d components below %d pixels", dropped, min_pixels)
    logger.info("[INSTANCES] %d candidate instances", len(candidates))
    return candidates
