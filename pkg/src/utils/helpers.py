# src/utils/helpers.py
from __future__ import annotations

import zlib

import numpy as np


def stream_id(name: str) -> int:
    """Stable integer id for a named random stream."""
    return zlib.crc32(name.encode("utf-8"))


def named_rng(seed: int, name: str, *extra: int) -> np.random.Generator:
    """
    Generator for the sub-stream `name` of the top-level seed. Extra integers
    (an iteration index, an object index) select further independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream_id(name), *map(int, extra)]))
