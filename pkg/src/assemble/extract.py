# src/assemble/extract.py
from __future__ import annotations

from pathlib import Path

from ..mapio.bundle import DenseMaps, read_bundle
from ..utils.errors import BundleError
from ..utils.logger import get_logger

logger = get_logger(__name__)


def extract_bundle(bundle_dir: str | Path) -> DenseMaps:
    """
    Extract step: read and validate the dense-map bundle the pipeline
    starts from.
    """
    bundle_dir = Path(bundle_dir)
    if not bundle_dir.is_dir():
        raise BundleError(f"bundle directory not found at {bundle_dir}")

    logger.info("[ASSEMBLE-EXTRACT] Reading bundle from %s", bundle_dir)
    maps = read_bundle(bundle_dir)
    logger.info(
        "[ASSEMBLE-EXTRACT] maps %dx%d, k=%d, %d vocabulary rows",
        maps.height, maps.width, maps.k, len(maps.vocab_names),
    )
    return maps
