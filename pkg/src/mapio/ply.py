# src/mapio/ply.py
"""
Gaussian point files in the usual splatting layout: binary little-endian
PLY, one `vertex` element with x, y, z, f_dc_0..2, opacity (logit),
scale_0..2 (log) and rot_0..3 (w, x, y, z). The frame tag goes into a
`frame <tag>` header comment.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError
from scipy.special import expit, logit

from ..gaussians.primitives import GaussianSet
from ..utils.errors import BundleError, ExportError
from ..utils.logger import get_logger

logger = get_logger(__name__)

# zeroth-order spherical harmonic constant
SH_C0 = 0.28209479177387814

_ATTRIBUTES = (
    ["x", "y", "z"]
    + [f"f_dc_{i}" for i in range(3)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


def color_to_dc(color: np.ndarray) -> np.ndarray:
    return (np.asarray(color, dtype=np.float64) - 0.5) / SH_C0


def dc_to_color(dc: np.ndarray) -> np.ndarray:
    return np.asarray(dc, dtype=np.float64) * SH_C0 + 0.5


def export_gaussians_ply(g: GaussianSet, path: str | Path) -> None:
    path = Path(path)
    attributes = np.concatenate(
        [g.means, color_to_dc(g.colors), logit(g.opacities)[:, None], g.log_scales, g.quats],
        axis=1,
    )
    with np.errstate(over="ignore"):
        fits = np.all(np.isfinite(attributes.astype(np.float32)), axis=1)
    if not fits.all():
        bad = int(np.argmin(fits))
        raise ExportError(f"{path.name}: gaussian {bad} does not fit a float32 PLY attribute")

    elements = np.empty(len(g), dtype=[(name, "<f4") for name in _ATTRIBUTES])
    for column, name in enumerate(_ATTRIBUTES):
        elements[name] = attributes[:, column]

    path.parent.mkdir(parents=True, exist_ok=True)
    ply = PlyData(
        [PlyElement.describe(elements, "vertex")],
        text=False,
        byte_order="<",
        comments=[f"frame {g.frame}"],
    )
    ply.write(str(path))
    logger.debug("[PLY-EXPORT] %d gaussians (%s frame) -> %s", len(g), g.frame, path)


def import_gaussians_ply(path: str | Path) -> GaussianSet:
    path = Path(path)
    if not path.exists():
        raise BundleError(f"{path}: no such gaussian file")
    try:
        ply = PlyData.read(str(path))
        vertex = ply["vertex"]
        columns = {name: np.asarray(vertex[name], dtype=np.float64) for name in _ATTRIBUTES}
    except (KeyError, ValueError, PlyParseError) as exc:
        raise BundleError(f"{path.name}: not a gaussian PLY ({exc})") from exc

    frame = "camera"
    for comment in ply.comments:
        if comment.startswith("frame "):
            frame = comment.split(" ", 1)[1].strip()

    def stack(*names: str) -> np.ndarray:
        return np.stack([columns[n] for n in names], axis=1)

    return GaussianSet(
        means=stack("x", "y", "z"),
        log_scales=stack("scale_0", "scale_1", "scale_2"),
        quats=stack("rot_0", "rot_1", "rot_2", "rot_3"),
        opacities=expit(columns["opacity"]),
        colors=dc_to_color(stack("f_dc_0", "f_dc_1", "f_dc_2")),
        frame=frame,
    )
