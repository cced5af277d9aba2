# src/mapio/bundle.py
"""
Dense prediction bundles.

A bundle is a directory:

    meta.json          size, k, fov, depth_kind, vocabulary names, provenance
    depth.npy          H x W            f32, meters or canonical inverse depth
    embeddings.npy     H x W x D        f32
    nocs.npy           H x W x 3        f32  (or nocs_bins.npy + nocs_delta.npy)
    gaussians.npy      H x W x k x 14   f32
    vocab.npy          C x D            f32
    gt_mask.npy        H x W            u16 instance ids, 0 = background   (optional)
    gt_depth.npy       H x W            f32 metric depth                     (optional)
    gt_poses.json      per-instance ground truth                          (optional)

Per-Gaussian packing of the 14 floats in gaussians.npy:

    [0:3]   offset (camera frame, meters)
    [3:6]   log-scale
    [6:10]  rotation quaternion w, x, y, z
    [10]    opacity logit
    [11:14] color (SH degree 0, RGB in [0, 1])
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from ..depth.canonical import from_canonical_inverse
from ..geometry.camera import CameraIntrinsics, backproject_map, intrinsics_from_fov
from ..geometry.sim3 import Sim3
from ..nocs.codec import NocsBinned, decode_logits, one_hot_field
from ..utils.errors import BundleError, MissingFileError, ShapeMismatchError
from ..utils.logger import get_logger

logger = get_logger(__name__)

FORMAT_VERSION = 1
GAUSS_PARAMS = 14
OFFSET = slice(0, 3)
LOG_SCALE = slice(3, 6)
QUAT = slice(6, 10)
OPACITY_LOGIT = 10
COLOR = slice(11, 14)

DepthKind = Literal["metric", "canonical_inverse"]


@dataclass(frozen=True, eq=False)
class DenseMaps:
    depth: np.ndarray
    embeddings: np.ndarray
    nocs: np.ndarray
    gauss_params: np.ndarray
    fov: tuple[float, float]
    vocab: np.ndarray
    vocab_names: list[str]
    depth_kind: DepthKind = "metric"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        # read-only views; the caller keeps its own arrays writable
        for name in ("depth", "embeddings", "nocs", "gauss_params", "vocab"):
            view = np.asarray(getattr(self, name)).view()
            view.setflags(write=False)
            object.__setattr__(self, name, view)

    @property
    def height(self) -> int:
        return int(self.depth.shape[0])

    @property
    def width(self) -> int:
        return int(self.depth.shape[1])

    @property
    def k(self) -> int:
        return int(self.gauss_params.shape[2])

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return intrinsics_from_fov(self.fov[0], self.fov[1], self.width, self.height)

    def metric_depth(self) -> np.ndarray:
        depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth_kind == "canonical_inverse":
            return from_canonical_inverse(depth, self.intrinsics)
        return depth

    def background_index(self, name: str = "background") -> int:
        try:
            return self.vocab_names.index(name)
        except ValueError as exc:
            raise BundleError(f"vocabulary has no '{name}' row: {self.vocab_names}") from exc


@dataclass(frozen=True)
class GtInstance:
    instance_id: int
    label_id: int
    label_name: str
    shape: str
    sim3: Sim3
    albedo: list[list[float]]

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "label_id": self.label_id,
            "label_name": self.label_name,
            "shape": self.shape,
            "sim3": self.sim3.to_dict(),
            "albedo": self.albedo,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GtInstance":
        return cls(
            instance_id=int(data["instance_id"]),
            label_id=int(data["label_id"]),
            label_name=str(data["label_name"]),
            shape=str(data["shape"]),
            sim3=Sim3.from_dict(data["sim3"]),
            albedo=[list(map(float, c)) for c in data["albedo"]],
        )


@dataclass(frozen=True, eq=False)
class GroundTruth:
    mask: np.ndarray
    depth: Optional[np.ndarray]
    instances: list[GtInstance]
    fov: Optional[tuple[float, float]] = None

    def label_map(self, background: int = -1) -> np.ndarray:
        """H x W category ids from the instance mask, `background` elsewhere."""
        labels = np.full(self.mask.shape, background, dtype=np.int64)
        for inst in self.instances:
            labels[self.mask == inst.instance_id] = inst.label_id
        return labels

    def nocs_map(self, K: CameraIntrinsics) -> np.ndarray:
        """
        H x W x 3 canonical coordinates of the visible surface: the depth map
        back-projected and moved through each instance's inverse pose. Zero
        on background.
        """
        if self.depth is None:
            raise BundleError("ground-truth NOCS needs gt_depth.npy")
        points = backproject_map(self.depth, K)
        nocs = np.zeros(points.shape, dtype=np.float64)
        for inst in self.instances:
            sel = self.mask == inst.instance_id
            nocs[sel] = np.clip(inst.sim3.inverse().apply(points[sel]), 0.0, 1.0)
        return nocs


def require_file(directory: Path, name: str) -> Path:
    path = directory / name
    if not path.exists():
        raise MissingFileError(name, str(directory))
    return path


def _load_array(directory: Path, name: str, ndim: int, dtype=np.float32) -> np.ndarray:
    path = require_file(directory, name)
    try:
        array = np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise BundleError(f"{name}: not a readable NPY file ({exc})") from exc
    if array.ndim != ndim:
        raise ShapeMismatchError(f"{name}: expected {ndim} dimensions, got shape {array.shape}")
    if array.dtype != np.dtype(dtype):
        raise BundleError(f"{name}: expected dtype {np.dtype(dtype)}, got {array.dtype}")
    return array


def _check_hw(name: str, array: np.ndarray, height: int, width: int) -> None:
    if array.shape[:2] != (height, width):
        raise ShapeMismatchError(f"{name}: shape {array.shape} does not match image size {height}x{width}")


def _first_bad_pixel(mask: np.ndarray) -> tuple[int, int]:
    row, col = np.argwhere(mask)[0]
    return int(row), int(col)


def read_bundle(directory: str | Path) -> DenseMaps:
    """Load and validate a bundle directory."""
    directory = Path(directory)
    logger.info("[BUNDLE-READ] Reading bundle from %s", directory)
    try:
        meta = json.loads(require_file(directory, "meta.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleError(f"meta.json: invalid JSON ({exc})") from exc

    for key in ("height", "width", "fov", "depth_kind", "vocab_names"):
        if key not in meta:
            raise BundleError(f"meta.json: missing key '{key}'")
    height, width = int(meta["height"]), int(meta["width"])
    if meta["depth_kind"] not in ("metric", "canonical_inverse"):
        raise BundleError(f"meta.json: unknown depth_kind {meta['depth_kind']!r}")

    depth = _load_array(directory, "depth.npy", 2)
    if depth.shape != (height, width):
        raise ShapeMismatchError(f"depth.npy: shape {depth.shape} does not match meta {height}x{width}")
    bad = ~np.isfinite(depth)
    if bad.any():
        row, col = _first_bad_pixel(bad)
        raise BundleError(f"depth.npy: non-finite depth at pixel (row={row}, col={col})")

    embeddings = _load_array(directory, "embeddings.npy", 3)
    _check_hw("embeddings.npy", embeddings, height, width)

    if (directory / "nocs.npy").exists():
        nocs = _load_array(directory, "nocs.npy", 3)
    elif (directory / "nocs_bins.npy").exists():
        logits = _load_array(directory, "nocs_bins.npy", 4)
        delta = _load_array(directory, "nocs_delta.npy", 3)
        _check_hw("nocs_bins.npy", logits, height, width)
        _check_hw("nocs_delta.npy", delta, height, width)
        nocs = decode_logits(logits, delta).astype(np.float32)
        logger.info("[BUNDLE-READ] Decoded NOCS from %d bins", logits.shape[-1])
    else:
        raise MissingFileError("nocs.npy", str(directory))
    _check_hw("nocs.npy", nocs, height, width)
    if nocs.shape[2] != 3:
        raise ShapeMismatchError(f"nocs.npy: expected 3 channels, got {nocs.shape[2]}")

    gauss = _load_array(directory, "gaussians.npy", 4)
    _check_hw("gaussians.npy", gauss, height, width)
    if gauss.shape[3] != GAUSS_PARAMS:
        raise ShapeMismatchError(f"gaussians.npy: expected {GAUSS_PARAMS} params per Gaussian, got {gauss.shape[3]}")

    vocab = _load_array(directory, "vocab.npy", 2)
    names = [str(n) for n in meta["vocab_names"]]
    if vocab.shape[0] != len(names):
        raise ShapeMismatchError(f"vocab.npy: {vocab.shape[0]} rows but {len(names)} names in meta.json")
    if vocab.shape[1] != embeddings.shape[2]:
        raise ShapeMismatchError(
            f"vocab.npy: dimension {vocab.shape[1]} does not match embeddings dimension {embeddings.shape[2]}"
        )

    fov = (float(meta["fov"][0]), float(meta["fov"][1]))
    if not all(math.isfinite(a) and 0 < a < math.pi for a in fov):
        raise BundleError(f"meta.json: fov {fov} outside (0, pi)")

    maps = DenseMaps(
        depth=depth,
        embeddings=embeddings,
        nocs=nocs,
        gauss_params=gauss,
        fov=fov,
        vocab=vocab,
        vocab_names=names,
        depth_kind=meta["depth_kind"],
        provenance=meta.get("provenance", {}),
    )
    logger.info(
        "[BUNDLE-READ] Loaded %dx%d bundle, k=%d, D=%d, C=%d",
        height, width, maps.k, embeddings.shape[2], vocab.shape[0],
    )
    return maps


def read_nocs_binned(directory: str | Path, maps: DenseMaps, bins: int) -> NocsBinned:
    """
    Binned NOCS prediction of a bundle: nocs_bins.npy + nocs_delta.npy when
    present, otherwise the one-hot encoding of nocs.npy at `bins` bins.
    """
    directory = Path(directory)
    if not (directory / "nocs_bins.npy").exists():
        return one_hot_field(np.asarray(maps.nocs, dtype=np.float64), bins)
    logits = _load_array(directory, "nocs_bins.npy", 4)
    delta = _load_array(directory, "nocs_delta.npy", 3)
    if logits.shape[-1] != bins:
        raise ShapeMismatchError(f"nocs_bins.npy: {logits.shape[-1]} bins, config expects nocs.bins={bins}")
    return NocsBinned(logits=logits, delta=delta)


def _save(path: Path, array: np.ndarray, dtype=np.float32) -> None:
    np.save(path, np.ascontiguousarray(array, dtype=dtype), allow_pickle=False)


def write_bundle(maps: DenseMaps, directory: str | Path) -> None:
    """Write a bundle; identical input gives identical bytes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "height": maps.height,
        "width": maps.width,
        "k": maps.k,
        "embedding_dim": int(maps.embeddings.shape[2]),
        "fov": [float(maps.fov[0]), float(maps.fov[1])],
        "depth_kind": maps.depth_kind,
        "vocab_names": list(maps.vocab_names),
        "gauss_layout": ["offset:3", "log_scale:3", "quat_wxyz:4", "opacity_logit:1", "color:3"],
        "provenance": maps.provenance,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _save(directory / "depth.npy", maps.depth)
    _save(directory / "embeddings.npy", maps.embeddings)
    _save(directory / "nocs.npy", maps.nocs)
    _save(directory / "gaussians.npy", maps.gauss_params)
    _save(directory / "vocab.npy", maps.vocab)
    logger.info("[BUNDLE-WRITE] Wrote %dx%d bundle to %s", maps.height, maps.width, directory)


def write_ground_truth(gt: GroundTruth, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _save(directory / "gt_mask.npy", gt.mask, dtype=np.uint16)
    if gt.depth is not None:
        _save(directory / "gt_depth.npy", gt.depth)
    payload: dict = {"instances": [inst.to_dict() for inst in gt.instances]}
    if gt.fov is not None:
        payload["fov"] = [float(gt.fov[0]), float(gt.fov[1])]
    (directory / "gt_poses.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_ground_truth(directory: str | Path) -> GroundTruth:
    directory = Path(directory)
    mask = _load_array(directory, "gt_mask.npy", 2, dtype=np.uint16)
    depth = None
    if (directory / "gt_depth.npy").exists():
        depth = _load_array(directory, "gt_depth.npy", 2)
        if depth.shape != mask.shape:
            raise ShapeMismatchError(f"gt_depth.npy: shape {depth.shape} does not match gt_mask {mask.shape}")
    try:
        payload = json.loads(require_file(directory, "gt_poses.json").read_text(encoding="utf-8"))
        instances = [GtInstance.from_dict(item) for item in payload["instances"]]
        fov = tuple(float(a) for a in payload["fov"]) if "fov" in payload else None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"gt_poses.json: malformed ({exc})") from exc
    if fov is not None and len(fov) != 2:
        raise BundleError(f"gt_poses.json: fov needs two angles, got {list(fov)}")
    return GroundTruth(mask=mask, depth=depth, instances=instances, fov=fov)
