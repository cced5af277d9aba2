# src/assemble/load.py
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..mapio.bundle import DenseMaps
from ..mapio.ply import export_gaussians_ply
from ..mapio.scene import SceneDescriptor, SceneInstance, write_scene
from ..utils.logger import get_logger
from .transform import AssembledInstance, Segmentation, instance_map

logger = get_logger(__name__)


def _save_int(path: Path, array: np.ndarray) -> None:
    np.save(path, np.ascontiguousarray(array, dtype=np.int32), allow_pickle=False)


def load_assembly(
    out_dir: str | Path,
    maps: DenseMaps,
    segmentation: Segmentation,
    instances: list[AssembledInstance],
    provenance: dict,
) -> SceneDescriptor:
    """
    Load step: one PLY per object under objects/, scene.json, and the
    label, top-k and instance maps used by evaluation.
    """
    out_dir = Path(out_dir)
    objects_dir = out_dir / "objects"
    objects_dir.mkdir(parents=True, exist_ok=True)
    logger.info("[ASSEMBLE-LOAD] Writing %d instances to %s", len(instances), out_dir)

    records = []
    for inst in instances:
        ply = f"objects/obj_{inst.instance_id:03d}.ply"
        export_gaussians_ply(inst.gaussians, out_dir / ply)
        records.append(
            SceneInstance(
                instance_id=inst.instance_id,
                label_id=inst.label_id,
                label_name=inst.label_name,
                sim3=inst.pose,
                pixel_count=inst.pixel_count,
                inlier_count=inst.inlier_count,
                ply=ply,
            )
        )

    scene = SceneDescriptor(instances=records, camera=maps.intrinsics, provenance=provenance)
    write_scene(scene, out_dir / "scene.json")
    _save_int(out_dir / "labels.npy", segmentation.labels)
    _save_int(out_dir / "topk.npy", segmentation.topk)
    _save_int(out_dir / "instances.npy", instance_map(instances, maps.height, maps.width))

    logger.info(
        "[ASSEMBLE-LOAD] scene.json (%d instances), labels/topk/instances maps %dx%d",
        len(records), maps.height, maps.width,
    )
    return scene
