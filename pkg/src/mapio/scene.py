# src/mapio/scene.py
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..geometry.camera import CameraIntrinsics
from ..geometry.sim3 import Sim3
from ..utils.errors import BundleError, DomainError
from .bundle import require_file

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SceneInstance:
    instance_id: int
    label_id: int
    label_name: str
    sim3: Sim3
    pixel_count: int
    inlier_count: int
    ply: str = ""

    def __post_init__(self) -> None:
        if self.inlier_count > self.pixel_count:
            raise DomainError(
                f"instance {self.instance_id}: inlier_count {self.inlier_count} exceeds pixel_count {self.pixel_count}"
            )

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "label_id": self.label_id,
            "label_name": self.label_name,
            "sim3": self.sim3.to_dict(),
            "pixel_count": self.pixel_count,
            "inlier_count": self.inlier_count,
            "ply": self.ply,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneInstance":
        return cls(
            instance_id=int(data["instance_id"]),
            label_id=int(data["label_id"]),
            label_name=str(data["label_name"]),
            sim3=Sim3.from_dict(data["sim3"]),
            pixel_count=int(data["pixel_count"]),
            inlier_count=int(data["inlier_count"]),
            ply=str(data.get("ply", "")),
        )


@dataclass(frozen=True)
class SceneDescriptor:
    instances: list[SceneInstance]
    camera: CameraIntrinsics
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "camera": self.camera.to_dict(),
            "instances": [inst.to_dict() for inst in self.instances],
            "provenance": self.provenance,
        }


def write_scene(scene: SceneDescriptor, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scene.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_scene(directory: str | Path) -> SceneDescriptor:
    """Read `scene.json` from an assemble output directory."""
    path = require_file(Path(directory), "scene.json")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return SceneDescriptor(
            instances=[SceneInstance.from_dict(item) for item in data["instances"]],
            camera=CameraIntrinsics.from_dict(data["camera"]),
            provenance=data.get("provenance", {}),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise BundleError(f"scene.json: malformed ({exc})") from exc
