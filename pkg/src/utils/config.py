# src/utils/config.py
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

# Get project root: .../scenekit
PROJECT_ROOT = Path(__file__).resolve().parents[2]

CONFIG_PATH = PROJECT_ROOT / "config" / "config.yaml"

load_dotenv()


def _deep_merge(base: dict, overlay: dict) -> dict:
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str | Path] = None) -> dict:
    """
    Load config.yaml, then overlay the file named by `path` or by the
    SCENEKIT_CONFIG environment variable (if any).
    """
    with open(CONFIG_PATH, "r") as file:
        base = yaml.safe_load(file) or {}

    overlay_path = path or os.environ.get("SCENEKIT_CONFIG")
    if overlay_path:
        overlay_path = Path(overlay_path)
        if not overlay_path.is_absolute():
            overlay_path = PROJECT_ROOT / overlay_path
        if not overlay_path.exists():
            raise ConfigError(f"config file not found at {overlay_path}")
        with open(overlay_path, "r") as file:
            base = _deep_merge(base, yaml.safe_load(file) or {})
    return base


config = load_config()


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class LoggingSettings(_Section):
    level: str = "INFO"
    file: str = "logs/scenekit.log"
    format: str = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"
    console: bool = True


class RuntimeSettings(_Section):
    seed: int = Field(0, ge=0, lt=2**64)
    threads: int = Field(1, ge=1)


class CrfSettings(_Section):
    tau: float = Field(0.07, gt=0)
    iterations: int = Field(5, ge=0)
    pairwise_weight: float = Field(0.05, ge=0)
    window: int = Field(8, ge=1)
    exact_max_pixels: int = Field(16384, ge=1)
    min_pixels: int = Field(32, ge=1)
    background_name: str = "background"


class RansacSettings(_Section):
    inlier_threshold: float = Field(0.01, gt=0)
    max_iterations: int = Field(2000, ge=1)
    confidence: float = Field(0.999, gt=0, lt=1)
    min_inliers: int = Field(50, ge=3)


class GaussianSettings(_Section):
    k: int = Field(2, ge=1)
    canonical_mode: Literal["means-only", "full-sim3"] = "means-only"
    offset_mode: Literal["off-ray", "along-ray"] = "off-ray"
    tau_offset: float = Field(0.05, ge=0)


class RenderSettings(_Section):
    lowpass: float = Field(0.3, ge=0)
    alpha_max: float = Field(0.99, gt=0, le=1)
    near: float = Field(0.01, gt=0)
    tile_size: int = Field(16, ge=1)
    cull_sigma: Optional[float] = Field(4.0, gt=0)
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @field_validator("background")
    @classmethod
    def _unit_color(cls, value):
        if any(c < 0 or c > 1 for c in value):
            raise ValueError("background color must lie in [0,1]")
        return value


class CssSettings(_Section):
    views: int = Field(42, ge=4)
    resolution: int = Field(512, ge=11)
    radius: float = Field(2.0, gt=0)
    fov_deg: float = Field(40.0, gt=0, lt=180)
    lambda_ssim: float = Field(0.2, ge=0)
    optimizer: Literal["adam", "momentum"] = "adam"
    steps: int = Field(2000, ge=0)
    learning_rate: float = Field(0.01, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)


class DepthSettings(_Section):
    lambda_grad: float = Field(1.0, ge=0)
    use_mask: bool = True


class NocsSettings(_Section):
    bins: int = Field(64, ge=1)
    ce_weight: float = Field(1.0, ge=0)
    mse_weight: float = Field(1.0, ge=0)


class ObjectiveSettings(_Section):
    huber_delta: float = Field(0.1, gt=0)


class OracleSettings(_Section):
    objects: int = Field(5, ge=0)
    width: int = Field(128, ge=1)
    height: int = Field(128, ge=1)
    fov_deg: float = Field(60.0, gt=0, lt=180)
    embedding_dim: int = Field(32, ge=2)
    vocab_size: int = Field(16, ge=2)
    noise_depth: float = Field(0.0, ge=0)
    noise_nocs: float = Field(0.0, ge=0)
    noise_embedding_angle: float = Field(0.0, ge=0)
    label_flip_rate: float = Field(0.0, ge=0, le=1)
    flip_mix: float = Field(0.6, gt=0.5, lt=1)
    min_visible_pixels: int = Field(80, ge=1)


class EvalSettings(_Section):
    fscore_threshold: float = Field(0.1, gt=0)
    chamfer_squared: bool = False
    min_opacity: float = Field(0.05, ge=0, lt=1)
    surface_samples: int = Field(4096, ge=1)
    psnr_views: int = Field(0, ge=0)
    psnr_resolution: int = Field(64, ge=11)
    match_iou: float = Field(0.5, gt=0, le=1)


class PipelineConfig(_Section):
    logging: LoggingSettings = LoggingSettings()
    runtime: RuntimeSettings = RuntimeSettings()
    crf: CrfSettings = CrfSettings()
    ransac: RansacSettings = RansacSettings()
    gaussians: GaussianSettings = GaussianSettings()
    render: RenderSettings = RenderSettings()
    css: CssSettings = CssSettings()
    depth: DepthSettings = DepthSettings()
    nocs: NocsSettings = NocsSettings()
    objectives: ObjectiveSettings = ObjectiveSettings()
    oracle: OracleSettings = OracleSettings()
    eval: EvalSettings = EvalSettings()

    def with_overrides(self, overrides: dict[str, dict[str, Any]]) -> "PipelineConfig":
        """
        Return a new validated config with {section: {field: value}} applied.
        None values are skipped so CLI options that were not given leave the
        file value in place.
        """
        data = self.model_dump()
        for section, fields in overrides.items():
            for key, value in fields.items():
                if value is not None:
                    data.setdefault(section, {})[key] = value
        return build_pipeline_config(data)

    def fingerprint(self) -> str:
        # thread count and logging never change results, so they stay out
        data = self.model_dump(mode="json", exclude={"logging": True, "runtime": {"threads"}})
        payload = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_pipeline_config(raw: dict) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def get_pipeline_config(path: Optional[str | Path] = None) -> PipelineConfig:
    raw = config if path is None else load_config(path)
    return build_pipeline_config(raw)
