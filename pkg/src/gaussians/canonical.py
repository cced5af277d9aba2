# src/gaussians/canonical.py
from __future__ import annotations

import math
from typing import Literal

from ..geometry.sim3 import Sim3, quat_conjugate, quat_multiply
from ..utils.errors import DomainError
from .primitives import Frame, GaussianSet

CanonicalMode = Literal["means-only", "full-sim3"]


def _transform(g: GaussianSet, pose: Sim3, mode: CanonicalMode, frame: Frame) -> GaussianSet:
    if mode not in ("means-only", "full-sim3"):
        raise DomainError(f"unknown canonicalization mode {mode!r}")
    if len(g) == 0:
        return g.replace(frame=frame)
    changes = {"means": pose.apply(g.means), "frame": frame}
    if mode == "full-sim3":
        changes["quats"] = quat_multiply(pose.quat, g.unit_quats())
        changes["log_scales"] = g.log_scales + math.log(pose.scale)
    return g.replace(**changes)


def to_canonical(g: GaussianSet, pose: Sim3, mode: CanonicalMode = "means-only") -> GaussianSet:
    """
    Map camera-frame Gaussians into the canonical frame of `pose`
    (canonical -> camera). `means-only` moves the means by the inverse pose;
    `full-sim3` also rotates by R^T and divides the scales by s.
    """
    if g.frame != "camera":
        raise DomainError(f"to_canonical expects camera-frame gaussians, got {g.frame!r}")
    inverse = pose.inverse()
    return _transform(g, inverse, mode, "canonical")


def to_camera(g: GaussianSet, pose: Sim3, mode: CanonicalMode = "means-only") -> GaussianSet:
    if g.frame != "canonical":
        raise DomainError(f"to_camera expects canonical-frame gaussians, got {g.frame!r}")
    return _transform(g, pose, mode, "camera")


def transform_gaussians(g: GaussianSet, transform: Sim3) -> GaussianSet:
    """Apply a Sim3 to every parameter, frame tag unchanged."""
    return _transform(g, transform, "full-sim3", g.frame)
