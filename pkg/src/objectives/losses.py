# src/objectives/losses.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from ..utils.errors import DomainError, ShapeMismatchError

TASKS = ("depth", "sem", "nocs", "css", "cam")


@dataclass(frozen=True)
class TaskLossVector:
    """Per-task losses L_t with their log-variances s_t."""

    losses: Mapping[str, float]
    log_vars: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, value in self.losses.items():
            if not math.isfinite(value) or value < 0:
                raise DomainError(f"task loss {name!r} must be finite and >= 0, got {value}")
        missing = set(self.losses) - set(self.log_vars)
        extra = set(self.log_vars) - set(self.losses)
        if extra:
            raise ShapeMismatchError(f"log-variances for unknown tasks: {sorted(extra)}")
        if missing:
            object.__setattr__(self, "log_vars", {**self.log_vars, **{name: 0.0 for name in missing}})

    def stationary_log_vars(self) -> dict[str, float]:
        """s_t = ln L_t, where the combined loss is minimal in every s_t."""
        return {name: math.log(value) for name, value in self.losses.items() if value > 0}


def combine(vector: TaskLossVector) -> tuple[float, dict[str, float]]:
    """total = sum_t exp(-s_t) L_t + s_t and d total / d s_t = 1 - exp(-s_t) L_t."""
    total = 0.0
    grads: dict[str, float] = {}
    for name in vector.losses:
        s = float(vector.log_vars[name])
        weighted = math.exp(-s) * float(vector.losses[name])
        total += weighted + s
        grads[name] = 1.0 - weighted
    return total, grads


def huber(residual, delta: float):
    r = np.abs(np.asarray(residual, dtype=np.float64))
    return np.where(r <= delta, 0.5 * r * r, delta * (r - 0.5 * delta))


def camera_fov_loss(pred: tuple[float, float], gt: tuple[float, float], huber_delta: float = 0.1) -> float:
    for name, angles in (("pred", pred), ("gt", gt)):
        if not all(math.isfinite(a) and 0 < a < math.pi for a in angles):
            raise DomainError(f"{name} field of view {angles} outside (0, pi)")
    if not huber_delta > 0:
        raise DomainError(f"huber_delta must be positive, got {huber_delta}")
    residual = np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)
    return float(np.sum(huber(residual, huber_delta)))


def losses_from_mapping(data: Mapping[str, object], log_vars: Optional[Mapping[str, float]] = None) -> TaskLossVector:
    """Build a loss vector from a JSON-like mapping {task: value} or {task: {"loss": L, "log_var": s}}."""
    losses: dict[str, float] = {}
    variances: dict[str, float] = dict(log_vars or {})
    for name, value in data.items():
        if isinstance(value, Mapping):
            losses[name] = float(value["loss"])
            if "log_var" in value:
                variances[name] = float(value["log_var"])
        else:
            losses[name] = float(value)
    return TaskLossVector(losses=losses, log_vars=variances)
