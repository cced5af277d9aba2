# src/utils/pipeline.py
from __future__ import annotations

from typing import Any, List, Optional

from .. import __version__


def add_step(steps: List[dict], op: str, /, **params: Any) -> None:
    """
    Record a pipeline step. Parameters that are None are left out so the
    recorded step only carries what was actually used.
    """
    step: dict[str, Any] = {"op": op}
    step.update({key: value for key, value in params.items() if value is not None})
    steps.append(step)


def get_steps(steps: List[dict], op: str) -> List[dict]:
    """
    Return the recorded steps for one operation (empty list if none).
    """
    return [step for step in steps if step.get("op") == op]


def build_provenance(
    config_fingerprint: str,
    seed: int,
    command: str,
    steps: Optional[List[dict]] = None,
) -> dict:
    """
    Build the provenance block embedded in every output file. It must be
    byte-identical across reruns and thread counts, so it carries no
    timestamps and no thread count.
    """
    return {
        "tool": "scenekit",
        "version": __version__,
        "command": command,
        "config_sha256": config_fingerprint,
        "seed": int(seed),
        "steps": list(steps or []),
    }
