# tests/helpers.py
import numpy as np

from src.geometry.sim3 import Sim3, matrix_to_quat
from src.gaussians.primitives import GaussianSet


def random_rotation(rng) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_sim3(rng) -> Sim3:
    return Sim3.from_matrix(float(rng.uniform(0.2, 3.0)), random_rotation(rng), rng.uniform(-2, 2, size=3))


def random_gaussians(rng, n: int, frame: str = "camera", depth=(2.0, 4.0)) -> GaussianSet:
    means = np.column_stack([rng.uniform(-0.5, 0.5, n), rng.uniform(-0.5, 0.5, n), rng.uniform(*depth, n)])
    quats = rng.standard_normal((n, 4))
    return GaussianSet(
        means=means,
        log_scales=rng.uniform(-2.5, -1.5, size=(n, 3)),
        quats=quats / np.linalg.norm(quats, axis=1, keepdims=True),
        opacities=rng.uniform(0.3, 0.8, n),
        colors=rng.uniform(0.1, 0.9, size=(n, 3)),
        frame=frame,
    )
