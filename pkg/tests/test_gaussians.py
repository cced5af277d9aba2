# tests/test_gaussians.py
import math

import numpy as np
import pytest

from src.gaussians.canonical import to_camera, to_canonical, transform_gaussians
from src.gaussians.primitives import GaussianSet, materialize, offset_regularizer
from src.geometry.camera import pixel_rays
from src.mapio.bundle import LOG_SCALE, OFFSET, OPACITY_LOGIT, QUAT, DenseMaps
from src.utils.errors import DomainError, ShapeMismatchError

from tests.helpers import random_gaussians, random_sim3


def _maps(rng, height=6, width=8, k=2, depth=None, params=None):
    if params is None:
        params = rng.standard_normal((height, width, k, 14)) * 0.1
        params[..., QUAT] = [1.0, 0.0, 0.0, 0.0]
    return DenseMaps(
        depth=depth if depth is not None else rng.uniform(1.0, 3.0, size=(height, width)),
        embeddings=np.zeros((height, width, 4)),
        nocs=np.zeros((height, width, 3)),
        gauss_params=params,
        fov=(1.0, 0.8),
        vocab=np.eye(2, 4),
        vocab_names=["background", "box-01"],
    )


def _all_pixels(maps):
    return np.argwhere(np.ones((maps.height, maps.width), dtype=bool))


# ---------- materialize ----------

def test_materialize_places_means_at_backprojection_plus_offset(rng):
    maps = _maps(rng)
    pixels = _all_pixels(maps)
    g = materialize(maps, pixels)

    assert len(g) == len(pixels) * maps.k
    assert g.frame == "camera"
    points = pixel_rays(maps.intrinsics)[pixels[:, 0], pixels[:, 1]] * maps.depth[pixels[:, 0], pixels[:, 1], None]
    offsets = maps.gauss_params[pixels[:, 0], pixels[:, 1]][..., OFFSET]
    np.testing.assert_allclose(g.means.reshape(-1, maps.k, 3), points[:, None, :] + offsets, atol=1e-12)
    np.testing.assert_array_equal(g.source_pixels[:4], [[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1]])


def test_materialize_decodes_opacity_and_scale(rng):
    maps = _maps(rng, k=1)
    g = materialize(maps, np.array([[2, 3]]))
    params = maps.gauss_params[2, 3, 0]

    assert g.opacities[0] == pytest.approx(1.0 / (1.0 + math.exp(-params[OPACITY_LOGIT])))
    np.testing.assert_allclose(g.log_scales[0], params[LOG_SCALE])
    np.testing.assert_allclose(g.quats[0], [1.0, 0.0, 0.0, 0.0])


def test_materialize_along_ray_drops_lateral_offset(rng):
    maps = _maps(rng)
    pixels = _all_pixels(maps)
    g = materialize(maps, pixels, offset_mode="along-ray")
    rays = pixel_rays(maps.intrinsics)[pixels[:, 0], pixels[:, 1]]
    points = rays * maps.depth[pixels[:, 0], pixels[:, 1], None]

    moved = g.means.reshape(-1, maps.k, 3) - points[:, None, :]
    lateral = np.cross(moved, rays[:, None, :])
    np.testing.assert_allclose(lateral, 0.0, atol=1e-12)


def test_materialize_keeps_first_k_per_pixel(rng):
    maps = _maps(rng, k=3)
    pixels = _all_pixels(maps)
    full = materialize(maps, pixels)
    first = materialize(maps, pixels, k=1)

    assert len(first) == len(pixels)
    np.testing.assert_array_equal(first.source_pixels[:, 2], 0)
    np.testing.assert_allclose(first.means, full.means.reshape(-1, 3, 3)[:, 0])
    with pytest.raises(ShapeMismatchError, match="k=4"):
        materialize(maps, pixels, k=4)
    with pytest.raises(ShapeMismatchError):
        materialize(maps, pixels, k=0)


def test_materialize_empty_pixel_list(rng):
    g = materialize(_maps(rng), np.zeros((0, 2), dtype=int))
    assert len(g) == 0


def test_materialize_reports_bad_depth_pixel(rng):
    depth = rng.uniform(1.0, 3.0, size=(6, 8))
    depth[4, 5] = 0.0
    maps = _maps(rng, depth=depth)
    with pytest.raises(DomainError, match=r"row=4, col=5"):
        materialize(maps, _all_pixels(maps))


def test_materialize_rejects_zero_quaternion(rng):
    params = rng.standard_normal((6, 8, 2, 14))
    params[..., QUAT] = [1.0, 0.0, 0.0, 0.0]
    params[1, 2, 1, QUAT] = 0.0
    maps = _maps(rng, params=params)
    with pytest.raises(DomainError, match=r"row=1, col=2"):
        materialize(maps, _all_pixels(maps))


def test_materialize_rejects_unknown_offset_mode(rng):
    with pytest.raises(DomainError):
        materialize(_maps(rng), np.array([[0, 0]]), offset_mode="sideways")


# ---------- set ----------

def test_gaussian_set_validation(rng):
    g = random_gaussians(rng, 5)
    with pytest.raises(DomainError):
        g.replace(opacities=np.full(5, 1.5))
    for edge in (0.0, 1.0):
        with pytest.raises(DomainError, match="open interval"):
            g.replace(opacities=np.full(5, edge))
    with pytest.raises(DomainError):
        g.replace(frame="world")
    with pytest.raises(ShapeMismatchError):
        GaussianSet.concat([g, random_gaussians(rng, 2, frame="canonical")])


def test_filter_by_opacity_keeps_threshold(rng):
    g = random_gaussians(rng, 4).replace(opacities=np.array([0.1, 0.5, 0.49, 0.9]))
    kept = g.filter_by_opacity(0.5)
    np.testing.assert_array_equal(kept.opacities, [0.5, 0.9])


def test_covariances_match_per_primitive(rng):
    g = random_gaussians(rng, 6)
    for cov, prim in zip(g.covariances(), g):
        np.testing.assert_allclose(cov, prim.covariance, atol=1e-12)


# ---------- canonicalization ----------

@pytest.mark.parametrize("mode", ["means-only", "full-sim3"])
def test_canonical_round_trip(rng, mode):
    g = random_gaussians(rng, 20)
    pose = random_sim3(rng)
    back = to_camera(to_canonical(g, pose, mode), pose, mode)

    assert back.frame == "camera"
    np.testing.assert_allclose(back.means, g.means, atol=1e-9)
    np.testing.assert_allclose(back.covariances(), g.covariances(), atol=1e-9)


def test_means_only_leaves_shape_parameters(rng):
    g = random_gaussians(rng, 10)
    pose = random_sim3(rng)
    c = to_canonical(g, pose)

    assert c.frame == "canonical"
    np.testing.assert_allclose(c.means, pose.inverse().apply(g.means), atol=1e-12)
    np.testing.assert_array_equal(c.log_scales, g.log_scales)
    np.testing.assert_array_equal(c.quats, g.quats)


def test_full_sim3_scales_covariances(rng):
    g = random_gaussians(rng, 10)
    pose = random_sim3(rng)
    c = to_canonical(g, pose, "full-sim3")

    R = pose.rotation
    expected = np.einsum("ij,njk,lk->nil", R.T, g.covariances(), R.T) / pose.scale**2
    np.testing.assert_allclose(c.covariances(), expected, atol=1e-9)


def test_canonical_frame_checks(rng):
    g = random_gaussians(rng, 3)
    with pytest.raises(DomainError):
        to_camera(g, random_sim3(rng))
    with pytest.raises(DomainError):
        to_canonical(g.replace(frame="canonical"), random_sim3(rng))
    with pytest.raises(DomainError):
        to_canonical(g, random_sim3(rng), mode="scale-only")


def test_transform_gaussians_keeps_frame(rng):
    g = random_gaussians(rng, 3, frame="canonical")
    assert transform_gaussians(g, random_sim3(rng)).frame == "canonical"


# ---------- regularizer ----------

def test_offset_regularizer_hinge():
    offsets = np.array([[0.03, 0.03, 0.0], [0.01, 0.0, 0.0], [-0.1, 0.0, 0.0]])
    assert offset_regularizer(offsets, 0.05) == pytest.approx(0.01 + 0.05)
    assert offset_regularizer(offsets, 1.0) == 0.0
    assert offset_regularizer(offsets, 0.0) == pytest.approx(0.06 + 0.01 + 0.1)


def test_offset_regularizer_rejects_negative_tau():
    with pytest.raises(DomainError):
        offset_regularizer(np.zeros((1, 3)), -0.1)
