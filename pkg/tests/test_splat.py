# tests/test_splat.py
import math

import numpy as np
import pytest

from src.gaussians.canonical import transform_gaussians
from src.gaussians.primitives import GaussianSet
from src.geometry.camera import backproject, intrinsics_from_fov
from src.geometry.sim3 import Sim3, look_at, sim3_compose
from src.oracle.renders import canonical_gt_renders
from src.oracle.scene import PrimitiveObject
from src.splat.css import css_fit, css_loss, random_init
from src.splat.rasterizer import RenderTarget, read_png, render, render_grad, render_views, write_png
from src.splat.ssim import psnr, ssim, ssim_grad
from src.splat.views import CUBE_CENTER, canonical_views
from src.utils.config import CssSettings, RenderSettings
from src.utils.errors import DivergenceError, DomainError, ShapeMismatchError

from tests.helpers import random_gaussians, random_rotation

EXACT = RenderSettings(cull_sigma=None)


@pytest.fixture
def small_target():
    return RenderTarget(intrinsics_from_fov(math.radians(60.0), math.radians(45.0), 16, 12), background=(0.2, 0.3, 0.4))


def _single(mean, color=(1.0, 0.0, 0.0), opacity=1.0 - 1e-9, log_scale=-1.0):
    return GaussianSet(
        means=np.array([mean]),
        log_scales=np.full((1, 3), log_scale),
        quats=np.array([[1.0, 0.0, 0.0, 0.0]]),
        opacities=np.array([opacity]),
        colors=np.array([color]),
    )


# ---------- forward ----------

def test_empty_set_renders_background(small_target):
    image = render(GaussianSet.empty(), small_target)
    assert image.shape == (12, 16, 3)
    np.testing.assert_allclose(image, np.broadcast_to([0.2, 0.3, 0.4], image.shape))


def test_opaque_gaussian_saturates_at_alpha_max(small_target):
    mean = backproject(8.0, 6.0, 3.0, small_target.intrinsics)
    image = render(_single(mean), small_target, EXACT)
    expected = 0.99 * np.array([1.0, 0.0, 0.0]) + 0.01 * np.array([0.2, 0.3, 0.4])
    np.testing.assert_allclose(image[6, 8], expected, atol=1e-12)


def test_single_gaussian_matches_closed_form(small_target):
    K = small_target.intrinsics
    depth, log_scale, opacity = 3.0, -2.0, 0.6
    g = _single(backproject(K.c_x, K.c_y, depth, K), opacity=opacity, log_scale=log_scale)
    image = render(g, small_target, EXACT)

    s2 = math.exp(2.0 * log_scale)
    var_u = K.f_w**2 * s2 / depth**2 + EXACT.lowpass
    var_v = K.f_h**2 * s2 / depth**2 + EXACT.lowpass
    v, u = np.mgrid[0:K.height, 0:K.width].astype(np.float64)
    alpha = opacity * np.exp(-0.5 * ((u - K.c_x) ** 2 / var_u + (v - K.c_y) ** 2 / var_v))
    expected = alpha[..., None] * [1.0, 0.0, 0.0] + (1.0 - alpha[..., None]) * [0.2, 0.3, 0.4]

    np.testing.assert_allclose(image, expected, atol=1e-12)
    peak = np.unravel_index(np.argmax(alpha), alpha.shape)
    assert image[peak][0] == pytest.approx(alpha[peak] + (1.0 - alpha[peak]) * 0.2, abs=1e-12)


def test_nearer_gaussian_wins(small_target):
    K = small_target.intrinsics
    near = _single(backproject(8.0, 6.0, 2.0, K), color=(1.0, 0.0, 0.0))
    far = _single(backproject(8.0, 6.0, 4.0, K), color=(0.0, 0.0, 1.0))
    for g in (GaussianSet.concat([near, far]), GaussianSet.concat([far, near])):
        pixel = render(g, small_target, EXACT)[6, 8]
        assert pixel[0] > 0.98
        assert pixel[2] < 0.02


def test_gaussians_behind_camera_are_dropped(small_target):
    image = render(_single([0.0, 0.0, -2.0]), small_target)
    np.testing.assert_allclose(image[..., 0], 0.2)


def test_render_independent_of_threads_and_tiles(rng, small_target):
    g = random_gaussians(rng, 30)
    base = render(g, small_target, RenderSettings(tile_size=16))
    pooled = render(g, small_target, RenderSettings(tile_size=4), threads=4)
    np.testing.assert_array_equal(base, pooled)


def test_culling_matches_exact_render(rng, small_target):
    g = random_gaussians(rng, 30)
    culled = render(g, small_target, RenderSettings(cull_sigma=6.0, tile_size=4))
    exact = render(g, small_target, RenderSettings(cull_sigma=None, tile_size=4))
    np.testing.assert_allclose(culled, exact, atol=1e-6)


def test_render_invariant_under_joint_rigid_motion(rng, small_target):
    g = random_gaussians(rng, 25)
    camera = RenderTarget(small_target.intrinsics, Sim3(translation=[0.1, -0.2, 0.3]), small_target.background)
    motion = Sim3.from_matrix(1.0, random_rotation(rng), rng.uniform(-1.0, 1.0, size=3))
    moved_camera = RenderTarget(
        small_target.intrinsics, sim3_compose(camera.extrinsic, motion.inverse()), small_target.background
    )

    np.testing.assert_allclose(
        render(transform_gaussians(g, motion), moved_camera, EXACT), render(g, camera, EXACT), atol=1e-9
    )


def test_render_rejects_bad_background(small_target):
    target = RenderTarget(small_target.intrinsics, background=(2.0, 0.0, 0.0))
    with pytest.raises(DomainError):
        render(GaussianSet.empty(), target)


# ---------- backward ----------

def _finite_difference(g, target, weights, name, eps=1e-6):
    values = getattr(g, name)
    numeric = np.zeros_like(values)
    for index in np.ndindex(values.shape):
        plus, minus = values.copy(), values.copy()
        plus[index] += eps
        minus[index] -= eps
        up = np.sum(weights * render(g.replace(**{name: plus}), target, EXACT))
        down = np.sum(weights * render(g.replace(**{name: minus}), target, EXACT))
        numeric[index] = (up - down) / (2.0 * eps)
    return numeric


@pytest.mark.parametrize("name", ["means", "log_scales", "quats", "opacities", "colors"])
def test_render_grad_matches_finite_differences(rng, small_target, name):
    g = random_gaussians(rng, 4).replace(log_scales=rng.uniform(-1.5, -1.0, size=(4, 3)))
    weights = rng.standard_normal(small_target.shape)

    analytic = getattr(render_grad(g, small_target, weights, EXACT), name)
    numeric = _finite_difference(g, small_target, weights, name)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


def test_render_grad_checks_gradient_shape(rng, small_target):
    with pytest.raises(ShapeMismatchError):
        render_grad(random_gaussians(rng, 2), small_target, np.zeros((3, 3, 3)))


def test_png_round_trip_within_quantization(tmp_path, rng, small_target):
    image = render(random_gaussians(rng, 10), small_target)
    write_png(image, tmp_path / "view.png")
    assert np.max(np.abs(read_png(tmp_path / "view.png") - image)) <= 0.5 / 255.0 + 1e-12


# ---------- image metrics ----------

def test_ssim_identity_and_difference(rng):
    a = rng.random((16, 16, 3))
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, rng.random((16, 16, 3))) < 0.5


def test_ssim_grad_matches_finite_differences(rng):
    a = rng.random((12, 12, 3))
    b = rng.random((12, 12, 3))
    value, grad = ssim_grad(a, b)
    assert value == pytest.approx(ssim(a, b))
    eps = 1e-6
    for index in [(0, 0, 0), (5, 6, 1), (11, 3, 2), (6, 6, 0)]:
        plus, minus = b.copy(), b.copy()
        plus[index] += eps
        minus[index] -= eps
        numeric = (ssim(a, plus) - ssim(a, minus)) / (2.0 * eps)
        assert grad[index] == pytest.approx(numeric, rel=1e-4, abs=1e-8)


def test_ssim_needs_full_window():
    with pytest.raises(DomainError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_psnr_values():
    a = np.zeros((4, 4, 3))
    assert psnr(a, a) == math.inf
    assert psnr(a, np.full((4, 4, 3), 0.1)) == pytest.approx(20.0)
    with pytest.raises(ShapeMismatchError):
        psnr(a, np.zeros((4, 4)))


# ---------- views ----------

@pytest.mark.parametrize("n", [12, 42, 20])
def test_canonical_views_look_at_cube_center(n):
    views = canonical_views(n, resolution=32, radius=2.0)
    assert len(views) == n
    np.testing.assert_allclose(np.linalg.norm(views.directions, axis=1), 1.0)
    for ext in views.extrinsics:
        np.testing.assert_allclose(ext.apply(CUBE_CENTER), [0.0, 0.0, 2.0], atol=1e-12)


def test_icosphere_views_are_distinct():
    directions = canonical_views(42, resolution=16).directions
    gram = directions @ directions.T - 2.0 * np.eye(42)
    assert gram.max() < 0.99


def test_canonical_views_validation():
    with pytest.raises(DomainError):
        canonical_views(3)
    with pytest.raises(DomainError):
        canonical_views(12, radius=0.0)


# ---------- canonical supervision ----------

@pytest.fixture
def canonical_object(rng):
    return random_init(8, seed=1).replace(
        colors=rng.uniform(0.0, 1.0, size=(8, 3)),
        log_scales=np.full((8, 3), math.log(0.12)),
        opacities=np.full(8, 0.8),
    )


def test_random_init_is_seeded():
    a, b = random_init(20, seed=4), random_init(20, seed=4)
    np.testing.assert_array_equal(a.means, b.means)
    assert a.frame == "canonical"
    assert np.all((a.means >= 0) & (a.means <= 1))


def test_css_loss_is_zero_on_own_renders(canonical_object):
    views = canonical_views(12, resolution=16)
    gt = render_views(canonical_object, views.targets())
    report = css_loss(canonical_object, gt, views)

    assert report.total == pytest.approx(0.0, abs=1e-9)
    assert len(report.l1) == 12


def test_css_loss_checks_view_count(canonical_object):
    views = canonical_views(12, resolution=16)
    with pytest.raises(ShapeMismatchError):
        css_loss(canonical_object, [np.zeros((16, 16, 3))], views)


def test_css_fit_never_increases_loss(canonical_object, rng):
    views = canonical_views(12, resolution=16)
    gt = render_views(canonical_object, views.targets())
    start = canonical_object.replace(means=canonical_object.means + rng.normal(0.0, 0.05, size=(8, 3)))

    settings = CssSettings(views=12, resolution=16, steps=10, learning_rate=0.005)
    result = css_fit(start, gt, views, settings)

    assert result.gaussians.frame == "canonical"
    assert all(b <= a for a, b in zip(result.trace, result.trace[1:]))
    assert result.final_loss < result.initial_loss
    assert result.accepted_steps + result.rejected_steps <= 10


def test_css_fit_raises_on_non_finite_loss(canonical_object):
    views = canonical_views(12, resolution=16)
    gt = [np.full((16, 16, 3), np.nan)] * 12
    with pytest.raises(DivergenceError) as info:
        css_fit(canonical_object, gt, views, CssSettings(steps=3))
    assert len(info.value.trace) == 1


def _box_fit(count, views, resolution, steps, seed=0):
    """Fit `count` random Gaussians to ray-traced canonical views of a box; PSNR before/after, held-out too."""
    box = PrimitiveObject(0, "box", 1, "box", Sim3(), ((0.9, 0.6, 0.2), (0.2, 0.3, 0.8)))
    view_set = canonical_views(views, resolution=resolution)
    targets = view_set.targets()
    gt = canonical_gt_renders(box, targets)
    # seen from behind and below, off every rig direction
    behind = np.array([0.3, -0.4, -1.0]) / np.linalg.norm([0.3, -0.4, -1.0])
    held_out = RenderTarget(view_set.intrinsics, look_at(CUBE_CENTER + view_set.radius * behind, CUBE_CENTER))
    held_out_gt = canonical_gt_renders(box, [held_out])[0]

    def score(g):
        mean = np.mean([psnr(image, ref) for image, ref in zip(render_views(g, targets), gt)])
        return mean, psnr(render(g, held_out), held_out_gt)

    start = random_init(count, seed=seed)
    css = CssSettings(views=views, resolution=resolution, steps=steps, learning_rate=0.01)
    fitted = css_fit(start, gt, view_set, css).gaussians
    return score(start), score(fitted)


def test_css_fit_improves_seen_and_unseen_views():
    (before, held_before), (after, held_after) = _box_fit(count=60, views=12, resolution=24, steps=60)

    assert after > before + 1.0
    assert held_after > held_before


@pytest.mark.slow
def test_css_fit_reaches_amodal_quality_on_full_rig():
    (before, held_before), (after, held_after) = _box_fit(count=500, views=42, resolution=128, steps=2000)

    assert after - before >= 10.0
    assert held_after > held_before
