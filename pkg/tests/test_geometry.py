# tests/test_geometry.py
import math

import numpy as np
import pytest

from src.geometry.camera import (
    CameraIntrinsics,
    backproject,
    backproject_map,
    fov_from_intrinsics,
    intrinsics_from_fov,
    pixel_rays,
    project,
)
from src.geometry.sim3 import (
    Sim3,
    look_at,
    matrix_to_quat,
    quat_multiply,
    quat_to_matrix,
    sim3_compose,
    sim3_apply,
    sim3_identity,
    sim3_inverse,
)
from src.utils.errors import DomainError

from tests.helpers import random_sim3


def test_intrinsics_from_fov_square_ninety_degrees():
    K = intrinsics_from_fov(math.pi / 2, math.pi / 2, 640, 480)

    assert K.f_w == pytest.approx(320.0)
    assert K.f_h == pytest.approx(240.0)
    assert (K.c_x, K.c_y) == (320.0, 240.0)


def test_fov_round_trip(camera):
    theta = fov_from_intrinsics(camera)
    assert theta[0] == pytest.approx(math.radians(60.0), abs=1e-12)
    assert theta[1] == pytest.approx(math.radians(45.0), abs=1e-12)


@pytest.mark.parametrize("theta", [0.0, math.pi, -0.1, float("nan")])
def test_intrinsics_from_fov_rejects_bad_angles(theta):
    with pytest.raises(DomainError):
        intrinsics_from_fov(theta, 1.0, 10, 10)


def test_camera_requires_positive_focal_length():
    with pytest.raises(DomainError):
        CameraIntrinsics(f_w=0.0, f_h=1.0, c_x=0.0, c_y=0.0, width=4, height=4)


def test_backproject_principal_point_is_on_axis(camera):
    p = backproject(camera.c_x, camera.c_y, 2.5, camera)
    np.testing.assert_allclose(p, [0.0, 0.0, 2.5])


def test_backproject_then_project_recovers_pixel(camera):
    p = backproject(3.0, 40.0, 1.7, camera)
    np.testing.assert_allclose(project(p, camera), [3.0, 40.0], atol=1e-12)


def test_backproject_rejects_nonpositive_depth(camera):
    with pytest.raises(DomainError):
        backproject(1.0, 1.0, 0.0, camera)


def test_pixel_rays_have_unit_z_and_match_backproject(camera):
    rays = pixel_rays(camera)

    assert rays.shape == (camera.height, camera.width, 3)
    np.testing.assert_array_equal(rays[..., 2], 1.0)
    depth = np.full((camera.height, camera.width), 2.0)
    points = backproject_map(depth, camera)
    np.testing.assert_allclose(points[5, 7], backproject(7, 5, 2.0, camera))


def test_sim3_compose_with_inverse_is_identity(rng):
    for _ in range(20):
        pose = random_sim3(rng)
        ident = sim3_compose(pose, pose.inverse())
        np.testing.assert_allclose(ident.matrix(), np.eye(4), atol=1e-9)


def test_sim3_apply_matches_matrix(rng):
    pose = random_sim3(rng)
    x = rng.standard_normal((10, 3))
    homog = np.hstack([x, np.ones((10, 1))]) @ pose.matrix().T

    np.testing.assert_allclose(pose.apply(x), homog[:, :3], atol=1e-12)


def test_sim3_quaternion_is_canonical_and_unit():
    pose = Sim3(scale=2.0, quat=np.array([-2.0, 0.0, 0.0, 0.0]))

    np.testing.assert_allclose(pose.quat, [1.0, 0.0, 0.0, 0.0])
    assert pose.scale == 2.0
    np.testing.assert_allclose(pose.rotation, sim3_identity().rotation)


def test_sim3_rejects_nonpositive_scale():
    with pytest.raises(DomainError):
        Sim3(scale=0.0)


def test_sim3_dict_round_trip(rng):
    pose = random_sim3(rng)
    assert Sim3.from_dict(pose.to_dict()).allclose(pose, atol=1e-12)


def test_quaternion_matrix_round_trip_and_product(rng):
    a, b = random_sim3(rng), random_sim3(rng)

    np.testing.assert_allclose(quat_to_matrix(matrix_to_quat(a.rotation)), a.rotation, atol=1e-12)
    np.testing.assert_allclose(
        quat_to_matrix(quat_multiply(a.quat, b.quat)), a.rotation @ b.rotation, atol=1e-12
    )


def test_look_at_puts_target_on_optical_axis():
    eye = np.array([1.0, 2.0, -3.0])
    target = np.array([0.5, 0.5, 0.5])
    view = look_at(eye, target)

    cam_target = view.apply(target)
    np.testing.assert_allclose(cam_target[:2], 0.0, atol=1e-12)
    assert cam_target[2] == pytest.approx(np.linalg.norm(target - eye))
    np.testing.assert_allclose(view.apply(eye), 0.0, atol=1e-12)


def test_look_at_straight_down_does_not_degenerate():
    view = look_at(np.array([0.5, 2.5, 0.5]), np.array([0.5, 0.5, 0.5]))
    np.testing.assert_allclose(view.rotation @ view.rotation.T, np.eye(3), atol=1e-12)


def test_sim3_apply_then_inverse_round_trips(rng):
    for _ in range(20):
        t = random_sim3(rng)
        x = rng.standard_normal((50, 3))
        y = sim3_apply(t, x)
        np.testing.assert_allclose(y, t.scale * x @ t.rotation.T + t.translation, atol=1e-12)
        np.testing.assert_allclose(sim3_apply(sim3_inverse(t), y), x, atol=1e-9)
