import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TINY_SCENE
from src.common.errors import DegenerateGeometryError
from src.datagen.synthetic import SCENE_TARGET_MM
from src.events.types import CameraGeometry, Skeleton2D
from src.geometry.triangulation import (
    StereoRig,
    look_at_camera,
    noise_study,
    skeleton_to_3d,
    triangulate,
)

RIG = TINY_SCENE.rig()
TARGET = np.asarray(SCENE_TARGET_MM)


def _observe(rig: StereoRig, point):
    return rig.cam_a.project(point)[0][0], rig.cam_b.project(point)[0][0]


def test_exact_observations_recover_the_point(rig):
    point = TARGET + np.array([120.0, -80.0, 300.0])

    result = triangulate(rig, *_observe(rig, point))

    assert np.linalg.norm(result.point - point) < 1e-6
    assert result.residual < 1e-9


def test_swapping_the_cameras_gives_the_same_point(rig):
    point = TARGET + np.array([-200.0, 50.0, -400.0])
    pa, pb = _observe(rig, point)

    forward = triangulate(rig, pa, pb).point
    swapped = triangulate(rig.swapped(), pb, pa).point

    np.testing.assert_allclose(forward, swapped, atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.tuples(*[st.floats(-500.0, 500.0, allow_nan=False)] * 3))
def test_triangulation_inverts_projection_inside_the_capture_volume(offset):
    point = TARGET + np.asarray(offset)
    result = triangulate(RIG, *_observe(RIG, point))
    assert np.linalg.norm(result.point - point) < 1e-6


def test_coincident_cameras_are_degenerate():
    camera = CameraGeometry.default(64, 48)
    with pytest.raises(DegenerateGeometryError):
        triangulate(StereoRig(camera, camera), (32.0, 24.0), (32.0, 24.0))


def test_parallel_rays_meet_at_infinity():
    K = np.array([[50.0, 0.0, 32.0], [0.0, 50.0, 24.0], [0.0, 0.0, 1.0]])
    cam_a = CameraGeometry(K @ np.hstack([np.eye(3), np.zeros((3, 1))]), 64, 48)
    cam_b = CameraGeometry(K @ np.hstack([np.eye(3), np.array([[-100.0], [0.0], [0.0]])]), 64, 48)

    with pytest.raises(DegenerateGeometryError, match="infinito"):
        triangulate(StereoRig(cam_a, cam_b), (32.0, 24.0), (32.0, 24.0))


def test_non_finite_observations_are_rejected(rig):
    with pytest.raises(ValueError):
        triangulate(rig, (np.nan, 1.0), (1.0, 1.0))


def test_skeleton_triangulation_masks_failed_joints(rig):
    points = TARGET + np.array([[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [0.0, 0.0, 200.0]])
    uv_a, _ = rig.cam_a.project(points)
    uv_b, _ = rig.cam_b.project(points)
    uv_b[2] = np.nan

    result = skeleton_to_3d(rig, Skeleton2D(uv_a), Skeleton2D(uv_b, [True, False, True]))

    assert result.skeleton.valid.tolist() == [True, False, False]
    np.testing.assert_allclose(result.skeleton.joints[0], points[0], atol=1e-6)
    assert sorted(result.diagnostics) == [1, 2]
    assert np.isnan(result.residuals[1:]).all()


def test_views_with_different_joint_counts_are_rejected(rig):
    with pytest.raises(ValueError):
        skeleton_to_3d(rig, Skeleton2D([[1.0, 1.0]]), Skeleton2D([[1.0, 1.0], [2.0, 2.0]]))


def test_look_at_camera_centers_the_target_with_y_down():
    camera = look_at_camera((0.0, -1000.0, 0.0), (0.0, 0.0, 0.0), focal=100.0, width=200, height=100)

    uv, w = camera.project(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 100.0], [100.0, 0.0, 0.0]]))

    np.testing.assert_allclose(camera.center, [0.0, -1000.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(uv[0], [100.0, 50.0], atol=1e-9)
    assert uv[1, 1] < 50.0
    assert uv[2, 0] > 100.0
    assert np.all(w > 0)


def test_look_at_camera_rejects_a_vertical_view():
    with pytest.raises(ValueError):
        look_at_camera((0.0, 0.0, 1000.0), (0.0, 0.0, 0.0), focal=100.0)


def test_noise_study_error_grows_with_pixel_noise(rig):
    points = TARGET + np.random.default_rng(0).uniform(-300, 300, (50, 3))

    clean = noise_study(rig, points, sigma_px=0.0)
    small = noise_study(rig, points, sigma_px=0.5, seed=1)
    large = noise_study(rig, points, sigma_px=2.0, seed=1)

    assert clean.max() < 1e-6
    assert 0.0 < small.mean() < large.mean()
    np.testing.assert_array_equal(small, noise_study(rig, points, sigma_px=0.5, seed=1))


def test_random_rigs_recover_random_points():
    rng = np.random.default_rng(21)
    for _ in range(1000):
        azimuth_a = rng.uniform(0.0, 2 * np.pi)
        azimuth_b = azimuth_a + rng.uniform(np.radians(20), np.radians(160)) * rng.choice([-1, 1])
        cameras = []
        for azimuth in (azimuth_a, azimuth_b):
            distance = rng.uniform(2000.0, 5000.0)
            center = distance * np.array([np.cos(azimuth), np.sin(azimuth), rng.uniform(-0.3, 0.3)])
            cameras.append(look_at_camera(center, (0.0, 0.0, 0.0), focal=rng.uniform(200.0, 1000.0)))
        rig = StereoRig(*cameras)
        point = rng.uniform(-500.0, 500.0, 3)

        result = triangulate(rig, *_observe(rig, point))

        assert np.linalg.norm(result.point - point) <= 1e-6
        assert result.residual <= 1e-9
