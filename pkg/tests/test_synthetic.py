import numpy as np
import pytest

from conftest import TINY_SCENE
from src.datagen.synthetic import BONES, JOINT_NAMES, SyntheticSceneConfig, gen_synthetic, generate_scene
from src.raster.sampler import SamplerConfig

SAMPLER = SamplerConfig(target_count=64, min_points=0)


def test_amplitude_must_stay_below_a_quarter_of_the_sensor():
    with pytest.raises(ValueError):
        SyntheticSceneConfig(width=64, height=48, amplitude_px=12.0)


def test_expected_window_size_counts_every_bone_and_camera():
    assert TINY_SCENE.window_events == round(10.0 * 2.0 * len(BONES) * 2)
    assert TINY_SCENE.num_joints == len(JOINT_NAMES) == 13


def test_streams_are_sorted_and_inside_the_sensor(tiny_scene):
    assert tiny_scene.cameras == [0, 1]
    for stream in tiny_scene.streams.values():
        assert len(stream) > 0
        assert np.all(np.diff(stream.t) >= 0)
        assert stream.x.max() < TINY_SCENE.width and stream.y.max() < TINY_SCENE.height


def test_scene_generation_is_deterministic(tiny_scene):
    _, again = generate_scene(TINY_SCENE, 6)
    for camera_id in tiny_scene.cameras:
        assert np.array_equal(tiny_scene.streams[camera_id].t, again.streams[camera_id].t)
        assert np.array_equal(tiny_scene.streams[camera_id].x, again.streams[camera_id].x)
    assert np.array_equal(tiny_scene.track.joints, again.track.joints)


def test_scene_covers_the_requested_windows(tiny_scene):
    total = sum(len(s) for s in tiny_scene.streams.values())
    assert total >= 6 * TINY_SCENE.window_events


def test_both_cameras_see_the_body_near_the_image_center(tiny_scene):
    for stream in tiny_scene.streams.values():
        assert abs(np.median(stream.x) - TINY_SCENE.width / 2) < TINY_SCENE.width / 4
        assert abs(np.median(stream.y) - TINY_SCENE.height / 2) < TINY_SCENE.height / 4


def test_stationary_subject_gets_identical_mean_and_last_labels():
    still = TINY_SCENE.model_copy(update={"amplitude_px": 0.0})

    mean = gen_synthetic(still, 4, sampler=SAMPLER, policy="mean").samples
    last = gen_synthetic(still, 4, sampler=SAMPLER, policy="last").samples

    by_view = {(s.window_index, s.camera_id): s for s in mean}
    shared = [(by_view[(s.window_index, s.camera_id)], s) for s in last if (s.window_index, s.camera_id) in by_view]
    assert len(shared) >= 4
    for a, b in shared:
        assert np.array_equal(a.label3d.joints, b.label3d.joints)
        assert np.array_equal(a.label.joints, b.label.joints)


def test_last_label_windows_count_each_camera_alone():
    mean = gen_synthetic(TINY_SCENE, 3, sampler=SAMPLER, policy="mean").samples
    last = gen_synthetic(TINY_SCENE, 3, sampler=SAMPLER, policy="last").samples

    assert {s.raw_event_count for s in last} == {TINY_SCENE.window_events // 2}
    assert {s.camera_id for s in last} == {0, 1}
    assert [(s.t_min, s.t_max) for s in last] != [(s.t_min, s.t_max) for s in mean]


def test_mean_label_of_linear_motion_is_the_pose_at_the_mean_label_time():
    slow = TINY_SCENE.model_copy(update={"segment_ms": 10_000.0})

    dataset = gen_synthetic(slow, 5, sampler=SAMPLER)

    timestamps = dataset.data.track.timestamps
    checked = 0
    for sample in dataset.samples:
        inside = timestamps[(timestamps >= sample.t_min) & (timestamps <= sample.t_max)]
        if len(inside) == 0:
            assert sample.flagged
            continue
        expected = dataset.scene.pose_at(inside.mean())
        np.testing.assert_allclose(sample.label3d.joints, expected, atol=1e-9)
        checked += 1
    assert checked > 0


def test_truth_is_the_pose_at_each_window_midpoint():
    dataset = gen_synthetic(TINY_SCENE, 3, sampler=SAMPLER)

    assert len(dataset.truth) == len(dataset.samples)
    sample = dataset.samples[0]
    np.testing.assert_array_equal(
        dataset.truth[0].joints, dataset.scene.pose_at((sample.t_min + sample.t_max) / 2.0)
    )


def test_zero_windows_are_rejected():
    with pytest.raises(ValueError):
        generate_scene(TINY_SCENE, 0)
