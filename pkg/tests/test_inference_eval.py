import numpy as np
import pytest

from conftest import TINY_SCENE
from src.eval.evaluate import evaluate_samples, paired_views, predict_samples
from src.events.windows import WindowSpec
from src.model.pointnet import ModelConfig, init_params
from src.pipeline.dataset import build_samples, window_groups
from src.pipeline.inference import Predictor
from src.raster.rasterizer import RasterConfig
from src.raster.sampler import SamplerConfig

MODEL = ModelConfig(mlp_widths=(4, 8, 8, 16), num_joints=13, width=TINY_SCENE.width, height=TINY_SCENE.height)
SAMPLER = SamplerConfig(target_count=64, min_points=0)
SPEC = WindowSpec.count_total(TINY_SCENE.window_events)


@pytest.fixture(scope="module")
def predictor():
    return Predictor(init_params(MODEL, 0), MODEL, RasterConfig(), SAMPLER)


def test_window_prediction_stays_on_the_sensor(tiny_scene, predictor):
    views = window_groups(tiny_scene, SPEC, max_windows=1)[0]

    skeleton = predictor.predict_window(views[0])

    assert skeleton.num_joints == 13
    assert skeleton.within(TINY_SCENE.width, TINY_SCENE.height)


def test_prediction_is_repeatable(tiny_scene, predictor):
    view = window_groups(tiny_scene, SPEC, max_windows=1)[0][0]
    assert np.array_equal(predictor.predict_window(view).joints, predictor.predict_window(view).joints)


def test_views_are_predicted_per_camera(tiny_scene, predictor):
    views = window_groups(tiny_scene, SPEC, max_windows=1)[0]

    predictions = predictor.predict_views({v.camera_id: v for v in views})

    assert sorted(predictions) == [0, 1]


def test_two_views_give_a_3d_skeleton(tiny_scene, predictor, rig):
    view_a, view_b = window_groups(tiny_scene, SPEC, max_windows=1)[0]

    skeleton, residuals = predictor.predict_3d(rig, view_a, view_b)

    assert skeleton.joints.shape == (13, 3)
    assert residuals.shape == (13,)
    assert np.all(np.isfinite(residuals[skeleton.valid]))


def test_paired_views_need_both_cameras(tiny_scene):
    samples = build_samples(tiny_scene, SPEC, RasterConfig(), SAMPLER, split="test", max_windows=3)
    predictions = predict_samples(init_params(MODEL, 0), MODEL, samples)

    assert len(paired_views(samples, predictions)) == 3
    only_a = [s for s in samples if s.camera_id == 0]
    assert paired_views(only_a, predictions[: len(only_a)]) == []


def test_evaluation_reports_2d_and_3d_errors(tiny_scene, rig):
    samples = build_samples(tiny_scene, SPEC, RasterConfig(), SAMPLER, split="test", max_windows=3)

    report = evaluate_samples(init_params(MODEL, 0), MODEL, samples, rig)

    assert report.two_d.sample_count == len(samples)
    assert report.mpjpe2d > 0.0
    assert report.three_d is not None and report.three_d.dims == 3


def test_evaluation_without_a_rig_skips_3d(tiny_scene):
    samples = build_samples(tiny_scene, SPEC, RasterConfig(), SAMPLER, split="test", max_windows=2)
    assert evaluate_samples(init_params(MODEL, 0), MODEL, samples).mpjpe3d is None


def test_evaluation_needs_samples():
    with pytest.raises(ValueError):
        evaluate_samples(init_params(MODEL, 0), MODEL, [])
