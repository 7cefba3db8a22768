import os

import numpy as np
import pytest

from conftest import make_points, make_sample
from src.common.errors import TrainingDivergedError
from src.datagen.synthetic import SyntheticSceneConfig, gen_synthetic
from src.events.types import RasterizedPoints
from src.labels.simdr import CodecConfig
from src.model.pointnet import ModelConfig
from src.model.trainer import TrainConfig, prepare_samples, train
from src.pipeline.inference import predict_skeleton
from src.raster.sampler import SamplerConfig

CODEC = CodecConfig(sigma=1.0, width=10, height=10)


def _one_sample():
    return make_sample(make_points(32, 10, 10), [[2.0, 3.0], [7.0, 5.0]])


def test_single_sample_is_overfit(tiny_model):
    sample = _one_sample()
    cfg = TrainConfig(epochs=200, lr_schedule={0: 1e-2}, progress=False)

    result = train([sample], tiny_model, cfg, CODEC)

    assert result.final_loss < 0.1 * result.initial_loss
    predicted = predict_skeleton(sample.points, result.params, tiny_model)
    assert predicted.joints.tolist() == [[2.0, 3.0], [7.0, 5.0]]


def test_curve_starts_with_the_initial_loss_and_counts_steps(tiny_model):
    samples = [_one_sample(), make_sample(make_points(20, 10, 10, seed=1), [[4, 4], [1, 8]])]
    cfg = TrainConfig(epochs=3, lr_schedule={0: 1e-3}, progress=False)

    result = train(samples, tiny_model, cfg, CODEC, val_set=samples)

    assert [p.epoch for p in result.curve] == [0, 1, 2, 3]
    assert [p.step for p in result.curve] == [0, 2, 4, 6]
    assert all(p.mpjpe2d is not None for p in result.curve)


def test_training_is_deterministic_for_a_seed(tiny_model):
    samples = [_one_sample(), make_sample(make_points(20, 10, 10, seed=1), [[4, 4], [1, 8]])]
    cfg = TrainConfig(epochs=4, lr_schedule={0: 1e-3}, seed=9, progress=False)

    first = train(samples, tiny_model, cfg, CODEC)
    second = train(samples, tiny_model, cfg, CODEC)

    assert [p.loss for p in first.curve] == [p.loss for p in second.curve]
    assert all(np.array_equal(first.params[n], second.params[n]) for n in first.params.names())


def test_nan_loss_stops_training_with_the_last_good_parameters(tiny_model):
    clean = make_points(8, 10, 10)
    broken = RasterizedPoints(
        clean.x, clean.y, np.full(8, np.nan), clean.p_acc, clean.e_cnt, clean.slice_index
    )
    cfg = TrainConfig(epochs=2, progress=False)

    with pytest.raises(TrainingDivergedError) as info:
        train([make_sample(broken, [[1, 1], [2, 2]])], tiny_model, cfg, CODEC)

    assert (info.value.epoch, info.value.step) == (1, 0)
    assert np.isfinite(info.value.last_good["mlp0.weight"]).all()


def test_each_epoch_uses_the_scheduled_rate(tiny_model):
    seen = []
    cfg = TrainConfig(epochs=4, lr_schedule={0: 1e-2, 2: 1e-3}, progress=False)

    train([_one_sample()], tiny_model, cfg, CODEC, on_epoch=lambda point, lr: seen.append((point.epoch, lr)))

    assert seen == [(1, 1e-2), (2, 1e-2), (3, 1e-3), (4, 1e-3)]


def test_codec_and_model_sizes_must_agree(tiny_model):
    with pytest.raises(ValueError):
        prepare_samples([_one_sample()], tiny_model, CodecConfig(width=12, height=10))


def test_joint_count_must_match_the_model(tiny_model):
    sample = make_sample(make_points(8, 10, 10), [[1, 1], [2, 2], [3, 3]])
    with pytest.raises(ValueError):
        prepare_samples([sample], tiny_model, CODEC)


def test_empty_training_set_is_rejected(tiny_model):
    with pytest.raises(ValueError):
        train([], tiny_model, TrainConfig(progress=False), CODEC)


@pytest.mark.slow
@pytest.mark.skipif(not os.getenv("EVPC_RUN_SLOW"), reason="EVPC_RUN_SLOW no está activo")
def test_desk_scale_training_reaches_pixel_accuracy():
    scene = SyntheticSceneConfig()
    sampler = SamplerConfig(target_count=1024)
    train_set = gen_synthetic(scene, 500, sampler=sampler).samples
    test_set = gen_synthetic(scene.model_copy(update={"seed": 1}), 100, sampler=sampler, split="test").samples
    model = ModelConfig(num_joints=scene.num_joints, width=scene.width, height=scene.height)
    codec = CodecConfig(width=scene.width, height=scene.height)

    result = train(train_set, model, TrainConfig(progress=False), codec, val_set=test_set)

    assert len(result.curve) == 31
    assert result.final_loss < 0.2 * result.initial_loss
    assert result.final_mpjpe2d < 3.0
