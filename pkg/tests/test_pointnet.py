import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_points
from src.common.errors import ShapeError, StaleCacheError
from src.model.pointnet import (
    DESK_SCALE,
    ModelConfig,
    backward,
    canonical_order,
    count_params_macs,
    forward,
    init_params,
    kl_loss,
    log_softmax,
    param_names,
    point_features,
)

GRAD_CFG = ModelConfig(in_channels=3, mlp_widths=(3, 4, 4, 5), num_joints=2, width=6, height=5)
KINK_MARGIN = 1e-2


def _targets(cfg: ModelConfig, rng: np.random.Generator):
    tx = rng.random((cfg.num_joints, cfg.width)) + 0.1
    ty = rng.random((cfg.num_joints, cfg.height)) + 0.1
    return tx / tx.sum(axis=1, keepdims=True), ty / ty.sum(axis=1, keepdims=True)


def _far_from_kinks(cache) -> bool:
    """No ReLU input near zero and no max-pool runner-up near the maximum."""

    if min(np.abs(z).min() for z in cache.pre_activations) <= KINK_MARGIN:
        return False
    cascade = np.concatenate(cache.activations[1:], axis=1)
    top = np.sort(cascade, axis=0)[-2:]
    return bool(np.all((top[1] <= 0.0) | (top[1] - top[0] > KINK_MARGIN)))


def _smooth_case(cfg: ModelConfig, n_points: int = 7):
    for seed in range(500):
        rng = np.random.default_rng(seed)
        X = rng.random((n_points, cfg.in_channels))
        params = init_params(cfg, seed)
        _, _, cache = forward(X, params, cfg)
        if _far_from_kinks(cache):
            return X, params, _targets(cfg, rng)
    raise AssertionError("no hay semilla lejos de los puntos no diferenciables")


def test_analytic_gradient_matches_central_differences():
    cfg = GRAD_CFG
    X, params, (tx, ty) = _smooth_case(cfg)

    def loss_of(p):
        lx, ly, _ = forward(X, p, cfg)
        return kl_loss(lx, ly, tx, ty)[0]

    lx, ly, cache = forward(X, params, cfg)
    _, gx, gy = kl_loss(lx, ly, tx, ty)
    analytic = backward(cache, gx, gy, params)

    eps = 1e-4
    for name in param_names(cfg):
        numeric = np.zeros_like(params[name])
        for index in np.ndindex(params[name].shape):
            plus, minus = params.copy(), params.copy()
            plus.arrays[name][index] += eps
            minus.arrays[name][index] -= eps
            numeric[index] = (loss_of(plus) - loss_of(minus)) / (2 * eps)
        diff = np.linalg.norm(analytic[name] - numeric)
        scale = max(np.linalg.norm(analytic[name]) + np.linalg.norm(numeric), 1e-8)
        assert diff / scale <= 1e-4, name


def test_gradients_cover_every_parameter_with_matching_shapes(tiny_model):
    params = init_params(tiny_model, 0)
    X = np.random.default_rng(0).random((9, 5))
    lx, ly, cache = forward(X, params, tiny_model)

    grads = backward(cache, np.ones_like(lx), np.ones_like(ly))

    assert list(grads) == params.names()
    assert all(grads[name].shape == params[name].shape for name in grads)


def test_logit_shapes_follow_the_heads(tiny_model):
    params = init_params(tiny_model, 1)
    lx, ly, _ = forward(np.random.default_rng(1).random((13, 5)), params, tiny_model)
    assert lx.shape == (2, 10) and ly.shape == (2, 10)


def test_permuted_points_give_identical_logits():
    cfg = ModelConfig(in_channels=5, mlp_widths=(8, 8, 16, 16), num_joints=3, width=12, height=9)
    params = init_params(cfg, 3)
    rng = np.random.default_rng(11)
    for _ in range(200):
        X = rng.random((int(rng.integers(1, 64)), 5))
        # duplicated rows exercise the tie rule
        X = np.concatenate([X, X[: len(X) // 3]])
        lx, ly, _ = forward(X, params, cfg)
        for _ in range(5):
            perm = rng.permutation(len(X))
            px, py, _ = forward(X[perm], params, cfg)
            assert np.array_equal(lx, px) and np.array_equal(ly, py)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(*[st.floats(0, 1, allow_nan=False)] * 3), min_size=1, max_size=30))
def test_canonical_order_sorts_rows_lexicographically(rows):
    X = np.asarray(rows, dtype=np.float64)
    ordered = [tuple(r) for r in X[canonical_order(X)]]
    assert ordered == sorted(ordered)


def test_wrong_channel_count_names_the_input_layer(tiny_model):
    params = init_params(tiny_model, 0)
    with pytest.raises(ShapeError) as info:
        forward(np.zeros((4, 3)), params, tiny_model)
    assert info.value.layer == "input"


def test_mismatched_weights_name_their_layer(tiny_model):
    params = init_params(tiny_model, 0).copy()
    params.arrays["mlp0.weight"] = np.zeros((6, 4))
    with pytest.raises(ShapeError) as info:
        forward(np.zeros((4, 5)), params, tiny_model)
    assert info.value.layer == "mlp0"

    params = init_params(tiny_model, 0).copy()
    params.arrays["head_y.weight"] = np.zeros((3, 3))
    with pytest.raises(ShapeError) as info:
        forward(np.zeros((4, 5)), params, tiny_model)
    assert info.value.layer == "head_y"


def test_empty_point_set_is_rejected(tiny_model):
    with pytest.raises(ShapeError):
        forward(np.zeros((0, 5)), init_params(tiny_model, 0), tiny_model)


def test_backward_rejects_a_stale_cache(tiny_model):
    params = init_params(tiny_model, 0)
    lx, ly, cache = forward(np.ones((3, 5)), params, tiny_model)

    params.touch()

    with pytest.raises(StaleCacheError):
        backward(cache, lx, ly)


def test_backward_rejects_cache_from_other_parameters(tiny_model):
    params = init_params(tiny_model, 0)
    lx, ly, cache = forward(np.ones((3, 5)), params, tiny_model)
    with pytest.raises(StaleCacheError):
        backward(cache, lx, ly, params.copy())


def test_kl_loss_vanishes_when_prediction_matches_target():
    rng = np.random.default_rng(0)
    tx, ty = _targets(GRAD_CFG, rng)

    loss, gx, gy = kl_loss(np.log(tx), np.log(ty), tx, ty)

    assert loss == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(gx, 0.0, atol=1e-12)
    np.testing.assert_allclose(gy, 0.0, atol=1e-12)


def test_kl_loss_is_positive_and_skips_masked_joints():
    rng = np.random.default_rng(1)
    tx, ty = _targets(GRAD_CFG, rng)
    lx, ly = rng.normal(size=tx.shape), rng.normal(size=ty.shape)

    full, _, _ = kl_loss(lx, ly, tx, ty)
    masked, gx, gy = kl_loss(lx, ly, tx, ty, mask=np.array([True, False]))
    halved, _, _ = kl_loss(lx, ly, tx, ty, batch_size=2)

    assert full > masked > 0.0
    assert not gx[1].any() and not gy[1].any()
    assert halved == pytest.approx(full / 2)


def test_kl_loss_handles_zero_target_entries():
    target = np.array([[0.0, 1.0, 0.0]])
    loss, gx, _ = kl_loss(np.array([[0.0, 0.0, 0.0]]), np.zeros((1, 2)), target, np.array([[0.5, 0.5]]))
    assert loss == pytest.approx(np.log(3.0))
    np.testing.assert_allclose(gx, [[1 / 3, -2 / 3, 1 / 3]])


def test_log_softmax_is_stable_for_large_logits():
    out = log_softmax(np.array([[1000.0, 1000.0]]))
    np.testing.assert_allclose(out, np.log([[0.5, 0.5]]))


def test_point_features_scale_coordinates_and_counts():
    points = make_points(20, 40, 30)
    features = point_features(points, 5, width=40, height=30)

    e_max = points.e_cnt.max()
    np.testing.assert_allclose(features[:, 0], points.x / 40)
    np.testing.assert_allclose(features[:, 1], points.y / 30)
    np.testing.assert_allclose(features[:, 4], points.e_cnt / e_max)
    assert point_features(points, 3, 40, 30).shape == (20, 3)
    np.testing.assert_array_equal(point_features(points, 5, 40, 30, raw=True), points.matrix())


def test_desk_scale_widths_are_a_quarter_of_the_full_network():
    assert ModelConfig().widths == (16, 32, 64, 128)
    assert ModelConfig(width_scale=1.0).widths == (64, 128, 256, 512)
    assert DESK_SCALE == 0.25


def test_in_channels_must_be_three_four_or_five():
    with pytest.raises(ValueError):
        ModelConfig(in_channels=2)


def test_closed_form_cost_of_the_full_network():
    cfg = ModelConfig(in_channels=5, width_scale=1.0, num_joints=13, width=346, height=260)

    cost = count_params_macs(cfg, n_points=2048)

    assert cost.params == 15_306_950
    assert cost.point_macs == 352_976_896
    assert cost.head_macs == 15_125_760
    assert cost.macs == 368_102_656


def test_parameter_count_matches_initialized_arrays(tiny_model):
    assert count_params_macs(tiny_model).params == init_params(tiny_model, 0).size()


def test_initialization_is_deterministic(tiny_model):
    a, b = init_params(tiny_model, 4), init_params(tiny_model, 4)
    assert all(np.array_equal(a[n], b[n]) for n in a.names())
    assert not np.array_equal(a["mlp0.weight"], init_params(tiny_model, 5)["mlp0.weight"])
