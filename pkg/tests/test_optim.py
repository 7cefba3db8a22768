import numpy as np
import pytest

from src.common.errors import ShapeError
from src.model.optim import LR_SCHEDULE, AdamState, adam_step, lr_at, parse_schedule
from src.model.pointnet import ModelParams


def _params(**arrays) -> ModelParams:
    return ModelParams({name: np.asarray(value, dtype=np.float64) for name, value in arrays.items()})


def test_first_step_moves_each_entry_by_the_learning_rate():
    params = _params(w=[1.0, -2.0, 0.5])
    grads = {"w": np.array([0.3, -4.0, 1e-3])}

    updated, state = adam_step(params, grads, AdamState(), lr=0.01)

    np.testing.assert_allclose(updated["w"], [0.99, -1.99, 0.49], atol=1e-6)
    assert state.step == 1


def test_step_leaves_its_inputs_untouched():
    params = _params(w=[1.0, 2.0])
    state = AdamState()

    updated, new_state = adam_step(params, {"w": np.array([1.0, 1.0])}, state, lr=0.1)

    assert params["w"].tolist() == [1.0, 2.0]
    assert state.step == 0 and state.m == {}
    assert updated.version != params.version
    assert new_state is not state


def test_gradient_with_wrong_shape_is_rejected():
    with pytest.raises(ShapeError) as info:
        adam_step(_params(w=[1.0, 2.0]), {"w": np.zeros(3)}, AdamState(), lr=0.1)
    assert info.value.layer == "w"


def test_adam_minimizes_a_quadratic():
    params, state = _params(w=[0.0]), AdamState()
    for _ in range(2000):
        grads = {"w": 2.0 * (params["w"] - 3.0)}
        params, state = adam_step(params, grads, state, lr=0.05)
    assert params["w"][0] == pytest.approx(3.0, abs=0.05)


@pytest.mark.parametrize(
    ("epoch", "rate"),
    [(0, 1e-4), (14, 1e-4), (15, 1e-5), (19, 1e-5), (20, 1e-6), (29, 1e-6)],
)
def test_step_schedule_boundaries(epoch, rate):
    assert lr_at(epoch, LR_SCHEDULE) == rate


def test_epochs_before_the_first_entry_use_the_first_rate():
    assert lr_at(0, {5: 0.1, 10: 0.01}) == 0.1


def test_parse_schedule_reads_epoch_rate_pairs():
    assert parse_schedule("0:1e-4, 15:1e-5,20:1e-6") == LR_SCHEDULE


@pytest.mark.parametrize("text", ["", "0-1e-4", "a:1", "0:fast"])
def test_parse_schedule_rejects_malformed_entries(text):
    with pytest.raises(ValueError):
        parse_schedule(text)
