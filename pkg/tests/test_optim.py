"""Tests for Adam with decoupled weight decay and the plateau scheduler."""

import numpy as np
import pytest

from src.smallvae.autodiff import Parameter
from src.smallvae.errors import GradientError, NonFiniteError, ShapeError
from src.smallvae.training.optim import AdamState, PlateauScheduler, adam_step


@pytest.fixture
def param():
    return Parameter("w", np.array([1.0, -2.0, 3.0]))


def test_first_step_moves_by_lr_times_sign(param):
    state = AdamState.for_params([param], lr=0.1)
    adam_step(state, [param], {"w": np.array([0.5, -4.0, 0.0])})

    assert state.t == 1
    assert np.allclose(param.data, [0.9, -1.9, 3.0])


def test_moments_follow_exponential_averages(param):
    state = AdamState.for_params([param], lr=0.01)
    g = np.array([1.0, 2.0, 3.0])
    adam_step(state, [param], {"w": g})
    adam_step(state, [param], {"w": g})

    assert np.allclose(state.m["w"], (1 - 0.9**2) * g)
    assert np.allclose(state.v["w"], (1 - 0.999**2) * g * g)


def test_decoupled_weight_decay_with_zero_gradient(param):
    state = AdamState.for_params([param], lr=0.1, weight_decay=0.5)
    adam_step(state, [param], {"w": np.zeros(3)})
    assert np.allclose(param.data, np.array([1.0, -2.0, 3.0]) * (1 - 0.1 * 0.5))


def test_decay_skipped_for_excluded_parameters():
    bias = Parameter("b", np.array([1.0, 2.0]), decay=False)
    state = AdamState.for_params([bias], lr=0.1, weight_decay=0.5)
    adam_step(state, [bias], {"b": np.zeros(2)})
    assert np.array_equal(bias.data, [1.0, 2.0])


def test_frozen_parameters_are_untouched(param):
    other = Parameter("v", np.array([1.0]))
    param.frozen = True
    state = AdamState.for_params([param, other], lr=0.1)
    adam_step(state, [param, other], {"w": np.ones(3), "v": np.ones(1)})

    assert np.array_equal(param.data, [1.0, -2.0, 3.0])
    assert np.allclose(other.data, [0.9])
    assert not state.m["w"].any()


def test_nan_gradient_aborts_step(param):
    state = AdamState.for_params([param], lr=0.1)
    with pytest.raises(GradientError, match="w"):
        adam_step(state, [param], {"w": np.array([0.0, np.nan, 0.0])})
    assert state.t == 0
    assert np.array_equal(param.data, [1.0, -2.0, 3.0])


def test_gradient_shape_mismatch(param):
    state = AdamState.for_params([param], lr=0.1)
    with pytest.raises(ShapeError):
        adam_step(state, [param], {"w": np.zeros(2)})


def test_uses_parameter_grad_buffer(param):
    state = AdamState.for_params([param], lr=0.1)
    param.grad = np.array([1.0, 1.0, -1.0])
    adam_step(state, [param])
    assert np.allclose(param.data, [0.9, -2.1, 3.1])


def test_preserves_float32(param):
    p = Parameter("p", np.ones(2, dtype=np.float32))
    state = AdamState.for_params([p], lr=0.1, weight_decay=0.01)
    adam_step(state, [p], {"p": np.ones(2, dtype=np.float32)})
    assert p.data.dtype == np.float32
    assert state.m["p"].dtype == np.float32


def test_plateau_reduces_after_patience():
    scheduler = PlateauScheduler(lr=1.0, factor=0.5, patience=2)
    lrs = [scheduler.step(m) for m in [10.0, 10.0, 10.0, 10.0, 10.0]]
    assert lrs == [1.0, 1.0, 1.0, 0.5, 0.5]
    assert scheduler.counter == 1


def test_plateau_improvement_resets_counter():
    scheduler = PlateauScheduler(lr=1.0, patience=1)
    scheduler.step(10.0)
    scheduler.step(10.0)
    assert scheduler.counter == 1
    scheduler.step(5.0)
    assert scheduler.counter == 0 and scheduler.best == 5.0


def test_plateau_threshold_is_relative():
    scheduler = PlateauScheduler(lr=1.0, patience=0, threshold=1e-3)
    scheduler.step(10.0)
    assert scheduler.step(9.995) == 0.5
    assert scheduler.best == 10.0


def test_plateau_respects_min_lr():
    scheduler = PlateauScheduler(lr=1e-6, factor=0.1, patience=0, min_lr=5e-7)
    scheduler.step(1.0)
    assert scheduler.step(1.0) == 5e-7
    assert scheduler.step(1.0) == 5e-7


def test_plateau_rejects_nan():
    with pytest.raises(NonFiniteError):
        PlateauScheduler(lr=1.0).step(float("nan"))


def test_plateau_state_round_trip():
    scheduler = PlateauScheduler(lr=0.1, patience=3)
    for metric in [3.0, 2.0, 2.5]:
        scheduler.step(metric)
    restored = PlateauScheduler.from_state(scheduler.state())
    assert restored == scheduler


@pytest.mark.parametrize("seed", range(5))
def test_plateau_lr_never_increases(seed):
    rng = np.random.default_rng(seed)
    scheduler = PlateauScheduler(lr=1e-2, factor=0.3, patience=int(rng.integers(0, 4)), min_lr=1e-4)
    lrs = [scheduler.step(m) for m in rng.uniform(0.5, 1.5, size=60)]
    assert all(b <= a for a, b in zip([1e-2] + lrs, lrs))
    assert lrs[-1] >= 1e-4


def test_plateau_below_floor_keeps_lr():
    scheduler = PlateauScheduler(lr=1e-8, patience=0, min_lr=1e-7)
    assert [scheduler.step(1.0) for _ in range(3)] == [1e-8, 1e-8, 1e-8]


def test_matches_textbook_adam(param):
    lr, b1, b2, eps, wd = 0.01, 0.9, 0.999, 1e-8, 0.1
    state = AdamState.for_params([param], lr=lr, weight_decay=wd)
    theta = param.data.copy()
    m = np.zeros(3)
    v = np.zeros(3)
    rng = np.random.default_rng(0)
    for t in range(1, 6):
        g = rng.normal(size=3)
        adam_step(state, [param], {"w": g})
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * wd * theta
    assert np.allclose(param.data, theta, rtol=1e-12, atol=1e-12)


def test_converges_on_quadratic():
    target = np.array([1.0, -2.0, 3.0])
    param = Parameter("w", np.zeros(3))
    state = AdamState.for_params([param], lr=0.1)
    for _ in range(200):
        adam_step(state, [param], {"w": param.data - target})
    assert np.abs(param.data - target).max() < 1e-2


@pytest.mark.parametrize("lr", [1e-2, 1e-3])
def test_quadratic_loss_decreases(lr):
    param = Parameter("w", np.array([1.0]))
    state = AdamState.for_params([param], lr=lr)
    for _ in range(200):
        adam_step(state, [param], {"w": param.data.copy()})
    assert 0.5 * float(param.data[0]) ** 2 < 0.5
