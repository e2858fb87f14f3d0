import numpy as np
import pytest

from deepbsde.errors import ConfigError, ShapeError
from deepbsde.optim import (
    AdamState,
    LrSchedule,
    adam_step,
    clip_by_global_norm,
    lr_at,
    sgd_step,
)


def test_sgd_example():
    out = sgd_step(np.array([1.0, 2.0]), np.array([0.5, -1.0]), 0.1)
    assert np.allclose(out, [0.95, 2.1], atol=1e-15)


def test_sgd_zero_gradient():
    params = np.array([3.0, -4.0])
    out = sgd_step(params, np.zeros(2), 0.1)
    assert np.array_equal(out, params)


def test_sgd_rejects_nonpositive_lr():
    with pytest.raises(ConfigError):
        sgd_step(np.zeros(2), np.zeros(2), 0.0)


def test_sgd_rejects_length_mismatch():
    with pytest.raises(ShapeError):
        sgd_step(np.zeros(2), np.zeros(3), 0.1)


def test_adam_first_step_is_signed_lr():
    # bias-corrected first step: m_hat = g, v_hat = g^2, update ~ -lr*sign(g)
    lr = 1e-4
    g = np.array([0.5, -0.002, 3.0, -1e-3])
    state = AdamState.create(4)
    params = np.zeros(4)
    new_params, state = adam_step(state, params, g, lr)
    want = -lr * np.sign(g)
    assert np.max(np.abs(new_params - want)) < 1e-9
    assert state.step_count == 1


def test_adam_zero_gradient_leaves_params():
    state = AdamState.create(3)
    params = np.array([1.0, -2.0, 0.5])
    for _ in range(5):
        params_new, state = adam_step(state, params, np.zeros(3), 1e-2)
        assert np.array_equal(params_new, params)
        params = params_new
    assert state.step_count == 5


def test_adam_beta_zero_specialization():
    # beta1 = beta2 = 0: update = -lr * g / (|g| + eps)
    lr, eps = 0.01, 1e-8
    g = np.array([0.2, -0.04])
    state = AdamState.create(2, beta1=0.0, beta2=0.0, eps=eps)
    params = np.zeros(2)
    new_params, _ = adam_step(state, params, g, lr)
    want = -lr * g / (np.abs(g) + eps)
    assert np.max(np.abs(new_params - want)) < 1e-15


def test_adam_scale_awareness():
    # difference is eps-order: lr*eps/(2|g|) stays under 1e-9 for |g| >= 1e-3
    lr = 1e-4
    g = np.array([0.8, -0.03, 0.004])
    a, _ = adam_step(AdamState.create(3), np.zeros(3), g, lr)
    b, _ = adam_step(AdamState.create(3), np.zeros(3), 2.0 * g, lr)
    assert np.max(np.abs(a - b)) < 1e-9


def test_adam_is_pure():
    g = np.array([0.1, 0.2])
    params = np.array([1.0, 1.0])
    s0 = AdamState.create(2)
    out1, s1 = adam_step(s0, params, g, 1e-2)
    out2, s2 = adam_step(s0, params, g, 1e-2)
    assert np.array_equal(out1, out2)
    assert np.array_equal(s1.m, s2.m)
    assert np.array_equal(s1.v, s2.v)
    assert np.all(s0.m == 0.0)  # input state untouched


def test_adam_validation():
    with pytest.raises(ConfigError):
        AdamState.create(2, beta1=1.0)
    with pytest.raises(ConfigError):
        AdamState.create(2, beta2=-0.1)
    with pytest.raises(ConfigError):
        AdamState.create(2, eps=0.0)
    state = AdamState.create(2)
    with pytest.raises(ShapeError):
        adam_step(state, np.zeros(2), np.zeros(5), 1e-2)


def test_clip_by_global_norm():
    g = np.array([3.0, 4.0])
    clipped = clip_by_global_norm(g, 1.0)
    assert np.linalg.norm(clipped) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(clipped, g / 5.0)
    small = np.array([0.1, 0.1])
    assert np.array_equal(clip_by_global_norm(small, 1.0), small)


def test_lr_schedule_examples():
    sched = LrSchedule(((0, 1e-2), (1000, 1e-3)))
    assert lr_at(sched, 500) == 1e-2
    assert lr_at(sched, 1000) == 1e-3  # boundary inclusive
    assert lr_at(sched, 5000) == 1e-3
    single = LrSchedule.constant(5e-3)
    assert lr_at(single, 0) == 5e-3
    assert lr_at(single, 10_000) == 5e-3


def test_lr_schedule_validation():
    with pytest.raises(ConfigError):
        LrSchedule(())
    with pytest.raises(ConfigError):
        LrSchedule(((0, 1e-2), (0, 1e-3)))
    with pytest.raises(ConfigError):
        LrSchedule(((0, -1e-2),))
    with pytest.raises(ConfigError):
        lr_at(LrSchedule.constant(1e-3), -1)
