"""Optimizer update rules against hand-iterated recurrences."""

import numpy as np
import pytest

from styleaug.nn.layers import Param, ShapeError
from styleaug.nn.optim import Adam, SGDMomentum


def _scalar_param(value):
    return Param(np.array([value], dtype=np.float32))


def test_two_step_hand_iteration():
    """w=1, g=1, m=0.9, lr=0.1, wd=0: v=1 -> w=0.9; v=1.9 -> w=0.71."""
    p = _scalar_param(1.0)
    opt = SGDMomentum([p], lr=0.1, momentum=0.9, weight_decay=0.0)
    p.grad = np.ones(1, dtype=np.float32)
    opt.step()
    assert p.data[0] == pytest.approx(0.9, abs=1e-7)
    p.grad = np.ones(1, dtype=np.float32)
    opt.step()
    assert p.data[0] == pytest.approx(0.71, abs=1e-6)


def test_zero_grad_zero_velocity_is_fixed_point():
    p = _scalar_param(2.5)
    opt = SGDMomentum([p], lr=0.1, momentum=0.9, weight_decay=0.0)
    p.grad = np.zeros(1, dtype=np.float32)
    opt.step()
    assert p.data[0] == pytest.approx(2.5)


def test_no_momentum_no_decay_is_plain_gradient_descent():
    p = _scalar_param(1.0)
    opt = SGDMomentum([p], lr=0.05, momentum=0.0, weight_decay=0.0)
    p.grad = np.array([4.0], dtype=np.float32)
    opt.step()
    assert p.data[0] == pytest.approx(1.0 - 0.05 * 4.0)


def test_weight_decay_enters_momentum_buffer():
    """v <- m*v + (g + wd*w), then w <- w - lr*v, iterated twice by hand."""
    p = _scalar_param(1.0)
    opt = SGDMomentum([p], lr=0.1, momentum=0.5, weight_decay=0.1)
    w, v = 1.0, 0.0
    for _ in range(2):
        p.grad = np.array([2.0], dtype=np.float32)
        opt.step()
        v = 0.5 * v + (2.0 + 0.1 * w)
        w = w - 0.1 * v
    assert p.data[0] == pytest.approx(w, rel=1e-6)


def test_random_recurrence_many_steps():
    rng = np.random.default_rng(0)
    p = Param(rng.normal(size=(3, 2)).astype(np.float32))
    ref_w = p.data.astype(np.float64).copy()
    ref_v = np.zeros_like(ref_w)
    opt = SGDMomentum([p], lr=0.01, momentum=0.9, weight_decay=0.001)
    for _ in range(20):
        g = rng.normal(size=(3, 2)).astype(np.float32)
        p.grad = g
        opt.step()
        ref_v = 0.9 * ref_v + (g + 0.001 * ref_w)
        ref_w = ref_w - 0.01 * ref_v
    np.testing.assert_allclose(p.data, ref_w, rtol=1e-4, atol=1e-6)


def test_missing_gradient_raises():
    p = _scalar_param(1.0)
    opt = SGDMomentum([p], lr=0.1)
    with pytest.raises(ValueError):
        opt.step()


def test_gradient_shape_mismatch_raises():
    p = _scalar_param(1.0)
    opt = SGDMomentum([p], lr=0.1)
    p.grad = np.zeros(2, dtype=np.float32)
    with pytest.raises(ShapeError):
        opt.step()


def test_zero_grad_clears_gradients():
    p = _scalar_param(1.0)
    p.grad = np.ones(1, dtype=np.float32)
    SGDMomentum([p], lr=0.1).zero_grad()
    assert p.grad is None


def test_adam_first_step_magnitude():
    """Bias correction makes the first update ~= lr * sign(g)."""
    p = _scalar_param(0.0)
    opt = Adam([p], lr=0.01)
    p.grad = np.array([3.0], dtype=np.float32)
    opt.step()
    assert p.data[0] == pytest.approx(-0.01, rel=1e-4)


def test_adam_missing_gradient_raises():
    p = _scalar_param(0.0)
    opt = Adam([p], lr=0.01)
    with pytest.raises(ValueError):
        opt.step()


def test_adam_converges_on_quadratic():
    p = _scalar_param(5.0)
    opt = Adam([p], lr=0.2)
    for _ in range(200):
        p.grad = 2.0 * p.data  # d/dw of w^2
        opt.step()
    assert abs(p.data[0]) < 1e-2
