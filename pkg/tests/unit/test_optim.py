import numpy as np
import pytest

from src.domain.numerics import Parameter
from src.engine.optim import Adam, clip_grad_norm, global_grad_norm


def test_first_adam_step_moves_by_learning_rate():
    p = Parameter("p", [1.0, -2.0, 3.0])
    p.grad = np.array([0.5, -4.0, 0.0])
    Adam([p], lr=0.1).step()
    assert p.data == pytest.approx([0.9, -1.9, 3.0], abs=1e-6)


def test_adam_minimises_a_quadratic():
    p = Parameter("p", [4.0, -3.0])
    optimizer = Adam([p], lr=0.1)
    for _ in range(500):
        optimizer.zero_grad()
        ((p - 1.0) ** 2).sum().backward()
        optimizer.step()
    assert p.data == pytest.approx([1.0, 1.0], abs=1e-2)


def test_clip_grad_norm_rescales_globally():
    a, b = Parameter("a", [0.0]), Parameter("b", [0.0])
    a.grad, b.grad = np.array([3.0]), np.array([4.0])
    assert clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
    assert global_grad_norm([a, b]) == pytest.approx(1.0)
    assert a.grad[0] / b.grad[0] == pytest.approx(0.75)


def test_small_gradients_are_not_clipped():
    a = Parameter("a", [0.0, 0.0])
    a.grad = np.array([0.3, 0.4])
    clip_grad_norm([a], 1.0)
    assert a.grad.tolist() == [0.3, 0.4]
