from collections.abc import Sequence

import numpy as np

from src.domain.numerics import Parameter


def global_grad_norm(parameters: Sequence[Parameter]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad**2)) for p in parameters if p.grad is not None)))


def clip_grad_norm(parameters: Sequence[Parameter], max_norm: float) -> float:
    """Rescales all gradients so their global L2 norm is at most `max_norm`; returns the norm before clipping."""
    total = global_grad_norm(parameters)
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in parameters:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class Adam:
    """Adam with bias correction, one moment pair per parameter."""

    def __init__(
        self,
        parameters: Sequence[Parameter],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.parameters = list(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.parameters]
        self.v = [np.zeros_like(p.data) for p in self.parameters]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.parameters):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g**2
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()
