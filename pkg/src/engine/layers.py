"""
Learnable building blocks on top of `src.domain.numerics`.
"""

from collections.abc import Iterator

import numpy as np

from src.domain.exceptions import ConfigurationError, ContractError
from src.domain.numerics import Parameter, Tensor, concat, layer_norm, softmax


class Module:
    """
    Base class for anything that owns parameters.

    Parameters and sub-modules are discovered from instance attributes in
    assignment order, so names and ordering are stable across runs.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{name}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for parameter in self.parameters():
            parameter.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            raise ContractError(f"State mismatch; missing={missing}, unexpected={unexpected}")
        for name, parameter in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != parameter.shape:
                raise ContractError(f"Shape mismatch for {name}: checkpoint {value.shape}, model {parameter.shape}")
            parameter.data[...] = value


class Linear(Module):
    """y = x W + b with W of shape (in, out); `bias=False` drops b."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Parameter("weight", rng.uniform(-bound, bound, size=(in_features, out_features)))
        self.bias = Parameter("bias", np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y if self.bias is None else y + self.bias


class MLP(Module):
    """Two-layer perceptron with a tanh hidden layer."""

    def __init__(
        self, in_features: int, hidden: int, out_features: int, rng: np.random.Generator, output_bias: bool = True
    ):
        self.hidden = Linear(in_features, hidden, rng)
        self.output = Linear(hidden, out_features, rng, bias=output_bias)

    def __call__(self, x: Tensor) -> Tensor:
        return self.output(self.hidden(x).tanh())


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = Parameter("gamma", np.ones(d))
        self.beta = Parameter("beta", np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class MultiHeadAttention(Module):
    """
    Multi-head scaled dot-product attention. Queries come from one sequence,
    keys and values from another (self-attention when they coincide).
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        if heads < 1 or d % heads != 0:
            raise ConfigurationError(f"d={d} is not divisible by heads={heads}")
        self.d = d
        self.heads = heads
        self.head_dim = d // heads
        self.w_q = Linear(d, d, rng)
        # softmax cancels a key bias
        self.w_k = Linear(d, d, rng, bias=False)
        self.w_v = Linear(d, d, rng)
        self.w_o = Linear(d, d, rng)

    def _project(self, queries: Tensor, keys_values: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        return self.w_q(queries), self.w_k(keys_values), self.w_v(keys_values)

    def _weights(self, q: Tensor, k: Tensor) -> list[Tensor]:
        scale = 1.0 / np.sqrt(self.head_dim)
        weights = []
        for h in range(self.heads):
            cols = slice(h * self.head_dim, (h + 1) * self.head_dim)
            weights.append(softmax((q[:, cols] @ k[:, cols].T) * scale, axis=-1))
        return weights

    def attention_weights(self, queries: Tensor, keys_values: Tensor) -> list[Tensor]:
        """Per-head (Lq x N) attention matrices; each row sums to 1."""
        q, k, _ = self._project(queries, keys_values)
        return self._weights(q, k)

    def __call__(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        q, k, v = self._project(queries, keys_values)
        heads = []
        for h, weights in enumerate(self._weights(q, k)):
            cols = slice(h * self.head_dim, (h + 1) * self.head_dim)
            heads.append(weights @ v[:, cols])
        return self.w_o(concat(heads, axis=1))


class TransformerBlock(Module):
    """Post-norm encoder block: LN(x + MHA(x)), then LN(h + FFN(h))."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, ff_multiplier: int = 2):
        self.attention = MultiHeadAttention(d, heads, rng)
        self.norm_attention = LayerNorm(d)
        self.feed_forward = MLP(d, ff_multiplier * d, d, rng)
        self.norm_output = LayerNorm(d)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.norm_attention(x + self.attention(x, x))
        return self.norm_output(h + self.feed_forward(h))


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    """Fixed sin/cos position table of shape (length, d)."""
    positions = np.arange(length, dtype=np.float64)[:, None]
    rates = 1.0 / np.power(10000.0, (2 * (np.arange(d) // 2)) / d)
    angles = positions * rates[None, :]
    table = np.zeros((length, d))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table
