"""
Fine-grained instruction processing: refine the tokens of the active clause
under the current observation and fold them back into the full instruction
state through an element-wise gated residual update.
"""

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.domain.entities import InstructionState, Observation
from src.domain.exceptions import ContractError
from src.domain.numerics import Tensor, concat, scatter_rows, sigmoid
from src.engine.layers import MLP, LayerNorm, Module, MultiHeadAttention, TransformerBlock, sinusoidal_positions

GATE_BIAS_INIT = -2.0


class RefinedSegment(BaseModel):
    """
    Attributes:
        T_tilde: Visually modulated tokens of the active clause (|T| x d).
        R_hat: Contextually encoded tokens of the active clause (|T| x d).
        R: Full scatter result (L x d); rows outside the clause equal S_{t-1}.
        gate: Element-wise gate g (L x d), strictly inside (0, 1).
        state: Updated instruction state S_t.
        gate_mean: Mean gate value over the active clause rows.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    T_tilde: Tensor
    R_hat: Tensor
    R: Tensor
    gate: Tensor
    state: InstructionState
    gate_mean: float


def scatter(R_hat: Tensor, T_sel: Sequence[int], S_prev: Tensor) -> Tensor:
    return scatter_rows(S_prev, R_hat, T_sel)


def fuse(S_prev: Tensor, R: Tensor, g: Tensor) -> Tensor:
    """S_t = S_{t-1} + g * (R - S_{t-1})."""
    return S_prev + g * (R - S_prev)


class FineGrainedRefiner(Module):
    """
    Instruction refiner with its own cross-attention parameters (disjoint
    from the picker). Positions inside the contextual encoder are relative
    to the clause start; `use_positions=False` drops them.
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator, use_positions: bool = True):
        self.attention = MultiHeadAttention(d, heads, rng)
        self.encoder = TransformerBlock(d, heads, rng)
        self.norm_prev = LayerNorm(d)
        self.norm_refined = LayerNorm(d)
        self.gate_mlp = MLP(2 * d, d, d, rng)
        self.gate_mlp.output.bias.data[...] = GATE_BIAS_INIT
        self.d = d
        self.use_positions = use_positions

    def ground_tokens(self, S_prev: Tensor, T_sel: Sequence[int], obs: Observation) -> Tensor:
        if len(T_sel) == 0:
            raise ContractError("cannot refine an empty token selection")
        index = np.asarray(T_sel, dtype=np.int64)
        if index.min() < 0 or index.max() >= S_prev.shape[0]:
            raise ContractError(f"token selection out of range [0, {S_prev.shape[0]}): {list(T_sel)}")
        return self.attention(S_prev[index], Tensor(obs.features))

    def contextual_encode(self, T_tilde: Tensor) -> Tensor:
        x = T_tilde
        if self.use_positions:
            x = x + Tensor(sinusoidal_positions(T_tilde.shape[0], self.d))
        return self.encoder(x)

    def gate(self, S_prev: Tensor, R: Tensor) -> Tensor:
        features = concat([self.norm_prev(S_prev), self.norm_refined(R)], axis=1)
        return sigmoid(self.gate_mlp(features))

    def gated_fuse(self, S_prev: Tensor, R: Tensor) -> tuple[Tensor, Tensor]:
        g = self.gate(S_prev, R)
        return fuse(S_prev, R, g), g

    def step(
        self,
        S_prev: InstructionState,
        T_sel: Sequence[int],
        obs: Observation,
        route_weight: Optional[Tensor] = None,
    ) -> RefinedSegment:
        """
        ground_tokens -> contextual_encode -> scatter -> gated_fuse.

        `route_weight` is the routed selection entry of the active clause
        (forward value 1.0 outside RELAXED routing); scaling R_hat by it
        links the update to the clause distribution in the backward pass.
        """
        T_tilde = self.ground_tokens(S_prev.values, T_sel, obs)
        R_hat = self.contextual_encode(T_tilde)
        if route_weight is not None:
            R_hat = R_hat * route_weight
        R = scatter(R_hat, T_sel, S_prev.values)
        S_t, g = self.gated_fuse(S_prev.values, R)
        gate_mean = float(g.data[np.asarray(T_sel, dtype=np.int64)].mean())
        return RefinedSegment(
            T_tilde=T_tilde,
            R_hat=R_hat,
            R=R,
            gate=g,
            state=InstructionState(values=S_t, step=S_prev.step + 1),
            gate_mean=gate_mean,
        )
