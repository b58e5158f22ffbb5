"""
Action scoring (bilinear policy head) and the critic used by actor-critic training.
"""

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.domain.exceptions import ContractError
from src.domain.numerics import Parameter, Tensor, concat, log_softmax
from src.engine.layers import Linear, Module


class ActionScores(BaseModel):
    """
    Logits over candidate viewpoints followed by STOP (last index).
    Masked actions are excluded from the softmax and get probability 0.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    logits: Tensor
    mask: np.ndarray
    log_probs: Tensor

    @property
    def valid(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def stop_index(self) -> int:
        return len(self.mask) - 1

    @property
    def probabilities(self) -> np.ndarray:
        probs = np.zeros(len(self.mask))
        probs[self.valid] = np.exp(self.log_probs.data)
        return probs

    def log_prob(self, action: int) -> Tensor:
        position = np.flatnonzero(self.valid == action)
        if len(position) == 0:
            raise ContractError(f"action {action} is masked or out of range")
        return self.log_probs[int(position[0])]

    def entropy(self) -> Tensor:
        return -(self.log_probs.exp() * self.log_probs).sum()

    def greedy(self) -> int:
        return int(self.valid[int(np.argmax(self.log_probs.data))])

    def sample(self, rng: np.random.Generator) -> int:
        probs = np.exp(self.log_probs.data)
        return int(rng.choice(self.valid, p=probs / probs.sum()))


class PolicyHead(Module):
    """logit_c = pooled . W_a . f_c, STOP scored against a learned feature."""

    def __init__(self, d: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(d)
        self.bilinear = Parameter("bilinear", rng.uniform(-bound, bound, size=(d, d)))
        self.stop_feature = Parameter("stop_feature", rng.uniform(-0.1, 0.1, size=d))

    @staticmethod
    def pool(state: Tensor, focus: Optional[Sequence[int]] = None, focus_weight: Optional[Tensor] = None) -> Tensor:
        """Mean over the active clause rows (all rows without routing)."""
        if focus is None:
            return state.mean(axis=0)
        pooled = state[np.asarray(focus, dtype=np.int64)].mean(axis=0)
        return pooled * focus_weight if focus_weight is not None else pooled

    def score(self, pooled: Tensor, candidates: np.ndarray, mask: Optional[np.ndarray] = None) -> ActionScores:
        candidates = np.asarray(candidates, dtype=np.float64).reshape(-1, self.bilinear.shape[0])
        n_actions = candidates.shape[0] + 1
        mask = np.ones(n_actions, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != (n_actions,):
            raise ContractError(f"mask must cover {n_actions} actions (candidates + STOP), got {mask.shape}")
        if not mask.any():
            raise ContractError("every action is masked")
        projected = pooled @ self.bilinear
        stop_logit = (projected * self.stop_feature).sum().reshape((1,))
        if candidates.shape[0]:
            logits = concat([projected @ Tensor(candidates.T), stop_logit])
        else:
            logits = stop_logit
        valid = np.flatnonzero(mask)
        return ActionScores(logits=logits, mask=mask, log_probs=log_softmax(logits[valid]))


class ValueHead(Module):
    """Scalar state value from [pooled state; mean observation feature]."""

    def __init__(self, d: int, rng: np.random.Generator):
        self.linear = Linear(2 * d, 1, rng)

    def __call__(self, pooled: Tensor, observation: np.ndarray) -> Tensor:
        summary = Tensor(np.asarray(observation, dtype=np.float64).mean(axis=0))
        return self.linear(concat([pooled, summary])).reshape(())
