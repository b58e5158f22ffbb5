"""
Coarse-grained instruction processing: ground the initial instruction state
against the current observation, aggregate token relevance into clause
scores and route to a single active clause.
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.domain.entities import InstructionState, Observation, RoutingMode, SegmentSet
from src.domain.numerics import Tensor, sigmoid, softmax, straight_through
from src.engine.layers import MLP, Linear, Module, MultiHeadAttention
from src.processing.segmenter import BoundaryScore, boundary_log_confidence, straight_through_unit

# Bound on the within-clause weight logits before exponentiation
WEIGHT_LOGIT_CLAMP = 30.0


class RoutingDecision(BaseModel):
    """
    Attributes:
        alpha: Soft clause distribution softmax(phi).
        k_star: Selected clause (0-based, lowest index on ties).
        selection: One-hot over clauses. In TRAIN mode its gradient is routed
            to alpha; in INFER mode it is a constant; in RELAXED mode it is
            alpha itself.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    alpha: Tensor
    k_star: int
    selection: Tensor


class ClauseRelevance(BaseModel):
    """Per-step CGIP outputs."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    U: Tensor
    r: Tensor
    w: Tensor
    phi: Tensor
    alpha: Tensor
    k_star: int
    selection: Tensor

    @property
    def route_weight(self) -> Tensor:
        """Selection entry of the active clause; 1.0 in the forward pass unless RELAXED."""
        return self.selection[self.k_star]


def cross_attend(queries: Tensor, keys_values: Tensor, attention: MultiHeadAttention) -> Tensor:
    return attention(queries, keys_values)


def token_relevance(U: Tensor, head: Linear) -> Tensor:
    """r = sigmoid(U W_r + b_r), one value per token."""
    return sigmoid(head(U)).reshape((U.shape[0],))


def clause_weights(logits: Tensor, segs: SegmentSet) -> Tensor:
    """Exponentiated logits normalised to sum to one inside every clause."""
    w_tilde = logits.clamp(-WEIGHT_LOGIT_CLAMP, WEIGHT_LOGIT_CLAMP).exp()
    membership = Tensor(segs.membership())
    clause_totals = membership.T @ (membership @ w_tilde)
    return w_tilde / clause_totals


def clause_scores(
    r: Tensor, w: Tensor, segs: SegmentSet, confidence: Optional[Tensor] = None, relaxed: bool = False
) -> Tensor:
    """
    phi_k = sum over clause k of w_i r_i. When boundary log-confidences are
    given, each score is multiplied by a unit factor that carries their
    gradient back to the boundary scorer. `relaxed` multiplies by the clause
    confidence exp(c) itself instead.
    """
    phi = Tensor(segs.membership()) @ (w * r)
    if confidence is not None:
        phi = phi * (confidence.exp() if relaxed else straight_through_unit(confidence))
    return phi


def route(phi: Tensor, mode: RoutingMode) -> RoutingDecision:
    alpha = softmax(phi)
    k_star = int(np.argmax(alpha.data))
    hard = np.zeros(alpha.shape)
    hard[k_star] = 1.0
    if mode == RoutingMode.TRAIN:
        selection = straight_through(hard, alpha)
    elif mode == RoutingMode.RELAXED:
        selection = alpha
    else:
        selection = Tensor(hard)
    return RoutingDecision(alpha=alpha, k_star=k_star, selection=selection)


class CoarseGrainedPicker(Module):
    """Sub-instruction picker. Queries are always S_0, never S_{t-1}."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        self.attention = MultiHeadAttention(d, heads, rng)
        self.score_head = Linear(d, 1, rng)
        self.score_head.weight.data[...] = 0.0
        # within-clause normalisation cancels a shared output bias
        self.weight_mlp = MLP(d, d, 1, rng, output_bias=False)

    def relevance(
        self,
        S0: InstructionState,
        segs: SegmentSet,
        obs: Observation,
        mode: RoutingMode,
        boundary_scores: Optional[BoundaryScore] = None,
    ) -> ClauseRelevance:
        U = cross_attend(S0.values, Tensor(obs.features), self.attention)
        r = token_relevance(U, self.score_head)
        w = clause_weights(self.weight_mlp(U).reshape((U.shape[0],)), segs)
        confidence = boundary_log_confidence(boundary_scores, segs) if boundary_scores is not None else None
        phi = clause_scores(r, w, segs, confidence, relaxed=mode == RoutingMode.RELAXED)
        decision = route(phi, mode)
        return ClauseRelevance(
            U=U,
            r=r,
            w=w,
            phi=phi,
            alpha=decision.alpha,
            k_star=decision.k_star,
            selection=decision.selection,
        )

    def step(
        self,
        S0: InstructionState,
        segs: SegmentSet,
        obs: Observation,
        mode: RoutingMode,
        boundary_scores: Optional[BoundaryScore] = None,
    ) -> tuple[list[int], ClauseRelevance]:
        relevance = self.relevance(S0, segs, obs, mode, boundary_scores)
        return segs.token_indices(relevance.k_star), relevance
