"""
Instruction-as-state agent: keeps (S_0, S_{t-1}) for an episode, runs the
coarse-to-fine update every step and scores candidate actions.
"""

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.domain.entities import Instruction, InstructionState, Observation, RoutingMode, SegmentSet
from src.domain.numerics import Tensor, no_grad
from src.engine.cgip import ClauseRelevance, CoarseGrainedPicker
from src.engine.encoder import DEFAULT_MAX_LENGTH, InstructionEncoder
from src.engine.fgip import FineGrainedRefiner, RefinedSegment
from src.engine.layers import Module
from src.engine.policy import ActionScores, PolicyHead, ValueHead
from src.processing.segmenter import (
    DEFAULT_DELTA_B,
    DEFAULT_RULES,
    BoundaryScore,
    BoundaryScorer,
    SegmentationRules,
    refine,
    segment_rules,
    split,
)


class AgentState(BaseModel):
    """
    Per-episode agent state. `focus` and `route_weight` describe the clause
    routed at the last step and feed the policy pooling.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    instruction: Instruction
    S0: InstructionState
    S_prev: InstructionState
    segs: SegmentSet
    boundary_scores: Optional[BoundaryScore] = None
    t: int = 0
    cgip_enabled: bool = True
    fgip_enabled: bool = True
    focus: Optional[list[int]] = None
    route_weight: Optional[Tensor] = None


class StepResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    state: InstructionState
    relevance: ClauseRelevance
    refined: Optional[RefinedSegment] = None
    agent: AgentState

    @property
    def gate_mean(self) -> Optional[float]:
        return self.refined.gate_mean if self.refined is not None else None


class NavigationModel(Module):
    """All learnable parts: encoder, boundary scorer, picker, refiner, policy and critic."""

    def __init__(
        self,
        vocab_size: int,
        d: int = 32,
        heads: int = 2,
        max_length: int = DEFAULT_MAX_LENGTH,
        delta_b: float = DEFAULT_DELTA_B,
        rules: SegmentationRules = DEFAULT_RULES,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        self.encoder = InstructionEncoder(vocab_size, d, heads, max_length, rng)
        self.boundary_scorer = BoundaryScorer(d, rng)
        self.cgip = CoarseGrainedPicker(d, heads, rng)
        self.fgip = FineGrainedRefiner(d, heads, rng)
        self.policy = PolicyHead(d, rng)
        self.value = ValueHead(d, rng)
        self.d = d
        self.delta_b = delta_b
        self.rules = rules

    def segment(self, h: Tensor, instruction: Instruction) -> tuple[SegmentSet, BoundaryScore]:
        coarse = segment_rules(instruction, self.rules)
        scores = self.boundary_scorer.score(h, coarse)
        _, segs = refine(scores, self.delta_b)
        return segs, scores

    def begin(
        self,
        instruction: Instruction,
        cgip_enabled: bool = True,
        fgip_enabled: bool = True,
        refine_boundaries: bool = True,
    ) -> AgentState:
        """
        Encodes and segments the instruction once per episode. With
        `refine_boundaries=False` the coarse rule segmentation is used as is.
        """
        h, S0 = self.encoder.encode(instruction)
        if refine_boundaries:
            segs, scores = self.segment(h, instruction)
        else:
            segs, scores = split(len(instruction), segment_rules(instruction, self.rules).positions), None
        return AgentState(
            instruction=instruction,
            S0=S0,
            S_prev=S0,
            segs=segs,
            boundary_scores=scores,
            cgip_enabled=cgip_enabled,
            fgip_enabled=fgip_enabled,
        )

    def step(self, agent: AgentState, obs: Observation, mode: RoutingMode = RoutingMode.INFER) -> StepResult:
        if agent.cgip_enabled:
            T_sel, relevance = self.cgip.step(agent.S0, agent.segs, obs, mode, agent.boundary_scores)
            focus, route_weight = T_sel, relevance.route_weight
        else:
            # diagnostics only; the routed clause does not drive the update
            with no_grad():
                _, relevance = self.cgip.step(agent.S0, agent.segs, obs, mode)
            T_sel, focus, route_weight = list(range(agent.S0.length)), None, None

        refined = None
        if agent.fgip_enabled:
            refined = self.fgip.step(agent.S_prev, T_sel, obs, route_weight)
            state = refined.state
        else:
            state = InstructionState(values=agent.S_prev.values, step=agent.S_prev.step + 1)

        updated = agent.model_copy(
            update={"S_prev": state, "t": agent.t + 1, "focus": focus, "route_weight": route_weight}
        )
        return StepResult(state=state, relevance=relevance, refined=refined, agent=updated)

    def pooled(self, agent: AgentState) -> Tensor:
        return self.policy.pool(agent.S_prev.values, agent.focus, agent.route_weight)

    def act(
        self,
        state: InstructionState,
        candidates: np.ndarray,
        mask: Optional[np.ndarray] = None,
        focus: Optional[Sequence[int]] = None,
        focus_weight: Optional[Tensor] = None,
    ) -> ActionScores:
        pooled = self.policy.pool(state.values, focus, focus_weight)
        return self.policy.score(pooled, candidates, mask)

    def act_from(self, agent: AgentState, candidates: np.ndarray, mask: Optional[np.ndarray] = None) -> ActionScores:
        return self.act(agent.S_prev, candidates, mask, agent.focus, agent.route_weight)

    def value_estimate(self, agent: AgentState, obs: Observation) -> Tensor:
        return self.value(self.pooled(agent), obs.features)
