"""
Sub-instruction generation: rule-based coarse clause boundaries followed by
learnable boundary refinement.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.domain.entities import BoundarySet, Instruction, SegmentSet
from src.domain.numerics import Tensor, concat, sigmoid
from src.engine.layers import MLP, Module

DEFAULT_DELTA_B = 0.5
COHERENCE_WINDOW = 2
# hidden unit 0 of a fresh scorer reads only the coarse prior p_i
PRIOR_PREACTIVATION = 1.5
PRIOR_OUTPUT_GAIN = 1.25


class SegmentationRules(BaseModel):
    """
    Token lists driving the coarse segmentation. A boundary is placed after
    every `split_after` token and before every `split_before` token.
    """
    split_after: list[str] = Field(default_factory=lambda: [".", ",", ";"])
    split_before: list[str] = Field(default_factory=lambda: ["and", "then", "after", "until"])


DEFAULT_RULES = SegmentationRules()


class BoundaryScore(BaseModel):
    """
    Per-gap refinement inputs and outputs (all of length L-1).

    Attributes:
        logits: Pre-sigmoid boundary scores.
        b_hat: Refined boundary confidences in (0, 1).
        prior: Coarse boundary indicator p_i.
        coherence: Windowed cosine coherence psi_i.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    logits: Tensor
    b_hat: Tensor
    prior: np.ndarray
    coherence: np.ndarray

    @property
    def length(self) -> int:
        return len(self.prior) + 1


def segment_rules(inst: Instruction, rules: SegmentationRules = DEFAULT_RULES) -> BoundarySet:
    """Coarse clause boundaries from punctuation and navigational conjunctions."""
    texts = inst.token_texts
    length = len(texts)
    split_after = set(rules.split_after)
    split_before = set(rules.split_before)
    positions: set[int] = set()
    # j is the 1-based token position
    for j, token in enumerate(texts, start=1):
        if token in split_after and j < length:
            positions.add(j)
        if token in split_before and 1 < j < length:
            positions.add(j - 1)
    return BoundarySet(positions=sorted(positions), length=length, source="coarse")


def coherence_cues(h: np.ndarray, window: int = COHERENCE_WINDOW) -> np.ndarray:
    """
    Cosine similarity between the mean of up to `window` token vectors left
    of each gap and the mean of up to `window` token vectors right of it.
    """
    length = h.shape[0]
    cues = np.zeros(max(length - 1, 0))
    for gap in range(1, length):
        left = h[max(0, gap - window) : gap].mean(axis=0)
        right = h[gap : min(length, gap + window)].mean(axis=0)
        norm = np.linalg.norm(left) * np.linalg.norm(right)
        cues[gap - 1] = float(left @ right / norm) if norm > 0 else 0.0
    return cues


def prior_indicator(coarse: BoundarySet) -> np.ndarray:
    prior = np.zeros(max(coarse.length - 1, 0))
    for position in coarse.positions:
        prior[position - 1] = 1.0
    return prior


class BoundaryScorer(Module):
    """
    Refined boundary confidence b_i = sigmoid(MLP([h_i; h_{i+1}; p_i; psi_i])).
    The coherence cue enters as a fixed feature (no gradient).

    A fresh scorer reproduces the coarse split at delta_b = 0.5: hidden unit
    0 sees only p_i, and its output weight exceeds the combined reach
    (d - 1) / sqrt(d) of the other randomly initialised units.
    """

    def __init__(self, d: int, rng: np.random.Generator):
        self.mlp = MLP(2 * d + 2, d, 1, rng)
        prior_column = 2 * d
        hidden, output = self.mlp.hidden, self.mlp.output
        hidden.weight.data[:, 0] = 0.0
        hidden.weight.data[prior_column, 0] = 2.0 * PRIOR_PREACTIVATION
        hidden.bias.data[0] = -PRIOR_PREACTIVATION
        output.weight.data[0, 0] = PRIOR_OUTPUT_GAIN * np.sqrt(d)

    def logits(self, h: Tensor, prior: np.ndarray, coherence: np.ndarray) -> Tensor:
        gaps = h.shape[0] - 1
        features = concat([h[:-1], h[1:], Tensor(np.stack([prior, coherence], axis=1))], axis=1)
        return self.mlp(features).reshape((gaps,))

    def score(self, h: Tensor, coarse: BoundarySet) -> BoundaryScore:
        prior = prior_indicator(coarse)
        if h.shape[0] < 2:
            empty = Tensor(np.zeros(0))
            return BoundaryScore(logits=empty, b_hat=empty, prior=prior, coherence=np.zeros(0))
        coherence = coherence_cues(h.data)
        logits = self.logits(h, prior, coherence)
        return BoundaryScore(logits=logits, b_hat=sigmoid(logits), prior=prior, coherence=coherence)


def score_boundaries(h: Tensor, coarse: BoundarySet, scorer: BoundaryScorer) -> BoundaryScore:
    return scorer.score(h, coarse)


def split(length: int, positions: list[int]) -> SegmentSet:
    """Partitions tokens [0, length) at the given 1-based gap positions."""
    starts = [0, *positions]
    stops = [*positions, length]
    return SegmentSet(length=length, clauses=list(zip(starts, stops)))


def refine(scores: BoundaryScore, delta_b: float = DEFAULT_DELTA_B) -> tuple[BoundarySet, SegmentSet]:
    """Keeps gaps whose confidence strictly exceeds delta_b and splits there."""
    positions = [i + 1 for i, confidence in enumerate(scores.b_hat.data) if confidence > delta_b]
    refined = BoundarySet(positions=positions, length=scores.length, source="refined")
    return refined, split(scores.length, positions)


def boundary_log_confidence(scores: BoundaryScore, segs: SegmentSet) -> Tensor:
    """
    Log-probability of each clause's hard edges under b_hat: log b for its
    outer boundaries plus log(1 - b) for the gaps inside it. Uses
    log-sigmoid of the logits so saturated scores stay finite.
    """
    gaps = segs.length - 1
    if gaps == 0:
        return Tensor(np.zeros(segs.count))
    keep = np.zeros((segs.count, gaps))
    merge = np.zeros((segs.count, gaps))
    for k, (start, stop) in enumerate(segs.clauses):
        if start > 0:
            keep[k, start - 1] = 1.0
        if stop < segs.length:
            keep[k, stop - 1] = 1.0
        merge[k, start : stop - 1] = 1.0
    log_keep = -(-scores.logits).softplus()
    log_merge = -scores.logits.softplus()
    return Tensor(keep) @ log_keep + Tensor(merge) @ log_merge


def straight_through_unit(log_confidence: Tensor) -> Tensor:
    """exp(c - stopgrad(c)): exactly 1.0 forward, d/dc = 1 backward."""
    return (log_confidence - log_confidence.detach()).exp()
