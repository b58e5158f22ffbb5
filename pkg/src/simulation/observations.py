"""
Synthetic perception: panoramic features V_t and candidate features built
from the landmark word embeddings shared with the instruction encoder.
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.domain.entities import Observation, World
from src.processing.tokenizer import Vocabulary

DEFAULT_NOISE_SIGMA = 0.1


class ObservationBundle(BaseModel):
    """
    Attributes:
        observation: V_t, candidate rows first, then the local landmark rows.
        candidates: One feature row per neighbour (K x d).
        neighbors: Node id behind every candidate, in candidate order.
        mask: K + 1 action flags (neighbours, then STOP).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    observation: Observation
    candidates: np.ndarray
    neighbors: list[int]
    mask: np.ndarray

    @property
    def stop_index(self) -> int:
        return len(self.neighbors)


def direction_encoding(world: World, source: int, target: int, d: int) -> np.ndarray:
    """Unit bearing (cos, sin) of the edge source -> target, zero-padded to d."""
    delta = world.position(target) - world.position(source)
    encoding = np.zeros(d)
    norm = np.hypot(*delta)
    if norm > 0:
        encoding[:2] = delta / norm
    return encoding


def landmark_features(words: list[str], vocab: Vocabulary, embeddings: np.ndarray) -> np.ndarray:
    """Unit-normalised embedding rows of the given landmark words."""
    rows = embeddings[[vocab.lookup(w) for w in words]]
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return rows / np.where(norms > 0, norms, 1.0)


def observe(
    world: World,
    node: int,
    vocab: Vocabulary,
    embeddings: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    sigma: float = DEFAULT_NOISE_SIGMA,
    step: int = 0,
) -> ObservationBundle:
    """
    Candidate feature = neighbour landmark embedding + bearing + noise; V_t
    stacks the candidates with the current node's own landmark features, so
    N = #neighbours + #local landmarks.
    """
    d = embeddings.shape[1]
    rng = rng if rng is not None else np.random.default_rng(0)
    neighbors = world.neighbors(node)
    candidates = np.zeros((len(neighbors), d))
    for row, other in enumerate(neighbors):
        landmark = landmark_features(world.landmarks[other], vocab, embeddings).mean(axis=0)
        candidates[row] = landmark + direction_encoding(world, node, other, d)
    local = landmark_features(world.landmarks[node], vocab, embeddings)
    if sigma > 0:
        candidates = candidates + rng.normal(0.0, sigma, size=candidates.shape)
        local = local + rng.normal(0.0, sigma, size=local.shape)
    features = np.vstack([candidates, local])
    return ObservationBundle(
        observation=Observation(features=features, step=step),
        candidates=candidates,
        neighbors=list(neighbors),
        mask=np.ones(len(neighbors) + 1, dtype=bool),
    )
