from enum import Enum
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from src.domain.numerics import Tensor


class RoutingMode(str, Enum):
    """
    Clause routing regime.

    TRAIN routes with the straight-through estimator, INFER routes with a
    constant one-hot selection that carries no gradient. RELAXED is the
    smooth surrogate used for gradient verification: the selection is alpha
    itself and boundary confidences scale the clause scores.
    """
    TRAIN = "train"
    INFER = "infer"
    RELAXED = "relaxed"


class Instruction(BaseModel):
    """
    A tokenized navigation instruction.

    Attributes:
        raw (str): Original text.
        tokens (list[int]): Vocabulary ids, one per token (length L).
        token_texts (list[str]): Normalised token strings aligned with `tokens`.
    """
    raw: str
    tokens: list[int] = Field(..., min_length=1)
    token_texts: list[str] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_alignment(self) -> "Instruction":
        if len(self.tokens) != len(self.token_texts):
            raise ValueError("tokens and token_texts must have the same length")
        return self

    def __len__(self) -> int:
        return len(self.tokens)


class InstructionState(BaseModel):
    """The L x d token-level instruction representation at a given step."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: Tensor
    step: int = Field(0, ge=0)

    @property
    def length(self) -> int:
        return self.values.shape[0]


class Observation(BaseModel):
    """Per-step perceptual state V_t (N x d)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray
    step: int = 0

    @field_validator("features", mode="before")
    @classmethod
    def check_features(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError(f"observation features must be N x d with N >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("observation features must be finite")
        return v


class BoundarySet(BaseModel):
    """
    Inter-token boundaries. Gap i (1-based) lies between tokens i and i+1,
    which is also the 0-based index of the first token after the boundary.
    """
    positions: list[int] = Field(default_factory=list)
    length: int = Field(..., ge=1)
    source: Literal["coarse", "refined"] = "coarse"

    @model_validator(mode="after")
    def check_positions(self) -> "BoundarySet":
        if any(b <= a for a, b in zip(self.positions, self.positions[1:])):
            raise ValueError(f"boundary positions must be strictly increasing: {self.positions}")
        if self.positions and (self.positions[0] < 1 or self.positions[-1] > self.length - 1):
            raise ValueError(f"boundary positions must lie in [1, {self.length - 1}]: {self.positions}")
        return self


class SegmentSet(BaseModel):
    """
    Clause partition of an instruction as 0-based half-open token ranges.
    """
    length: int = Field(..., ge=1)
    clauses: list[tuple[int, int]]

    @model_validator(mode="after")
    def check_partition(self) -> "SegmentSet":
        expected_start = 0
        for start, stop in self.clauses:
            if start != expected_start or stop <= start:
                raise ValueError(f"clauses must be contiguous and non-empty: {self.clauses}")
            expected_start = stop
        if expected_start != self.length:
            raise ValueError(f"clauses must cover [0, {self.length}): {self.clauses}")
        return self

    @property
    def count(self) -> int:
        return len(self.clauses)

    def token_indices(self, k: int) -> list[int]:
        start, stop = self.clauses[k]
        return list(range(start, stop))

    def membership(self) -> np.ndarray:
        """m x L indicator matrix, row k marks the tokens of clause k."""
        matrix = np.zeros((self.count, self.length))
        for k, (start, stop) in enumerate(self.clauses):
            matrix[k, start:stop] = 1.0
        return matrix


class NavigationTarget(BaseModel):
    """What the metrics need to know about an episode's goal."""
    goal_position: tuple[float, float]
    success_radius: float = Field(1.0, gt=0.0)
    shortest_path_length: float = Field(..., ge=0.0)


class World(BaseModel):
    """
    Navigation graph. Positions are in abstract meters, edges are undirected
    and their length is the Euclidean distance between endpoints.
    """
    seed: int
    positions: list[tuple[float, float]] = Field(..., min_length=1)
    edges: list[tuple[int, int]] = Field(default_factory=list)
    landmarks: list[list[str]]

    _adjacency: Optional[list[list[int]]] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def check_graph(self) -> "World":
        n = len(self.positions)
        if len(self.landmarks) != n or any(len(words) < 1 for words in self.landmarks):
            raise ValueError("every node needs at least one landmark")
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise ValueError(f"invalid edge ({a}, {b}) for {n} nodes")
        return self

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    def neighbors(self, node: int) -> list[int]:
        if self._adjacency is None:
            adjacency: list[set[int]] = [set() for _ in range(self.n_nodes)]
            for a, b in self.edges:
                adjacency[a].add(b)
                adjacency[b].add(a)
            self._adjacency = [sorted(s) for s in adjacency]
        return self._adjacency[node]

    def position(self, node: int) -> np.ndarray:
        return np.asarray(self.positions[node], dtype=np.float64)

    def distance(self, a: int, b: int) -> float:
        return float(np.hypot(*(self.position(a) - self.position(b))))


class EpisodeSpec(BaseModel):
    """
    A generated navigation episode.

    Attributes:
        clause_boundaries (list[int]): Ground-truth gap positions of the template clauses
            (diagnostics only, never a training label).
        clause_legs (list[Optional[int]]): Path leg described by each clause; None for "stop".
    """
    world_seed: int
    episode_seed: int
    start: int
    goal: int
    goal_position: tuple[float, float]
    success_radius: float = Field(1.0, gt=0.0)
    instruction: str
    oracle_path: list[int] = Field(..., min_length=1)
    oracle_length: float = Field(..., ge=0.0)
    clause_boundaries: list[int] = Field(default_factory=list)
    clause_legs: list[Optional[int]] = Field(default_factory=list)

    @property
    def target(self) -> NavigationTarget:
        return NavigationTarget(
            goal_position=self.goal_position,
            success_radius=self.success_radius,
            shortest_path_length=self.oracle_length,
        )

    @property
    def legs(self) -> int:
        return len(self.oracle_path) - 1


class StepDiagnostics(BaseModel):
    t: int
    node: int
    action: Optional[int] = None
    k_star: int
    alpha: list[float]
    gate_mean: Optional[float] = None


class Trajectory(BaseModel):
    """Visited nodes with their positions; `stopped` is set by STOP or a forced stop."""
    nodes: list[int] = Field(..., min_length=1)
    positions: list[tuple[float, float]] = Field(..., min_length=1)
    stopped: bool = False
    timed_out: bool = False
    diagnostics: list[StepDiagnostics] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_alignment(self) -> "Trajectory":
        if len(self.nodes) != len(self.positions):
            raise ValueError("nodes and positions must have the same length")
        return self

    @property
    def length(self) -> float:
        points = np.asarray(self.positions, dtype=np.float64)
        if len(points) < 2:
            return 0.0
        steps = np.diff(points, axis=0)
        return float(np.hypot(steps[:, 0], steps[:, 1]).sum())


class MetricReport(BaseModel):
    """Per-episode navigation metrics (TL and NE in abstract meters)."""
    tl: float = Field(..., ge=0.0)
    ne: float = Field(..., ge=0.0)
    sr: int = Field(..., ge=0, le=1)
    osr: int = Field(..., ge=0, le=1)
    spl: float = Field(..., ge=0.0, le=1.0)
    rgspl: float = Field(..., ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_consistency(self) -> "MetricReport":
        if self.spl > self.sr or self.osr < self.sr:
            raise ValueError(f"inconsistent metrics: SR={self.sr}, SPL={self.spl}, OSR={self.osr}")
        return self
