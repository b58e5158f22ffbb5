"""
Synthetic navigation worlds: random geometric graphs over a square of
abstract meters, with landmark words on every node.
"""

import heapq

import numpy as np
from pydantic import BaseModel, Field
from scipy.sparse import triu
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist
from sklearn.neighbors import radius_neighbors_graph

from src.domain.entities import World
from src.domain.exceptions import InputError
from src.processing.tokenizer import Vocabulary

LANDMARK_WORDS = (
    "bedroom", "kitchen", "bathroom", "hallway", "staircase", "doorway", "sofa", "table",
    "fireplace", "window", "piano", "bookshelf", "lamp", "painting", "mirror", "plant",
    "wardrobe", "bathtub", "sink", "fridge", "oven", "desk", "chair", "rug",
    "closet", "balcony", "garage", "laundry", "pantry", "archway",
)  # fmt: skip
TEMPLATE_WORDS = ("walk", "to", "the", "then", "and", "stop", ".", ",")


class WorldConfig(BaseModel):
    connect_radius: float = Field(1.8, gt=0.0)
    min_separation: float = Field(1.0, ge=0.0)
    extent_scale: float = Field(1.5, gt=0.0)
    landmarks_per_node: int = Field(1, ge=1)
    max_placement_attempts: int = Field(200, ge=1)


DEFAULT_WORLD_CONFIG = WorldConfig()


def build_vocabulary() -> Vocabulary:
    """Vocabulary of the synthetic corpus: template words then landmark words."""
    return Vocabulary.build([*TEMPLATE_WORDS, *LANDMARK_WORDS])


def _place_nodes(rng: np.random.Generator, n_nodes: int, config: WorldConfig) -> np.ndarray:
    extent = np.sqrt(n_nodes) * config.extent_scale
    points: list[np.ndarray] = []
    for _ in range(n_nodes):
        candidate = rng.uniform(0.0, extent, size=2)
        for _ in range(config.max_placement_attempts):
            if not points or cdist(candidate[None, :], np.asarray(points)).min() >= config.min_separation:
                break
            candidate = rng.uniform(0.0, extent, size=2)
        points.append(candidate)
    return np.asarray(points).reshape(n_nodes, 2)


def _connect(positions: np.ndarray, edges: set[tuple[int, int]]) -> set[tuple[int, int]]:
    """Adds the closest cross-component pair until the graph is connected."""
    n = len(positions)
    while True:
        adjacency = np.zeros((n, n))
        for a, b in edges:
            adjacency[a, b] = adjacency[b, a] = 1.0
        n_components, labels = connected_components(adjacency, directed=False)
        if n_components <= 1:
            return edges
        inside = np.flatnonzero(labels == labels[0])
        outside = np.flatnonzero(labels != labels[0])
        distances = cdist(positions[inside], positions[outside])
        i, j = np.unravel_index(np.argmin(distances), distances.shape)
        a, b = sorted((int(inside[i]), int(outside[j])))
        edges.add((a, b))


def _assign_landmarks(
    rng: np.random.Generator, n_nodes: int, edges: set[tuple[int, int]], words: list[str], per_node: int
) -> list[list[str]]:
    neighbours: list[set[int]] = [set() for _ in range(n_nodes)]
    for a, b in edges:
        neighbours[a].add(b)
        neighbours[b].add(a)
    landmarks: list[list[str]] = []
    for node in range(n_nodes):
        taken = {w for other in neighbours[node] if other < node for w in landmarks[other]}
        pool = [w for w in words if w not in taken] or list(words)
        count = min(per_node, len(pool))
        landmarks.append([str(w) for w in rng.choice(pool, size=count, replace=False)])
    return landmarks


def generate_world(
    seed: int,
    n_nodes: int,
    vocab: Vocabulary | None = None,
    config: WorldConfig = DEFAULT_WORLD_CONFIG,
) -> World:
    """
    Random geometric graph: nodes within `connect_radius` are linked, then
    the closest pairs across components are linked until connected.
    Deterministic per seed.
    """
    if n_nodes < 1:
        raise InputError(f"a world needs at least one node, got {n_nodes}")
    rng = np.random.default_rng(seed)
    words = [w for w in LANDMARK_WORDS if vocab is None or w in vocab]
    if not words:
        raise InputError("vocabulary contains no landmark words")

    positions = _place_nodes(rng, n_nodes, config)
    edges: set[tuple[int, int]] = set()
    if n_nodes > 1:
        graph = triu(radius_neighbors_graph(positions, config.connect_radius, mode="connectivity"), k=1).tocoo()
        edges = {(int(a), int(b)) for a, b in zip(graph.row, graph.col)}
        edges = _connect(positions, edges)
    landmarks = _assign_landmarks(rng, n_nodes, edges, words, config.landmarks_per_node)
    return World(
        seed=seed,
        positions=[(float(x), float(y)) for x, y in positions],
        edges=sorted(edges),
        landmarks=landmarks,
    )


def shortest_paths(world: World, source: int) -> tuple[np.ndarray, list[int]]:
    """
    Uniform-cost search from `source` over Euclidean edge lengths.
    Returns distances (inf when unreachable) and predecessors (-1 for none).
    Equal-cost frontiers are expanded in node order.
    """
    distances = np.full(world.n_nodes, np.inf)
    predecessors = [-1] * world.n_nodes
    distances[source] = 0.0
    frontier: list[tuple[float, int]] = [(0.0, source)]
    done: set[int] = set()
    while frontier:
        dist, node = heapq.heappop(frontier)
        if node in done:
            continue
        done.add(node)
        for other in world.neighbors(node):
            candidate = dist + world.distance(node, other)
            if candidate < distances[other]:
                distances[other] = candidate
                predecessors[other] = node
                heapq.heappush(frontier, (candidate, other))
    return distances, predecessors


def shortest_distances(world: World, source: int) -> np.ndarray:
    return shortest_paths(world, source)[0]


def shortest_path(world: World, start: int, goal: int) -> tuple[list[int], float]:
    """Oracle node sequence from start to goal and its length."""
    distances, predecessors = shortest_paths(world, start)
    if not np.isfinite(distances[goal]):
        raise InputError(f"node {goal} is unreachable from {start}")
    path = [goal]
    while path[-1] != start:
        path.append(predecessors[path[-1]])
    return path[::-1], float(distances[goal])
