"""
Episode generation: start/goal sampling, oracle paths and templated
instructions with ground-truth clause structure.
"""

from collections.abc import Iterable
from typing import Optional

import numpy as np

from src.domain.entities import EpisodeSpec, World
from src.simulation.world import shortest_paths

DEFAULT_MAX_LEGS = 6
STOP_INSTRUCTION = "stop"


def render_instruction(world: World, path: list[int]) -> tuple[str, list[int], list[Optional[int]]]:
    """
    One "walk to the <landmark>" clause per path leg, joined by "then" and
    closed by "and stop". Returns the text, the 1-based gap positions of the
    clause boundaries and the leg described by every clause (None for stop).
    """
    legs = len(path) - 1
    if legs == 0:
        return STOP_INSTRUCTION, [], [None]
    tokens: list[str] = []
    boundaries: list[int] = []
    for leg, node in enumerate(path[1:]):
        if leg > 0:
            boundaries.append(len(tokens))
            tokens.append("then")
        tokens.extend(["walk", "to", "the", world.landmarks[node][0]])
    boundaries.append(len(tokens))
    tokens.extend(["and", "stop"])
    return " ".join(tokens), boundaries, [*range(legs), None]


def _degenerate_episode(world: World, seed: int, node: int, success_radius: float) -> EpisodeSpec:
    return EpisodeSpec(
        world_seed=world.seed,
        episode_seed=seed,
        start=node,
        goal=node,
        goal_position=world.positions[node],
        success_radius=success_radius,
        instruction=STOP_INSTRUCTION,
        oracle_path=[node],
        oracle_length=0.0,
        clause_boundaries=[],
        clause_legs=[None],
    )


def make_episode(
    world: World,
    seed: int,
    max_legs: int = DEFAULT_MAX_LEGS,
    success_radius: float = 1.0,
) -> EpisodeSpec:
    """
    Samples a start and a goal at least two edges apart when possible (and at
    most `max_legs` edges). Fully determined by (world seed, episode seed).
    """
    rng = np.random.default_rng([world.seed, seed])
    start = int(rng.integers(world.n_nodes))
    if world.n_nodes == 1:
        return _degenerate_episode(world, seed, start, success_radius)

    distances, predecessors = shortest_paths(world, start)

    def path_to(goal: int) -> list[int]:
        path = [goal]
        while path[-1] != start:
            path.append(predecessors[path[-1]])
        return path[::-1]

    paths = {goal: path_to(goal) for goal in range(world.n_nodes) if goal != start and np.isfinite(distances[goal])}
    if not paths:
        return _degenerate_episode(world, seed, start, success_radius)
    preferred = [g for g, p in paths.items() if 2 <= len(p) - 1 <= max_legs]
    fallback = [g for g, p in paths.items() if len(p) - 1 <= max_legs] or sorted(paths)
    goals = preferred or fallback
    goal = int(goals[int(rng.integers(len(goals)))])
    path = paths[goal][: max_legs + 1] if len(paths[goal]) - 1 > max_legs else paths[goal]
    goal = path[-1]

    instruction, boundaries, legs = render_instruction(world, path)
    return EpisodeSpec(
        world_seed=world.seed,
        episode_seed=seed,
        start=start,
        goal=goal,
        goal_position=world.positions[goal],
        success_radius=success_radius,
        instruction=instruction,
        oracle_path=path,
        oracle_length=float(distances[goal]),
        clause_boundaries=boundaries,
        clause_legs=legs,
    )


def make_episodes(
    worlds: Iterable[World],
    seeds: Iterable[int],
    max_legs: int = DEFAULT_MAX_LEGS,
    success_radius: float = 1.0,
) -> list[EpisodeSpec]:
    """Every episode seed on every world, world-major."""
    seeds = list(seeds)
    return [make_episode(world, seed, max_legs, success_radius) for world in worlds for seed in seeds]
