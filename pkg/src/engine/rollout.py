"""
Episode driver: begin -> observe -> step -> act until STOP or the move
limit, recording everything the trainer and the metrics need.
"""

import json
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.domain.entities import EpisodeSpec, MetricReport, RoutingMode, StepDiagnostics, Trajectory, World
from src.domain.nav_metrics import evaluate_trajectory
from src.domain.numerics import Tensor
from src.engine.agent import NavigationModel
from src.processing.tokenizer import Vocabulary, tokenize
from src.simulation.observations import DEFAULT_NOISE_SIGMA, observe
from src.simulation.world import shortest_distances

DEFAULT_MAX_STEPS = 20
SUCCESS_REWARD = 2.0
FAILURE_REWARD = -2.0


class PolicyMode(str, Enum):
    TEACHER = "teacher"  # execute the oracle action, score the policy against it
    SAMPLE = "sample"
    GREEDY = "greedy"


class StepRecord(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    diagnostics: StepDiagnostics
    reward: float = 0.0
    log_prob: Optional[Tensor] = None
    entropy: Optional[Tensor] = None
    value: Optional[Tensor] = None


class EpisodeRollout(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    spec: EpisodeSpec
    trajectory: Trajectory
    steps: list[StepRecord]
    metrics: MetricReport

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.reward for s in self.steps], dtype=np.float64)

    @property
    def log_probs(self) -> list[Tensor]:
        return [s.log_prob for s in self.steps if s.log_prob is not None]

    @property
    def values(self) -> list[Tensor]:
        return [s.value for s in self.steps if s.value is not None]

    @property
    def entropies(self) -> list[Tensor]:
        return [s.entropy for s in self.steps if s.entropy is not None]


def _oracle_action(spec: EpisodeSpec, t: int, neighbors: list[int]) -> int:
    if t + 1 < len(spec.oracle_path):
        return neighbors.index(spec.oracle_path[t + 1])
    return len(neighbors)


def run_episode(
    model: NavigationModel,
    world: World,
    spec: EpisodeSpec,
    vocab: Vocabulary,
    policy: PolicyMode = PolicyMode.GREEDY,
    mode: RoutingMode = RoutingMode.INFER,
    seed: int = 0,
    max_steps: int = DEFAULT_MAX_STEPS,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    cgip_enabled: bool = True,
    fgip_enabled: bool = True,
    track_values: bool = False,
) -> EpisodeRollout:
    """
    Teacher-forced rollouts take exactly len(oracle_path) decisions (the
    moves, then STOP). Other policies stop on STOP or after `max_steps`
    moves, in which case STOP is forced and the terminal reward is added to
    the last move.
    """
    instruction = tokenize(spec.instruction, vocab)
    agent = model.begin(instruction, cgip_enabled, fgip_enabled)
    rng = np.random.default_rng([spec.world_seed, spec.episode_seed, seed])
    embeddings = model.encoder.embedding.data
    target = spec.target
    goal_distances = shortest_distances(world, spec.goal)

    node = spec.start
    nodes = [node]
    records: list[StepRecord] = []
    stopped = timed_out = False
    decisions = len(spec.oracle_path) if policy == PolicyMode.TEACHER else max_steps + 1

    def terminal_reward() -> float:
        error = float(np.hypot(*(world.position(node) - np.asarray(target.goal_position))))
        return SUCCESS_REWARD if error <= target.success_radius else FAILURE_REWARD

    for t in range(decisions):
        if policy != PolicyMode.TEACHER and t == max_steps:
            # move budget exhausted: forced STOP
            stopped = timed_out = True
            if records:
                records[-1].reward += terminal_reward()
            break

        bundle = observe(world, node, vocab, embeddings, rng, noise_sigma, step=t)
        result = model.step(agent, bundle.observation, mode)
        agent = result.agent
        scores = model.act_from(agent, bundle.candidates, bundle.mask)

        if policy == PolicyMode.TEACHER:
            action = _oracle_action(spec, t, bundle.neighbors)
        elif policy == PolicyMode.SAMPLE:
            action = scores.sample(rng)
        else:
            action = scores.greedy()

        record = StepRecord(
            diagnostics=StepDiagnostics(
                t=t,
                node=node,
                action=action,
                k_star=result.relevance.k_star,
                alpha=[float(a) for a in result.relevance.alpha.data],
                gate_mean=result.gate_mean,
            ),
            log_prob=scores.log_prob(action),
            entropy=scores.entropy(),
            value=model.value_estimate(agent, bundle.observation) if track_values else None,
        )

        records.append(record)
        if action == bundle.stop_index:
            record.reward = terminal_reward()
            stopped = True
            break
        next_node = bundle.neighbors[action]
        record.reward = float(goal_distances[node] - goal_distances[next_node])
        node = next_node
        nodes.append(node)

    trajectory = Trajectory(
        nodes=nodes,
        positions=[world.positions[n] for n in nodes],
        stopped=stopped,
        timed_out=timed_out,
        diagnostics=[r.diagnostics for r in records],
    )
    return EpisodeRollout(
        spec=spec,
        trajectory=trajectory,
        steps=records,
        metrics=evaluate_trajectory(trajectory, target),
    )


def trajectory_log_records(rollout: EpisodeRollout) -> list[dict]:
    """One record per step, then a final record carrying the metrics."""
    records = [step.diagnostics.model_dump() for step in rollout.steps]
    records.append(
        {
            "world_seed": rollout.spec.world_seed,
            "episode_seed": rollout.spec.episode_seed,
            "stopped": rollout.trajectory.stopped,
            "timed_out": rollout.trajectory.timed_out,
            "metrics": rollout.metrics.model_dump(),
        }
    )
    return records


def write_trajectory_log(path: str | Path, rollouts: list[EpisodeRollout]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for rollout in rollouts:
            for record in trajectory_log_records(rollout):
                f.write(json.dumps(record) + "\n")
    return path
