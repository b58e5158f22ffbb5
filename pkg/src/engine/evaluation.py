import logging
from pathlib import Path
from typing import Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict

from src.domain.checkpoint import load_checkpoint
from src.domain.entities import EpisodeSpec, MetricReport, RoutingMode, World
from src.domain.nav_metrics import summarize
from src.domain.numerics import no_grad
from src.engine.agent import NavigationModel
from src.engine.config import NavigationConfig
from src.engine.rollout import EpisodeRollout, PolicyMode, run_episode
from src.processing.segmenter import refine, segment_rules
from src.processing.tokenizer import Vocabulary, tokenize

logger = logging.getLogger(__name__)


class EvaluationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    reports: list[MetricReport]
    summary: dict[str, float]
    rollouts: list[EpisodeRollout]


def evaluate(
    model: NavigationModel,
    worlds: dict[int, World],
    episodes: list[EpisodeSpec],
    vocab: Vocabulary,
    config: Optional[NavigationConfig] = None,
    cgip_enabled: Optional[bool] = None,
    fgip_enabled: Optional[bool] = None,
) -> EvaluationResult:
    """
    Greedy rollouts in infer mode, no graph recorded. Ablation flags default
    to the configuration's.
    """
    config = config or NavigationConfig()
    cgip = config.cgip_enabled if cgip_enabled is None else cgip_enabled
    fgip = config.fgip_enabled if fgip_enabled is None else fgip_enabled
    rollouts: list[EpisodeRollout] = []
    with no_grad():
        for spec in episodes:
            rollouts.append(
                run_episode(
                    model,
                    worlds[spec.world_seed],
                    spec,
                    vocab,
                    policy=PolicyMode.GREEDY,
                    mode=RoutingMode.INFER,
                    seed=config.seed,
                    max_steps=config.max_steps,
                    noise_sigma=config.noise_sigma,
                    cgip_enabled=cgip,
                    fgip_enabled=fgip,
                )
            )
    reports = [r.metrics for r in rollouts]
    summary = summarize(reports)
    logger.debug("Evaluated %d episodes (cgip=%s, fgip=%s): %s", len(episodes), cgip, fgip, summary)
    return EvaluationResult(reports=reports, summary=summary, rollouts=rollouts)


def build_model(vocab: Vocabulary, config: NavigationConfig) -> NavigationModel:
    return NavigationModel(
        vocab.size, d=config.d, heads=config.heads, max_length=config.max_length, delta_b=config.delta_b, seed=config.seed
    )


def load_model(checkpoint: str | Path, vocab: Vocabulary, config: NavigationConfig) -> NavigationModel:
    model = build_model(vocab, config)
    model.load_state_dict(load_checkpoint(checkpoint))
    return model


class SegmentRecord(BaseModel):
    """Segmentation of one instruction; clause spans are 0-based half-open token ranges."""
    instruction: str
    tokens: list[str]
    coarse: list[int]
    refined: list[int]
    clauses: list[tuple[int, int]]
    b_hat: list[float]


def segment_record(model: NavigationModel, vocab: Vocabulary, text: str) -> SegmentRecord:
    instruction = tokenize(text, vocab)
    with no_grad():
        h, _ = model.encoder.encode(instruction)
        coarse = segment_rules(instruction, model.rules)
        scores = model.boundary_scorer.score(h, coarse)
        refined, segs = refine(scores, model.delta_b)
    return SegmentRecord(
        instruction=text,
        tokens=instruction.token_texts,
        coarse=coarse.positions,
        refined=refined.positions,
        clauses=segs.clauses,
        b_hat=[float(b) for b in scores.b_hat.data],
    )


def plot_data_frame(rollouts: list[EpisodeRollout]) -> pd.DataFrame:
    """
    Long-format plot data: one row per (episode, step, clause) with the
    clause probability alpha, the routed clause and the agent coordinates.
    """
    rows = []
    for episode, rollout in enumerate(rollouts):
        positions = rollout.trajectory.positions
        for step in rollout.steps:
            diag = step.diagnostics
            x, y = positions[min(diag.t, len(positions) - 1)]
            for clause, alpha in enumerate(diag.alpha):
                rows.append(
                    {
                        "episode": episode,
                        "world_seed": rollout.spec.world_seed,
                        "episode_seed": rollout.spec.episode_seed,
                        "t": diag.t,
                        "node": diag.node,
                        "x": x,
                        "y": y,
                        "action": diag.action,
                        "k_star": diag.k_star,
                        "clause": clause,
                        "alpha": alpha,
                    }
                )
    columns = ["episode", "world_seed", "episode_seed", "t", "node", "x", "y", "action", "k_star", "clause", "alpha"]
    return pd.DataFrame(rows, columns=columns)
