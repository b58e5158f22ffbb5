"""
Hybrid optimisation: teacher-forced imitation plus advantage actor-critic,
combined as total = L_RL + lambda * L_IL.
"""

import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator
from tqdm import tqdm

from src.domain.checkpoint import save_checkpoint
from src.domain.entities import EpisodeSpec, RoutingMode, World
from src.domain.exceptions import ContractError, TrainingDivergedError
from src.domain.numerics import Tensor, concat
from src.engine.agent import NavigationModel
from src.engine.config import NavigationConfig
from src.engine.evaluation import build_model, evaluate
from src.engine.optim import Adam, clip_grad_norm
from src.engine.rollout import EpisodeRollout, PolicyMode, run_episode
from src.processing.tokenizer import Vocabulary
from src.simulation.episodes import make_episodes
from src.simulation.world import build_vocabulary, generate_world

logger = logging.getLogger(__name__)

VALUE_COEF = 0.5
VAL_SEED_OFFSET = 10_000
UNSEEN_WORLD_OFFSET = 500
AUDIT_TOLERANCE = 1e-12


class LossReport(BaseModel):
    """
    Scalar loss values of one batch. `l_rl` is the RL term as it enters the
    total (already scaled by the RL weight, 0 during the imitation warmup).
    """
    l_il: float
    l_rl: float
    lam: float
    total: float

    @model_validator(mode="after")
    def check_total(self) -> "LossReport":
        if self.l_il < 0 or self.lam < 0:
            raise ValueError(f"L_IL and lambda must be nonnegative: {self.l_il}, {self.lam}")
        expected = self.l_rl + self.lam * self.l_il
        if np.isfinite(self.total) and not np.isclose(self.total, expected, rtol=1e-12, atol=1e-12):
            raise ValueError(f"total {self.total} != {self.l_rl} + {self.lam} * {self.l_il}")
        return self

    @classmethod
    def combine(cls, l_il: float, l_rl: float, lam: float) -> "LossReport":
        return cls(l_il=l_il, l_rl=l_rl, lam=lam, total=l_rl + lam * l_il)


def teacher_forced_cross_entropy(rollout: EpisodeRollout) -> Tensor:
    """Mean over decisions of -log p(oracle action)."""
    log_probs = rollout.log_probs
    if not log_probs:
        raise ContractError("teacher-forced rollout has no decisions")
    return -concat([lp.reshape((1,)) for lp in log_probs]).mean()


def il_loss(
    model: NavigationModel,
    world: World,
    spec: EpisodeSpec,
    vocab: Vocabulary,
    noise_sigma: float = 0.1,
    cgip_enabled: bool = True,
    fgip_enabled: bool = True,
) -> Tensor:
    """Rolls along the oracle path (straight-through routing) and scores the oracle actions."""
    rollout = run_episode(
        model,
        world,
        spec,
        vocab,
        policy=PolicyMode.TEACHER,
        mode=RoutingMode.TRAIN,
        noise_sigma=noise_sigma,
        cgip_enabled=cgip_enabled,
        fgip_enabled=fgip_enabled,
    )
    return teacher_forced_cross_entropy(rollout)


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    returns = np.zeros(len(rewards))
    running = 0.0
    for i in reversed(range(len(rewards))):
        running = rewards[i] + gamma * running
        returns[i] = running
    return returns


def rl_loss(rollout: EpisodeRollout, gamma: float, beta: float) -> tuple[Tensor, dict[str, float]]:
    """
    A2C: policy = -mean(A . log pi) with detached advantages, value =
    mean((G - V)^2), L_RL = policy + 0.5 value - beta entropy.
    """
    if not rollout.steps:
        raise ContractError("cannot compute an actor-critic loss on an empty rollout")
    values = rollout.values
    if len(values) != len(rollout.steps):
        raise ContractError("actor-critic rollouts need a value estimate at every step")
    returns = discounted_returns(rollout.rewards, gamma)
    log_pi = concat([lp.reshape((1,)) for lp in rollout.log_probs])
    v = concat([value.reshape((1,)) for value in values])
    advantages = returns - v.data

    policy_term = -(Tensor(advantages) * log_pi).mean()
    value_term = ((Tensor(returns) - v) ** 2).mean()
    loss = policy_term + VALUE_COEF * value_term
    entropy = concat([h.reshape((1,)) for h in rollout.entropies]).mean()
    if beta > 0:
        loss = loss - beta * entropy
    parts = {"policy": policy_term.item(), "value": value_term.item(), "entropy": entropy.item()}
    return loss, parts


class GradientAudit:
    """
    Records which parameters ever received a pre-clipping gradient larger
    than `tolerance` in absolute value. Round-off from terms that cancel
    exactly stays below it.
    """

    def __init__(self, model: NavigationModel, tolerance: float = AUDIT_TOLERANCE):
        self.names = [name for name, _ in model.named_parameters()]
        self.tolerance = tolerance
        self.touched: set[str] = set()

    def record(self, model: NavigationModel) -> None:
        for name, parameter in model.named_parameters():
            if parameter.grad is not None and np.max(np.abs(parameter.grad), initial=0.0) > self.tolerance:
                self.touched.add(name)

    def untouched(self, exclude: tuple[str, ...] = ()) -> list[str]:
        return [n for n in self.names if n not in self.touched and not n.startswith(exclude)]


class EpisodePools(BaseModel):
    """Training, validation (held-out seeds, seen worlds) and unseen-layout episodes."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    worlds: dict[int, World]
    train: list[EpisodeSpec]
    val: list[EpisodeSpec]
    unseen: list[EpisodeSpec]


def build_pools(config: NavigationConfig, vocab: Vocabulary) -> EpisodePools:
    base = config.seed * 1000
    seen = [generate_world(base + i, config.n_nodes, vocab) for i in range(config.n_train_worlds)]
    unseen = [generate_world(base + UNSEEN_WORLD_OFFSET + i, config.n_nodes, vocab) for i in range(config.n_unseen_worlds)]
    train_seeds = range(config.episodes_per_world)
    val_seeds = range(VAL_SEED_OFFSET, VAL_SEED_OFFSET + config.val_episodes_per_world)
    kwargs = {"max_legs": config.max_legs, "success_radius": config.success_radius}
    return EpisodePools(
        worlds={w.seed: w for w in [*seen, *unseen]},
        train=make_episodes(seen, train_seeds, **kwargs),
        val=make_episodes(seen, val_seeds, **kwargs),
        unseen=make_episodes(unseen, val_seeds, **kwargs),
    )


class TrainingResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: NavigationModel
    vocab: Vocabulary
    history: pd.DataFrame
    best_checkpoint: Optional[Path] = None
    best_val_spl: float = -1.0
    untouched_parameters: list[str] = []


def batch_loss(
    model: NavigationModel,
    pools: EpisodePools,
    batch: list[EpisodeSpec],
    vocab: Vocabulary,
    config: NavigationConfig,
    rl_weight: float,
    iteration: int,
) -> tuple[Tensor, LossReport]:
    il_terms: list[Tensor] = []
    rl_terms: list[Tensor] = []
    for spec in batch:
        world = pools.worlds[spec.world_seed]
        il_terms.append(
            il_loss(model, world, spec, vocab, config.noise_sigma, config.cgip_enabled, config.fgip_enabled).reshape((1,))
        )
        if rl_weight > 0:
            rollout = run_episode(
                model,
                world,
                spec,
                vocab,
                policy=PolicyMode.SAMPLE,
                mode=RoutingMode.TRAIN,
                seed=config.seed + iteration,
                max_steps=config.max_steps,
                noise_sigma=config.noise_sigma,
                cgip_enabled=config.cgip_enabled,
                fgip_enabled=config.fgip_enabled,
                track_values=True,
            )
            if rollout.steps:
                rl_terms.append(rl_loss(rollout, config.gamma, config.beta)[0].reshape((1,)))

    l_il = concat(il_terms).mean()
    weighted_rl = rl_weight * concat(rl_terms).mean() if rl_terms else None
    total = config.lam * l_il if weighted_rl is None else weighted_rl + config.lam * l_il
    report = LossReport(
        l_il=l_il.item(),
        l_rl=weighted_rl.item() if weighted_rl is not None else 0.0,
        lam=config.lam,
        total=total.item(),
    )
    return total, report


def disabled_branches(config: NavigationConfig) -> tuple[str, ...]:
    """Parameter prefixes that cannot receive gradients under this configuration."""
    prefixes: list[str] = []
    if not config.cgip_enabled:
        prefixes += ["cgip.", "boundary_scorer."]
    if not config.fgip_enabled:
        prefixes.append("fgip.")
    if config.rl_weight == 0 or int(config.il_warmup * config.iters) >= config.iters:
        prefixes.append("value.")
    return tuple(prefixes)


def _dump_diverged(out_dir: Path, iteration: int, batch: list[EpisodeSpec]) -> list[tuple[int, int]]:
    seeds = [(spec.world_seed, spec.episode_seed) for spec in batch]
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "diverged_batch.json", "w", encoding="utf-8") as f:
        json.dump({"iteration": iteration, "batch_seeds": seeds}, f, indent=2)
    return seeds


def train_loop(
    config: NavigationConfig,
    out_dir: str | Path,
    vocab: Optional[Vocabulary] = None,
    pools: Optional[EpisodePools] = None,
) -> TrainingResult:
    """
    Per iteration: sample a batch, compute total = L_RL + lambda * L_IL,
    audit raw gradients, clip, take an Adam step. Every `eval_every`
    iterations the greedy policy is evaluated on the validation pool and
    the best checkpoint by SPL is kept.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = vocab or build_vocabulary()
    pools = pools or build_pools(config, vocab)
    vocab.save(out_dir / "vocab.txt")

    model = build_model(vocab, config)
    model.zero_grad()
    optimizer = Adam(model.parameters(), lr=config.lr)
    audit = GradientAudit(model)
    rng = np.random.default_rng(config.seed)
    warmup = int(config.il_warmup * config.iters)

    history: list[dict] = []
    best_spl, best_path = -1.0, None
    history_path = out_dir / "history.jsonl"
    history_path.write_text("", encoding="utf-8")

    for iteration in tqdm(range(config.iters), desc="train", disable=not config.progress):
        replace = config.batch > len(pools.train)
        picks = rng.choice(len(pools.train), size=config.batch, replace=replace)
        batch = [pools.train[int(i)] for i in picks]
        rl_weight = config.rl_weight if iteration >= warmup else 0.0

        total, report = batch_loss(model, pools, batch, vocab, config, rl_weight, iteration)
        if not np.isfinite(report.total):
            seeds = _dump_diverged(out_dir, iteration, batch)
            logger.error("Loss diverged at iteration %d (L_IL=%s, L_RL=%s)", iteration, report.l_il, report.l_rl)
            raise TrainingDivergedError(iteration, seeds)

        total.backward()
        audit.record(model)
        clip_grad_norm(model.parameters(), config.grad_clip)
        optimizer.step()
        optimizer.zero_grad()

        record = {"iteration": iteration, "l_il": report.l_il, "l_rl": report.l_rl, "total": report.total,
                  "val_sr": None, "val_spl": None}  # fmt: skip
        if (iteration + 1) % config.eval_every == 0 or iteration + 1 == config.iters:
            summary = evaluate(model, pools.worlds, pools.val, vocab, config).summary
            record["val_sr"], record["val_spl"] = summary["sr"], summary["spl"]
            logger.info("iteration %d: val SR=%.3f SPL=%.3f", iteration + 1, summary["sr"], summary["spl"])
            if summary["spl"] > best_spl:
                best_spl = summary["spl"]
                best_path = save_checkpoint(out_dir / "best.ckpt", model.state_dict())
        history.append(record)
        with open(history_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")

    save_checkpoint(out_dir / "final.ckpt", model.state_dict())
    untouched = audit.untouched(disabled_branches(config))
    if untouched:
        logger.warning("Parameters without gradient during training: %s", untouched)
    return TrainingResult(
        model=model,
        vocab=vocab,
        history=pd.DataFrame(history),
        best_checkpoint=best_path,
        best_val_spl=best_spl,
        untouched_parameters=untouched,
    )
