"""
Module ablation: full model, picker only, refiner only and neither,
evaluated on identical held-out episodes.
"""

import logging
from pathlib import Path
from typing import Optional

import pandas as pd

from src.domain.entities import EpisodeSpec, World
from src.domain.nav_metrics import METRIC_NAMES
from src.engine.agent import NavigationModel
from src.engine.config import NavigationConfig
from src.engine.evaluation import evaluate, load_model
from src.engine.trainer import build_pools, train_loop
from src.processing.tokenizer import Vocabulary
from src.simulation.world import build_vocabulary

logger = logging.getLogger(__name__)

# variant -> (cgip_enabled, fgip_enabled)
VARIANTS = {
    "full": (True, True),
    "cgip_only": (True, False),
    "fgip_only": (False, True),
    "neither": (False, False),
}


def _table(rows: dict[str, dict[str, float]]) -> pd.DataFrame:
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=list(METRIC_NAMES))
    frame.index.name = "variant"
    return frame


def evaluate_variants(
    models: dict[str, NavigationModel],
    worlds: dict[int, World],
    episodes: list[EpisodeSpec],
    vocab: Vocabulary,
    config: NavigationConfig,
) -> pd.DataFrame:
    """Every variant on the same episodes; `models` maps variant name to its model."""
    rows = {}
    for name, (cgip, fgip) in VARIANTS.items():
        result = evaluate(models[name], worlds, episodes, vocab, config, cgip_enabled=cgip, fgip_enabled=fgip)
        rows[name] = result.summary
        logger.info("%s: SR=%.3f SPL=%.3f", name, result.summary["sr"], result.summary["spl"])
    return _table(rows)


def run_ablation(
    config: NavigationConfig,
    out_dir: str | Path,
    checkpoint: Optional[str | Path] = None,
    checkpoints: Optional[dict[str, str | Path]] = None,
    training_seeds: Optional[list[int]] = None,
    vocab: Optional[Vocabulary] = None,
) -> pd.DataFrame:
    """
    Comparison table (variants x metrics) on the unseen-layout episodes.

    With `checkpoint`, all variants share one set of weights; with
    `checkpoints`, each variant loads its own. Otherwise every variant is
    trained from scratch for each seed in `training_seeds` and the summaries
    are averaged over seeds.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = vocab or build_vocabulary()

    if checkpoint is not None or checkpoints is not None:
        pools = build_pools(config, vocab)
        paths = checkpoints or {name: checkpoint for name in VARIANTS}
        models = {name: load_model(paths[name], vocab, config) for name in VARIANTS}
        table = evaluate_variants(models, pools.worlds, pools.unseen, vocab, config)
    else:
        per_seed = []
        for seed in training_seeds or [config.seed]:
            seed_config = config.model_copy(update={"seed": seed})
            pools = build_pools(seed_config, vocab)
            models = {}
            for name, (cgip, fgip) in VARIANTS.items():
                variant_config = seed_config.model_copy(update={"cgip_enabled": cgip, "fgip_enabled": fgip})
                result = train_loop(variant_config, out_dir / f"seed{seed}" / name, vocab=vocab, pools=pools)
                models[name] = result.model
            per_seed.append(evaluate_variants(models, pools.worlds, pools.unseen, vocab, seed_config))
        table = _table(pd.concat(per_seed).groupby(level=0, sort=False).mean().to_dict(orient="index"))

    table.to_csv(out_dir / "ablation.csv")
    return table
