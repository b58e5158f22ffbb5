"""
Command-line entry points.

    python -m src.scripts.cli segment < instructions.txt
    python -m src.scripts.cli gen-world --seed 3 --episodes 5
    python -m src.scripts.cli rollout --checkpoint runs/default/best.ckpt --log trajectory.jsonl
    python -m src.scripts.cli train --config config/navigation.yaml --out-dir runs/default
    python -m src.scripts.cli eval --checkpoint runs/default/best.ckpt --plot-data plot.csv
    python -m src.scripts.cli ablate --checkpoint runs/default/best.ckpt --out-dir runs/ablation
    python -m src.scripts.cli gradcheck --fixtures 20
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

from src.domain.numerics import no_grad
from src.engine.ablation import run_ablation
from src.engine.agent import NavigationModel
from src.engine.config import DEFAULT_CONFIG_PATH, NavigationConfig, load_config
from src.engine.evaluation import build_model, evaluate, load_model, plot_data_frame, segment_record
from src.engine.rollout import PolicyMode, run_episode, write_trajectory_log
from src.engine.trainer import build_pools, train_loop
from src.engine.verification import run_gradcheck
from src.processing.tokenizer import Vocabulary
from src.simulation.episodes import make_episodes
from src.simulation.world import build_vocabulary, generate_world

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-4
DEFAULT_TRAJECTORY_LOG = "trajectory.jsonl"


def _vocab_for(checkpoint: Optional[str]) -> Vocabulary:
    if checkpoint:
        vocab_file = Path(checkpoint).parent / "vocab.txt"
        if vocab_file.exists():
            return Vocabulary.load(vocab_file)
    return build_vocabulary()


def _model_for(checkpoint: Optional[str], vocab: Vocabulary, config: NavigationConfig) -> NavigationModel:
    if checkpoint:
        return load_model(checkpoint, vocab, config)
    logger.warning("No checkpoint given; using a freshly initialised model")
    return build_model(vocab, config)


def cmd_segment(args: argparse.Namespace, config: NavigationConfig) -> int:
    vocab = _vocab_for(args.checkpoint)
    model = _model_for(args.checkpoint, vocab, config)
    source = open(args.input, encoding="utf-8") if args.input else sys.stdin
    with source:
        for line in source:
            if line.strip():
                print(segment_record(model, vocab, line.strip()).model_dump_json())
    return 0


def cmd_gen_world(args: argparse.Namespace, config: NavigationConfig) -> int:
    vocab = build_vocabulary()
    world = generate_world(args.seed, args.n_nodes or config.n_nodes, vocab)
    episodes = make_episodes([world], range(args.episodes), config.max_legs, config.success_radius)
    payload = {"world": world.model_dump(), "episodes": [e.model_dump() for e in episodes]}
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        logger.info("World %d written to %s", args.seed, args.out)
    else:
        print(text)
    return 0


def cmd_rollout(args: argparse.Namespace, config: NavigationConfig) -> int:
    vocab = _vocab_for(args.checkpoint)
    model = _model_for(args.checkpoint, vocab, config)
    world = generate_world(args.world_seed, args.n_nodes or config.n_nodes, vocab)
    spec = make_episodes([world], [args.episode_seed], config.max_legs, config.success_radius)[0]
    with no_grad():
        rollout = run_episode(
            model,
            world,
            spec,
            vocab,
            policy=PolicyMode(args.policy),
            seed=config.seed,
            max_steps=config.max_steps,
            noise_sigma=config.noise_sigma,
            cgip_enabled=config.cgip_enabled,
            fgip_enabled=config.fgip_enabled,
        )
    path = write_trajectory_log(args.log, [rollout])
    logger.info("Trajectory log written to %s", path)
    print(rollout.metrics.model_dump_json())
    return 0


def cmd_train(args: argparse.Namespace, config: NavigationConfig) -> int:
    start = time.perf_counter()
    result = train_loop(config, args.out_dir)
    logger.info("Training finished in %.1fs; best validation SPL %.3f", time.perf_counter() - start, result.best_val_spl)
    print(result.history.dropna().to_string(index=False))
    return 0


def cmd_eval(args: argparse.Namespace, config: NavigationConfig) -> int:
    vocab = _vocab_for(args.checkpoint)
    model = _model_for(args.checkpoint, vocab, config)
    pools = build_pools(config, vocab)
    episodes = pools.val if args.split == "val" else pools.unseen
    result = evaluate(model, pools.worlds, episodes, vocab, config)
    if args.log:
        write_trajectory_log(args.log, result.rollouts)
    if args.plot_data:
        plot_data_frame(result.rollouts).to_csv(args.plot_data, index=False)
        logger.info("Plot data written to %s", args.plot_data)
    print(json.dumps(result.summary, indent=2))
    return 0


def cmd_ablate(args: argparse.Namespace, config: NavigationConfig) -> int:
    vocab = _vocab_for(args.checkpoint)
    table = run_ablation(
        config,
        args.out_dir,
        checkpoint=args.checkpoint,
        training_seeds=args.train_seeds,
        vocab=vocab,
    )
    print(table.to_string(float_format=lambda v: f"{v:.3f}"))
    return 0


def cmd_gradcheck(args: argparse.Namespace, config: NavigationConfig) -> int:
    start = time.perf_counter()
    errors = run_gradcheck(args.fixtures, eps=args.eps, max_entries=args.max_entries)
    worst = max(errors, default=0.0)
    print(json.dumps({"fixtures": len(errors), "max_relative_error": worst, "seconds": time.perf_counter() - start}))
    return 0 if worst < GRADCHECK_TOLERANCE else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="instruction-nav", description="Instruction-state navigation tools")
    parser.add_argument("--config", default=DEFAULT_CONFIG_PATH, help="flat YAML config (default: %(default)s)")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment instructions, one per line")
    p.add_argument("--input", help="instruction file (default: stdin)")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("gen-world", help="generate a world and its episodes as JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-nodes", type=int)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("rollout", help="replay one episode and emit its trajectory log")
    p.add_argument("--world-seed", type=int, default=0)
    p.add_argument("--episode-seed", type=int, default=0)
    p.add_argument("--n-nodes", type=int)
    p.add_argument("--policy", choices=[m.value for m in PolicyMode], default=PolicyMode.GREEDY.value)
    p.add_argument("--checkpoint")
    p.add_argument(
        "--log", default=DEFAULT_TRAJECTORY_LOG, help="trajectory log path (JSON lines; default: %(default)s)"
    )
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("train", help="train with imitation + actor-critic")
    p.add_argument("--out-dir", default="runs/default")
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rl-weight", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on held-out episodes")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=["val", "unseen"], default="unseen")
    p.add_argument("--log", help="trajectory log path (JSON lines)")
    p.add_argument("--plot-data", help="CSV of per-step alpha and coordinates")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="full / cgip-only / fgip-only / neither comparison")
    p.add_argument("--checkpoint", help="shared checkpoint; trains every variant when omitted")
    p.add_argument("--train-seeds", type=int, nargs="+")
    p.add_argument("--out-dir", default="runs/ablation")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the composed step")
    p.add_argument("--fixtures", type=int, default=20)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--max-entries", type=int, default=6)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    overrides = {key: getattr(args, key, None) for key in ("iters", "seed", "rl_weight")}
    try:
        config = load_config(args.config, **overrides)
        return args.func(args, config)
    except ValueError as e:
        logger.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
