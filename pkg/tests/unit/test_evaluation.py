import numpy as np
import pandas as pd
import pytest

from src.domain.checkpoint import save_checkpoint
from src.domain.nav_metrics import METRIC_NAMES
from src.engine.ablation import VARIANTS, evaluate_variants, run_ablation
from src.engine.config import NavigationConfig
from src.engine.evaluation import build_model, evaluate, load_model, plot_data_frame, segment_record
from src.engine.trainer import build_pools
from src.simulation.world import build_vocabulary


@pytest.fixture(scope="module")
def vocab():
    return build_vocabulary()


@pytest.fixture(scope="module")
def config():
    return NavigationConfig(
        d=8,
        heads=2,
        n_nodes=6,
        n_train_worlds=1,
        episodes_per_world=2,
        val_episodes_per_world=3,
        n_unseen_worlds=1,
        max_steps=4,
        max_legs=2,
        progress=False,
    )


@pytest.fixture(scope="module")
def pools(config, vocab):
    return build_pools(config, vocab)


@pytest.fixture(scope="module")
def model(config, vocab):
    return build_model(vocab, config)


# --- 1. evaluation ---
def test_evaluate_summarises_every_episode(model, pools, vocab, config):
    result = evaluate(model, pools.worlds, pools.val, vocab, config)
    assert len(result.reports) == len(result.rollouts) == 3
    assert list(result.summary) == list(METRIC_NAMES)
    assert all(len(r.steps) <= config.max_steps for r in result.rollouts)
    assert all(r.trajectory.stopped for r in result.rollouts)


def test_evaluation_does_not_record_a_graph(model, pools, vocab, config):
    result = evaluate(model, pools.worlds, pools.val[:1], vocab, config)
    assert all(step.log_prob is not None and not step.log_prob.requires_grad for step in result.rollouts[0].steps)


def test_evaluation_is_repeatable(model, pools, vocab, config):
    first = evaluate(model, pools.worlds, pools.unseen, vocab, config)
    second = evaluate(model, pools.worlds, pools.unseen, vocab, config)
    assert first.summary == second.summary
    assert [r.trajectory.nodes for r in first.rollouts] == [r.trajectory.nodes for r in second.rollouts]


def test_load_model_restores_weights(tmp_path, model, vocab, config):
    path = save_checkpoint(tmp_path / "m.ckpt", model.state_dict())
    restored = load_model(path, vocab, config.model_copy(update={"seed": 7}))
    assert all(np.array_equal(v, restored.state_dict()[k]) for k, v in model.state_dict().items())


# --- 2. diagnostics ---
def test_plot_data_has_one_row_per_clause_and_step(model, pools, vocab, config):
    rollouts = evaluate(model, pools.worlds, pools.val, vocab, config).rollouts
    frame = plot_data_frame(rollouts)
    expected = sum(len(s.diagnostics.alpha) for r in rollouts for s in r.steps)
    assert len(frame) == expected
    assert list(frame.columns[:3]) == ["episode", "world_seed", "episode_seed"]
    sums = frame.groupby(["episode", "t"])["alpha"].sum()
    assert np.allclose(sums.to_numpy(), 1.0)
    routed = frame[frame["clause"] == frame["k_star"]]
    assert len(routed) == frame.groupby(["episode", "t"]).ngroups


def test_plot_data_of_nothing_is_empty():
    assert plot_data_frame([]).empty


def test_segment_record(model, vocab):
    record = segment_record(model, vocab, "walk to the sofa then walk to the lamp and stop")
    assert record.tokens[:4] == ["walk", "to", "the", "sofa"]
    assert record.coarse == [4, 9]
    assert len(record.b_hat) == len(record.tokens) - 1
    assert record.refined == [i + 1 for i, b in enumerate(record.b_hat) if b > 0.5]
    assert record.clauses[0][0] == 0 and record.clauses[-1][1] == len(record.tokens)


# --- 3. ablation ---
def test_evaluate_variants_table(model, pools, vocab, config):
    table = evaluate_variants({name: model for name in VARIANTS}, pools.worlds, pools.unseen, vocab, config)
    assert list(table.index) == ["full", "cgip_only", "fgip_only", "neither"]
    assert list(table.columns) == list(METRIC_NAMES)
    assert table.index.name == "variant"


def test_ablation_from_checkpoint_is_repeatable(tmp_path, model, vocab, config):
    checkpoint = save_checkpoint(tmp_path / "shared.ckpt", model.state_dict())
    first = run_ablation(config, tmp_path / "a", checkpoint=checkpoint, vocab=vocab)
    second = run_ablation(config, tmp_path / "b", checkpoint=checkpoint, vocab=vocab)
    pd.testing.assert_frame_equal(first, second)
    saved = pd.read_csv(tmp_path / "a" / "ablation.csv", index_col="variant")
    assert list(saved.index) == list(VARIANTS)


def test_ablation_trains_every_variant(tmp_path, vocab, config):
    quick = config.model_copy(update={"iters": 1, "batch": 1, "eval_every": 1})
    table = run_ablation(quick, tmp_path, training_seeds=[0, 1], vocab=vocab)
    assert list(table.index) == list(VARIANTS)
    assert (tmp_path / "seed1" / "neither" / "final.ckpt").exists()


@pytest.mark.slow
def test_full_model_is_not_worse_than_single_modules(tmp_path):
    table = run_ablation(NavigationConfig(progress=False), tmp_path, training_seeds=[0, 1, 2, 3, 4])
    assert table.loc["full", "sr"] >= table.loc["cgip_only", "sr"]
    assert table.loc["full", "sr"] >= table.loc["fgip_only", "sr"]
    assert table.loc["full", "spl"] >= table.loc["neither", "spl"]
