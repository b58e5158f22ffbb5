import numpy as np
import pytest

from src.domain.entities import InstructionState, Observation, RoutingMode
from src.domain.exceptions import ContractError
from src.domain.numerics import Tensor
from src.engine.agent import NavigationModel
from src.engine.policy import PolicyHead, ValueHead
from src.processing.tokenizer import tokenize
from src.simulation.world import build_vocabulary

D = 8
TEXT = "walk to the kitchen then walk to the bedroom and stop"


@pytest.fixture(scope="module")
def vocab():
    return build_vocabulary()


@pytest.fixture
def model(vocab):
    return NavigationModel(vocab.size, d=D, heads=2, seed=5)


@pytest.fixture
def obs():
    return Observation(features=np.random.default_rng(31).normal(size=(4, D)))


# --- 1. policy head ---
@pytest.fixture
def head():
    return PolicyHead(D, np.random.default_rng(32))


def test_policy_logits_are_bilinear(head):
    rng = np.random.default_rng(33)
    pooled, candidates = rng.normal(size=D), rng.normal(size=(3, D))
    scores = head.score(Tensor(pooled), candidates)
    projected = pooled @ head.bilinear.data
    expected = np.append(candidates @ projected, projected @ head.stop_feature.data)
    assert np.allclose(scores.logits.data, expected, atol=1e-12)
    assert scores.stop_index == 3
    assert scores.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


def test_masked_actions_get_zero_probability(head):
    scores = head.score(Tensor(np.ones(D)), np.eye(3, D), mask=np.array([1, 0, 1, 1]))
    assert scores.probabilities[1] == 0.0
    assert scores.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ContractError):
        scores.log_prob(1)


@pytest.mark.parametrize("mask", [np.zeros(4), np.ones(3)])
def test_bad_masks_are_contract_errors(head, mask):
    with pytest.raises(ContractError):
        head.score(Tensor(np.ones(D)), np.eye(3, D), mask=mask)


def test_greedy_breaks_ties_by_lowest_index(head):
    head.bilinear.data[...] = 0.0
    scores = head.score(Tensor(np.ones(D)), np.eye(2, D))
    assert scores.greedy() == 0
    assert scores.entropy().item() == pytest.approx(np.log(3.0))


def test_without_candidates_only_stop_remains(head):
    scores = head.score(Tensor(np.ones(D)), np.zeros((0, D)))
    assert scores.probabilities.tolist() == [1.0]
    assert scores.greedy() == scores.stop_index == 0


def test_sampling_is_reproducible(head):
    scores = head.score(Tensor(np.ones(D)), np.eye(4, D))
    first = [scores.sample(np.random.default_rng(9)) for _ in range(5)]
    second = [scores.sample(np.random.default_rng(9)) for _ in range(5)]
    assert first == second


def test_equal_candidates_share_probability(model):
    state = InstructionState(values=Tensor(np.random.default_rng(35).normal(size=(5, D))))
    feature = np.random.default_rng(36).normal(size=D)
    candidates = np.tile(feature, (4, 1))
    scores = model.act(state, candidates, mask=np.array([1, 1, 1, 1, 0]))
    assert np.allclose(scores.probabilities[:4], 0.25, atol=1e-12)
    with_stop = model.act(state, candidates).probabilities
    assert np.allclose(with_stop[:4], with_stop[0], atol=1e-15)


def test_aligned_candidate_gets_highest_probability(model):
    rng = np.random.default_rng(37)
    state = InstructionState(values=Tensor(rng.normal(size=(5, D))))
    direction = model.policy.pool(state.values).data @ model.policy.bilinear.data
    direction = direction / np.linalg.norm(direction)
    others = rng.normal(size=(3, D))
    others -= np.outer(others @ direction, direction)
    others /= np.linalg.norm(others, axis=1, keepdims=True)
    candidates = np.vstack([others[:1], direction, others[1:]])
    scores = model.act(state, candidates)
    assert int(np.argmax(scores.probabilities[:4])) == 1
    assert model.act(state, candidates, mask=np.array([1, 1, 1, 1, 0])).greedy() == 1


def test_pool_over_focus_rows():
    state = Tensor(np.arange(12.0).reshape(4, 3))
    assert PolicyHead.pool(state).data.tolist() == [4.5, 5.5, 6.5]
    assert PolicyHead.pool(state, [2, 3]).data.tolist() == [7.5, 8.5, 9.5]


def test_value_head_is_scalar():
    value = ValueHead(D, np.random.default_rng(34))(Tensor(np.ones(D)), np.ones((3, D)))
    assert value.shape == ()


# --- 2. agent ---
def test_begin_segments_once(model, vocab):
    agent = model.begin(tokenize(TEXT, vocab))
    assert agent.t == 0
    assert agent.S_prev is agent.S0
    covered = [i for k in range(agent.segs.count) for i in agent.segs.token_indices(k)]
    assert covered == list(range(11))


def test_coarse_segmentation_without_refinement(model, vocab):
    agent = model.begin(tokenize(TEXT, vocab), refine_boundaries=False)
    assert agent.segs.clauses == [(0, 4), (4, 9), (9, 11)]
    assert agent.boundary_scores is None


def test_step_updates_only_routed_clause(model, vocab, obs):
    agent = model.begin(tokenize(TEXT, vocab), refine_boundaries=False)
    result = model.step(agent, obs)
    tokens = agent.segs.token_indices(result.relevance.k_star)
    others = [i for i in range(11) if i not in tokens]
    assert result.agent.t == 1
    assert result.state.step == 1
    assert result.agent.focus == tokens
    assert np.array_equal(result.state.values.data[others], agent.S0.values.data[others])
    assert 0.0 < result.gate_mean < 1.0


def test_initial_state_survives_many_steps(model, vocab, obs):
    agent = model.begin(tokenize(TEXT, vocab))
    snapshot = agent.S0.values.data.copy()
    for _ in range(4):
        agent = model.step(agent, obs).agent
    assert np.array_equal(agent.S0.values.data, snapshot)
    assert agent.S_prev.step == 4


def test_disabled_picker_refines_every_token(model, vocab, obs):
    agent = model.begin(tokenize(TEXT, vocab), cgip_enabled=False)
    result = model.step(agent, obs)
    assert result.agent.focus is None
    assert result.refined is not None
    assert result.refined.R_hat.shape == (11, D)
    assert not result.relevance.alpha.requires_grad


def test_disabled_refiner_keeps_state(model, vocab, obs):
    agent = model.begin(tokenize(TEXT, vocab), fgip_enabled=False)
    result = model.step(agent, obs)
    assert result.refined is None
    assert result.gate_mean is None
    assert np.array_equal(result.state.values.data, agent.S0.values.data)


def test_act_from_scores_candidates_and_stop(model, vocab, obs):
    result = model.step(model.begin(tokenize(TEXT, vocab)), obs, RoutingMode.TRAIN)
    scores = model.act_from(result.agent, obs.features[:3])
    assert len(scores.probabilities) == 4
    assert scores.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    assert model.value_estimate(result.agent, obs).shape == ()


def test_same_seed_same_parameters(vocab):
    first = NavigationModel(vocab.size, d=D, heads=2, seed=3).state_dict()
    second = NavigationModel(vocab.size, d=D, heads=2, seed=3).state_dict()
    assert first.keys() == second.keys()
    assert all(np.array_equal(first[name], second[name]) for name in first)
