import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.domain.entities import BoundarySet, Instruction
from src.domain.gradcheck import finite_difference_check
from src.domain.numerics import Tensor, sigmoid
from src.processing.segmenter import (
    BoundaryScore,
    BoundaryScorer,
    SegmentationRules,
    boundary_log_confidence,
    coherence_cues,
    prior_indicator,
    refine,
    segment_rules,
    split,
    straight_through_unit,
)
from src.processing.tokenizer import split_words
from tests.unit import oracles


def _instruction(text: str) -> Instruction:
    words = split_words(text)
    return Instruction(raw=text, tokens=list(range(len(words))), token_texts=words)


def _scores(logits) -> BoundaryScore:
    z = Tensor(np.asarray(logits, dtype=np.float64))
    gaps = len(z.data)
    return BoundaryScore(logits=z, b_hat=sigmoid(z), prior=np.zeros(gaps), coherence=np.zeros(gaps))


# --- 1. rule-based coarse boundaries ---
@pytest.mark.parametrize(
    "text,positions",
    [
        ("walk to the kitchen then walk to the bedroom and stop", [4, 9]),
        ("go left. turn right", [3]),
        ("go left.", []),
        ("and then stop", [1]),
        ("walk , and stop", [2]),
        ("stop", []),
        ("walk until the door; wait", [1, 5]),
    ],
)
def test_segment_rules_examples(text, positions):
    boundaries = segment_rules(_instruction(text))
    assert boundaries.positions == positions
    assert boundaries.source == "coarse"


def test_segment_rules_with_custom_lists():
    rules = SegmentationRules(split_after=["left"], split_before=[])
    assert segment_rules(_instruction("turn left and stop"), rules).positions == [2]


def test_split_partitions_tokens():
    segs = split(11, [4, 9])
    assert segs.clauses == [(0, 4), (4, 9), (9, 11)]
    assert segs.token_indices(1) == [4, 5, 6, 7, 8]
    assert segs.membership().sum(axis=0).tolist() == [1.0] * 11


def test_prior_indicator_marks_coarse_gaps():
    assert prior_indicator(BoundarySet(positions=[1, 3], length=5)).tolist() == [1.0, 0.0, 1.0, 0.0]


# --- 2. coherence ---
def test_coherence_of_orthogonal_and_identical_rows():
    assert np.allclose(coherence_cues(np.eye(4), window=1), np.zeros(3))
    assert np.allclose(coherence_cues(np.ones((4, 3))), np.ones(3))


def test_coherence_uses_window_means():
    h = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    # gap 1: mean([1,0]) vs mean([1,0],[0,1]) = [0.5, 0.5]
    assert coherence_cues(h, window=2)[0] == pytest.approx(1.0 / np.sqrt(2.0))


def test_coherence_of_zero_rows_is_zero():
    assert coherence_cues(np.zeros((3, 2))).tolist() == [0.0, 0.0]


# --- 3. refinement ---
def test_scorer_logits_match_mlp_oracle():
    rng = np.random.default_rng(0)
    scorer = BoundaryScorer(4, rng)
    h = rng.normal(size=(5, 4))
    coarse = BoundarySet(positions=[2], length=5)
    scores = scorer.score(Tensor(h), coarse)
    features = np.hstack([h[:-1], h[1:], np.stack([prior_indicator(coarse), coherence_cues(h)], axis=1)])
    assert np.allclose(scores.logits.data, oracles.mlp(scorer.mlp, features).reshape(-1), atol=1e-12)
    assert np.allclose(scores.b_hat.data, oracles.sigmoid(scores.logits.data), atol=1e-15)


def test_refine_with_forced_logits(monkeypatch):
    scorer = BoundaryScorer(4, np.random.default_rng(0))
    monkeypatch.setattr(scorer, "logits", lambda h, prior, coherence: Tensor([2.0, -2.0, 1.0]))
    scores = scorer.score(Tensor(np.random.default_rng(1).normal(size=(4, 4))), BoundarySet(length=4))
    refined, segs = refine(scores, 0.5)
    assert refined.positions == [1, 3]
    assert refined.source == "refined"
    assert segs.clauses == [(0, 1), (1, 3), (3, 4)]


def test_confidence_equal_to_threshold_is_not_a_boundary():
    _, segs = refine(_scores([0.0, 0.0, 0.0]), 0.5)
    assert segs.clauses == [(0, 4)]


def test_high_threshold_keeps_single_clause():
    _, segs = refine(_scores([2.0, -2.0, 1.0]), 0.95)
    assert segs.count == 1


def test_large_negative_bias_gives_one_clause():
    scorer = BoundaryScorer(4, np.random.default_rng(0))
    scorer.mlp.output.bias.data[...] = -50.0
    h = Tensor(np.random.default_rng(2).normal(size=(6, 4)))
    _, segs = refine(scorer.score(h, BoundarySet(positions=[2, 4], length=6)))
    assert segs.clauses == [(0, 6)]


def test_single_token_has_no_gaps():
    scorer = BoundaryScorer(4, np.random.default_rng(0))
    scores = scorer.score(Tensor(np.ones((1, 4))), BoundarySet(length=1))
    assert scores.b_hat.shape == (0,)
    _, segs = refine(scores)
    assert segs.clauses == [(0, 1)]


@given(
    st.integers(2, 12),
    st.sampled_from([2, 4, 8, 32]),
    st.integers(0, 2**16),
    st.sets(st.integers(1, 11)),
)
def test_fresh_scorer_reproduces_the_coarse_split(length, d, seed, gaps):
    rng = np.random.default_rng(seed)
    scorer = BoundaryScorer(d, rng)
    h = Tensor(rng.normal(scale=3.0, size=(length, d)))
    coarse = BoundarySet(positions=sorted(g for g in gaps if g < length), length=length)
    refined, _ = refine(scorer.score(h, coarse), 0.5)
    assert refined.positions == coarse.positions


@given(st.lists(st.floats(min_value=-10, max_value=10), min_size=0, max_size=30), st.floats(0.05, 0.95))
def test_refined_segments_partition_the_instruction(logits, delta_b):
    scores = _scores(logits)
    refined, segs = refine(scores, delta_b)
    covered = [i for k in range(segs.count) for i in segs.token_indices(k)]
    assert covered == list(range(len(logits) + 1))
    assert segs.count == int((scores.b_hat.data > delta_b).sum()) + 1
    assert refined.positions == [start for start, _ in segs.clauses[1:]]


# --- 4. boundary confidence ---
def test_boundary_log_confidence_hand_values():
    z = np.array([2.0, -2.0, 1.0])
    log_b, log_not_b = np.log(oracles.sigmoid(z)), np.log(1.0 - oracles.sigmoid(z))
    confidence = boundary_log_confidence(_scores(z), split(4, [1, 3])).data
    expected = [log_b[0], log_b[0] + log_not_b[1] + log_b[2], log_b[2]]
    assert np.allclose(confidence, expected, atol=1e-12)


def test_boundary_log_confidence_stays_finite_when_saturated():
    confidence = boundary_log_confidence(_scores([800.0, -800.0]), split(3, [1]))
    assert np.all(np.isfinite(confidence.data))


def test_straight_through_unit_is_one_and_passes_gradient():
    scorer = BoundaryScorer(3, np.random.default_rng(4))
    h = Tensor(np.random.default_rng(5).normal(size=(5, 3)))
    coarse = BoundarySet(positions=[2], length=5)
    weights = np.array([0.3, -1.1])

    def loss() -> Tensor:
        confidence = boundary_log_confidence(scorer.score(h, coarse), split(5, [2]))
        return (confidence * Tensor(weights)).sum()

    unit = straight_through_unit(boundary_log_confidence(scorer.score(h, coarse), split(5, [2])))
    assert np.array_equal(unit.data, np.ones(2))
    assert finite_difference_check(loss, list(scorer.named_parameters())) < 1e-4
