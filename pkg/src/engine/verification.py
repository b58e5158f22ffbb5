"""
Finite-difference verification of the full composed step
(picker -> refiner -> policy -> cross-entropy) on small random fixtures.

Fixtures use infer-mode routing (a constant selection, so the loss is a
smooth function of every parameter near the fixture) and the coarse rule
segmentation, which keeps the clause count at most three.

Infer-mode routing carries no gradient to the picker or the boundary
scorer, so a second pass checks those parameters on the relaxed objective:
the selection is the soft clause distribution and refined boundary
confidences scale the clause scores.
"""

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.domain.entities import Instruction, Observation, RoutingMode
from src.domain.gradcheck import parameter_errors
from src.domain.numerics import Parameter, Tensor, no_grad
from src.engine.agent import NavigationModel
from src.processing.tokenizer import Vocabulary, tokenize
from src.simulation.world import LANDMARK_WORDS, build_vocabulary

FIXTURE_D = 8
FIXTURE_HEADS = 2
MAX_OBSERVATION_ROWS = 6
# Minimum gap between the two largest clause scores; closer fixtures are resampled
# so that finite-difference perturbations cannot flip the routed clause
TIE_MARGIN = 1e-3
RELAXED_PREFIXES = ("cgip.", "boundary_scorer.")


class StepFixture(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    seed: int
    model: NavigationModel
    instruction: Instruction
    observation: Observation
    candidates: np.ndarray
    target: int


def _step_loss(fixture: StepFixture, mode: RoutingMode) -> Tensor:
    model = fixture.model
    agent = model.begin(fixture.instruction, refine_boundaries=mode == RoutingMode.RELAXED)
    result = model.step(agent, fixture.observation, mode)
    scores = model.act_from(result.agent, fixture.candidates)
    return -scores.log_prob(fixture.target)


def composed_loss(fixture: StepFixture) -> Tensor:
    return _step_loss(fixture, RoutingMode.INFER)


def relaxed_loss(fixture: StepFixture) -> Tensor:
    """Composed step loss with soft selection and refined, confidence-weighted clauses."""
    return _step_loss(fixture, RoutingMode.RELAXED)


def _clause_margin(fixture: StepFixture, mode: RoutingMode) -> float:
    with no_grad():
        agent = fixture.model.begin(fixture.instruction, refine_boundaries=mode == RoutingMode.RELAXED)
        relevance = fixture.model.cgip.relevance(
            agent.S0, agent.segs, fixture.observation, mode, agent.boundary_scores
        )
    phi = np.sort(relevance.phi.data)[::-1]
    return float(phi[0] - phi[1]) if len(phi) > 1 else np.inf


def make_fixture(seed: int, vocab: Optional[Vocabulary] = None, d: int = FIXTURE_D) -> StepFixture:
    """
    Random instruction of one or two legs (L <= 11 tokens, at most three
    clauses), N <= 6 observation rows and a randomised relevance head so the
    active clause is well separated.
    """
    vocab = vocab or build_vocabulary()
    attempt = 0
    while True:
        rng = np.random.default_rng([seed, attempt])
        legs = int(rng.integers(1, 3))
        words = rng.choice(LANDMARK_WORDS, size=legs, replace=False)
        text = " then ".join(f"walk to the {w}" for w in words) + " and stop"
        model = NavigationModel(vocab.size, d=d, heads=FIXTURE_HEADS, seed=seed * 100 + attempt)
        model.cgip.score_head.weight.data[...] = rng.normal(0.0, 1.0, size=(d, 1))
        n_rows = int(rng.integers(1, MAX_OBSERVATION_ROWS + 1))
        n_candidates = int(rng.integers(0, n_rows + 1))
        fixture = StepFixture(
            seed=seed,
            model=model,
            instruction=tokenize(text, vocab),
            observation=Observation(features=rng.normal(0.0, 1.0, size=(n_rows, d))),
            candidates=rng.normal(0.0, 1.0, size=(n_candidates, d)),
            target=int(rng.integers(0, n_candidates + 1)),
        )
        if min(_clause_margin(fixture, mode) for mode in (RoutingMode.INFER, RoutingMode.RELAXED)) > TIE_MARGIN:
            return fixture
        attempt += 1


def check_fixture(fixture: StepFixture, eps: float = 1e-4, max_entries: Optional[int] = 6) -> dict[str, float]:
    """Relative gradient error per named parameter."""
    return parameter_errors(
        lambda: composed_loss(fixture),
        list(fixture.model.named_parameters()),
        eps=eps,
        max_entries=max_entries,
        seed=fixture.seed,
    )


def relaxed_parameters(model: NavigationModel) -> list[tuple[str, Parameter]]:
    return [(name, p) for name, p in model.named_parameters() if name.startswith(RELAXED_PREFIXES)]


def check_relaxed(fixture: StepFixture, eps: float = 1e-4, max_entries: Optional[int] = 6) -> dict[str, float]:
    """
    Relative gradient error of the picker and boundary scorer parameters on
    the relaxed objective. Encoder parameters are left out: the coherence cue
    is a fixed feature, so finite differences through it have no analytic
    counterpart.
    """
    return parameter_errors(
        lambda: relaxed_loss(fixture),
        relaxed_parameters(fixture.model),
        eps=eps,
        max_entries=max_entries,
        seed=fixture.seed,
    )


def _worst(errors: Sequence[dict[str, float]]) -> float:
    return max(max(e.values(), default=0.0) for e in errors)


def run_gradcheck(n_fixtures: int = 20, eps: float = 1e-4, max_entries: Optional[int] = 6) -> list[float]:
    """Worst relative error of every fixture over both passes."""
    vocab = build_vocabulary()
    worst = []
    for seed in range(n_fixtures):
        fixture = make_fixture(seed, vocab)
        worst.append(_worst([check_fixture(fixture, eps, max_entries), check_relaxed(fixture, eps, max_entries)]))
    return worst
