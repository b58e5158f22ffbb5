import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.domain.entities import MetricReport, NavigationTarget, Trajectory
from src.domain.nav_metrics import METRIC_NAMES, evaluate_trajectory, summarize


@pytest.fixture
def target():
    return NavigationTarget(goal_position=(2.0, 0.0), success_radius=1.0, shortest_path_length=2.0)


def _trajectory(points, stopped=True):
    return Trajectory(nodes=list(range(len(points))), positions=points, stopped=stopped)


# --- 1. crafted trajectories ---
def test_perfect_episode(target):
    report = evaluate_trajectory(_trajectory([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]), target)
    assert report.model_dump() == {"tl": 2.0, "ne": 0.0, "sr": 1, "osr": 1, "spl": 1.0, "rgspl": 1.0}


def test_reaching_goal_without_stopping(target):
    report = evaluate_trajectory(_trajectory([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], stopped=False), target)
    assert (report.sr, report.osr, report.spl) == (0, 1, 0.0)
    assert report.rgspl == pytest.approx(1.0)


def test_detour_halves_spl(target):
    report = evaluate_trajectory(_trajectory([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (2.0, 0.0)]), target)
    assert report.tl == pytest.approx(4.0)
    assert report.spl == pytest.approx(0.5)
    assert report.rgspl == pytest.approx(0.5)


def test_success_radius_is_inclusive(target):
    report = evaluate_trajectory(_trajectory([(0.0, 0.0), (1.0, 0.0)]), target)
    assert report.ne == 1.0
    assert report.sr == 1
    assert report.spl == pytest.approx(1.0)
    assert report.rgspl == pytest.approx(0.5)


def test_far_failure(target):
    report = evaluate_trajectory(_trajectory([(0.0, 0.0), (-1.0, 0.0)]), target)
    assert (report.sr, report.osr, report.spl, report.rgspl) == (0, 0, 0.0, 0.0)
    assert report.ne == pytest.approx(3.0)


def test_start_at_goal():
    target = NavigationTarget(goal_position=(2.0, 0.0), shortest_path_length=0.0)
    stopped = evaluate_trajectory(_trajectory([(2.0, 0.0)]), target)
    assert (stopped.tl, stopped.sr, stopped.spl, stopped.rgspl) == (0.0, 1, 1.0, 1.0)
    wandered = evaluate_trajectory(_trajectory([(2.0, 0.0), (5.0, 0.0)], stopped=False), target)
    assert (wandered.sr, wandered.osr, wandered.spl, wandered.rgspl) == (0, 1, 0.0, 0.0)


def test_inconsistent_report_is_rejected():
    with pytest.raises(ValueError):
        MetricReport(tl=1.0, ne=0.0, sr=0, osr=1, spl=0.5, rgspl=0.5)


# --- 2. invariants ---
points = st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=8)


@given(points, st.booleans(), st.floats(0.0, 10.0))
def test_metric_invariants(path, stopped, shortest):
    target = NavigationTarget(goal_position=(1.0, 1.0), shortest_path_length=shortest)
    report = evaluate_trajectory(_trajectory(path, stopped), target)
    assert 0.0 <= report.spl <= report.sr <= report.osr
    assert 0.0 <= report.rgspl <= 1.0
    assert report.tl >= 0.0


def test_summarize_means_and_empty():
    reports = [
        MetricReport(tl=2.0, ne=0.0, sr=1, osr=1, spl=1.0, rgspl=1.0),
        MetricReport(tl=4.0, ne=2.0, sr=0, osr=0, spl=0.0, rgspl=0.0),
    ]
    summary = summarize(reports)
    assert list(summary) == list(METRIC_NAMES)
    assert summary["tl"] == 3.0
    assert summary["sr"] == 0.5
    assert summarize([]) == {name: 0.0 for name in METRIC_NAMES}


@given(points, st.booleans(), st.floats(0.0, 10.0), st.randoms(use_true_random=False))
def test_metrics_ignore_node_labels(path, stopped, shortest, random):
    target = NavigationTarget(goal_position=(1.0, 1.0), shortest_path_length=shortest)
    labels = list(range(100, 100 + len(path)))
    random.shuffle(labels)
    relabelled = Trajectory(nodes=labels, positions=path, stopped=stopped)
    assert evaluate_trajectory(relabelled, target) == evaluate_trajectory(_trajectory(path, stopped), target)
