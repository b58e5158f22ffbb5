import numpy as np
import pandas as pd

from src.domain.entities import MetricReport, NavigationTarget, Trajectory

# Metric column order used in reports and tables
METRIC_NAMES = ("tl", "ne", "sr", "osr", "spl", "rgspl")


def _goal_distance(position: tuple[float, float], target: NavigationTarget) -> float:
    return float(np.hypot(position[0] - target.goal_position[0], position[1] - target.goal_position[1]))


def tl(traj: Trajectory) -> float:
    """Trajectory Length: cumulative Euclidean length of the executed path."""
    return traj.length


def ne(traj: Trajectory, target: NavigationTarget) -> float:
    """Navigation Error: distance from the final position to the goal."""
    return _goal_distance(traj.positions[-1], target)


def sr(traj: Trajectory, target: NavigationTarget) -> int:
    """
    Success: the agent stopped within the success radius (boundary inclusive).
    """
    return int(traj.stopped and ne(traj, target) <= target.success_radius)


def osr(traj: Trajectory, target: NavigationTarget) -> int:
    """Oracle Success: any visited position, the start included, was within the radius."""
    return int(any(_goal_distance(p, target) <= target.success_radius for p in traj.positions))


def spl(traj: Trajectory, target: NavigationTarget) -> float:
    """
    Success weighted by Path Length.
    SPL = SR * l* / max(l*, TL); equals SR when the shortest path is empty.
    """
    success = sr(traj, target)
    shortest = target.shortest_path_length
    if shortest == 0:
        return float(success)
    return success * shortest / max(shortest, tl(traj))


def rgspl(traj: Trajectory, target: NavigationTarget) -> float:
    """
    Relative-goal SPL: goal progress max(0, 1 - NE/l*) times the path
    efficiency l* / max(l*, TL). Equals SR when the shortest path is empty.
    """
    shortest = target.shortest_path_length
    if shortest == 0:
        return float(sr(traj, target))
    progress = max(0.0, 1.0 - ne(traj, target) / shortest)
    return progress * shortest / max(shortest, tl(traj))


def evaluate_trajectory(traj: Trajectory, target: NavigationTarget) -> MetricReport:
    return MetricReport(
        tl=tl(traj),
        ne=ne(traj, target),
        sr=sr(traj, target),
        osr=osr(traj, target),
        spl=spl(traj, target),
        rgspl=rgspl(traj, target),
    )


def summarize(reports: list[MetricReport]) -> dict[str, float]:
    """Mean of every metric over episodes (all zeros for an empty list)."""
    if not reports:
        return {name: 0.0 for name in METRIC_NAMES}
    frame = pd.DataFrame([r.model_dump() for r in reports], columns=list(METRIC_NAMES))
    return {name: float(value) for name, value in frame.mean().items()}
