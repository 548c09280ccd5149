"""Path-quality and joint-trajectory metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import ArmModel
from .world import clearance_many, obstacle_arrays

TURN_THRESHOLD = 1e-3  # rad


@dataclass(frozen=True)
class Penalties:
    """Values reported in place of length/turns/steps for a failed plan."""
    length: float = 999.0
    turns: int = 9999
    steps: int = 9999


@dataclass(frozen=True)
class PlannerMetrics:
    success: bool
    length: float
    turns: int
    steps: int
    min_clearance: float  # nan for failed plans


@dataclass(frozen=True)
class ExecutionMetrics:
    success: bool
    dq_95: float
    max_vel: float
    max_acc: float
    joint_margin: float
    backtracks: int
    iterations: int


def count_turns(points, threshold: float = TURN_THRESHOLD) -> int:
    """Interior vertices whose direction change exceeds ``threshold`` radians."""
    seg = np.diff(np.asarray(points, dtype=float), axis=0)
    seg = seg[np.linalg.norm(seg, axis=1) > 0]
    if len(seg) < 2:
        return 0
    a, b = seg[:-1], seg[1:]
    c = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    return int(np.count_nonzero(np.arccos(np.clip(c, -1.0, 1.0)) > threshold))


def planner_metrics(path, obstacles, penalties: Penalties = Penalties(), samples=None) -> PlannerMetrics:
    """Metrics of a planner polyline.

    ``obstacles`` is a list of :class:`Obstacle` or a ``(centers, radii)`` pair.
    Clearance is taken over ``samples`` (typically the micro points of the
    smoothed path) when given, else over the polyline vertices.
    """
    if not path.success:
        return PlannerMetrics(False, float(penalties.length), int(penalties.turns),
                              int(penalties.steps), float("nan"))
    pts = np.asarray(path.points, dtype=float)
    length = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
    if isinstance(obstacles, tuple):
        centers, radii = obstacles
    else:
        centers, radii = obstacle_arrays(obstacles)
    probe = pts if samples is None else np.asarray(samples, dtype=float)
    clear = float(clearance_many(probe, centers, radii).min())
    return PlannerMetrics(True, length, count_turns(pts), len(pts) - 1, clear)


def execution_metrics(traj, model: ArmModel, dt: float) -> ExecutionMetrics:
    Q = np.asarray(traj.configs, dtype=float)
    if len(Q) == 0:
        raise ValueError("trajectory has no configurations")
    d = np.diff(Q, axis=0)
    if len(d):
        dq_95 = float(np.percentile(np.linalg.norm(d, axis=1), 95, method="linear"))
        max_vel = float(np.abs(d).max() / dt)
    else:
        dq_95 = max_vel = 0.0
    dd = np.diff(d, axis=0)
    max_acc = float(np.abs(dd).max() / dt ** 2) if len(dd) else 0.0
    margin = float(np.min(np.minimum(Q - model.q_min, model.q_max - Q)))
    iters = np.asarray(traj.iteration_counts, dtype=int)
    backtracks = int(np.count_nonzero(iters > 1)) + int(traj.retries)
    return ExecutionMetrics(bool(traj.success), dq_95, max_vel, max_acc, margin,
                            backtracks, int(iters.sum()))
