"""Tabular Q-learning on the voxel lattice and greedy rollout with geometric tie-breaking.

Three action geometries share one learner:

``original``  6 axis moves of one voxel.
``nonorm``    26 lattice moves used directly as physical steps.
``improved``  26 lattice moves whose physical displacement is rescaled to a
              common length ``delta``; the learner still steps voxel to voxel.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from numba import njit

from .kinematics import ArmModel, forward_position
from .world import Scenario, VoxelGrid, GridSpec, clearance_many, mask_unreachable, voxelize


class Variant(str, Enum):
    ORIGINAL = "original"
    NONORM = "nonorm"
    IMPROVED = "improved"


@dataclass(frozen=True, eq=False)
class ActionSet:
    variant: Variant
    offsets: np.ndarray  # (A, 3) int lattice steps, lexicographic
    displacements: np.ndarray  # (A, 3) physical displacement in meters
    delta: float

    def __len__(self):
        return len(self.offsets)


def build_action_set(variant, resolution: float, delta: float | None = None) -> ActionSet:
    variant = Variant(variant)
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    delta = resolution if delta is None else delta
    if not delta > 0:
        raise ValueError("delta must be positive")
    lattice = [v for v in itertools.product((-1, 0, 1), repeat=3) if any(v)]
    if variant is Variant.ORIGINAL:
        lattice = [v for v in lattice if sum(map(abs, v)) == 1]
    v = np.array(lattice, dtype=np.int64)
    if variant is Variant.IMPROVED:
        disp = delta * v / np.linalg.norm(v, axis=1, keepdims=True)
    else:
        disp = resolution * v.astype(float)
    v.setflags(write=False)
    disp.setflags(write=False)
    return ActionSet(variant=variant, offsets=v, displacements=disp, delta=delta)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    gamma: float = 0.95
    epsilon_start: float = 0.9
    epsilon_end: float = 0.05
    episodes: int = 200000
    max_steps: int = 400
    reward_goal: float = 100.0
    reward_collision: float = -100.0
    reward_step: float = -1.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.episodes < 1 or self.max_steps < 1:
            raise ValueError("episodes and max_steps must be positive")
        if not (self.reward_goal > 0 and self.reward_collision < 0 and self.reward_step < 0):
            raise ValueError("rewards must be goal > 0, collision < 0, step < 0")

    def epsilon(self, episode: int) -> float:
        if self.episodes == 1:
            return self.epsilon_start
        f = episode / (self.episodes - 1)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f


@dataclass(frozen=True)
class TieBreakConfig:
    epsilon_q: float = 1e-9  # absolute floor
    epsilon_q_rel: float = 1e-6  # fraction of |Q_max|
    w_theta: float = 1.0
    w_d: float = 5.0
    lookahead_steps: int = 2
    clearance_cap: float = 1.0

    def threshold(self, q_max: float) -> float:
        return self.epsilon_q_rel * abs(q_max) + self.epsilon_q


@dataclass(eq=False)
class QTable:
    values: np.ndarray  # (n_voxels, n_actions)
    goal_hits: int = 0  # training episodes that ended at the goal

    def save(self, path: str | Path) -> None:
        np.save(Path(path), self.values, allow_pickle=False)

    @classmethod
    def load(cls, path: str | Path) -> "QTable":
        return cls(np.load(Path(path), allow_pickle=False))


@dataclass(eq=False)
class PlanningTask:
    """A single start/goal query on a voxelized scene."""
    grid: VoxelGrid
    start: tuple[int, int, int]
    goal: tuple[int, int, int]
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))


def make_task(scenario: Scenario, model: ArmModel, spec: GridSpec = GridSpec(),
              shoulder=None) -> PlanningTask:
    """Planning query for a scenario.

    With ``shoulder`` given, only the reachable workspace is planned in: voxels
    farther from the shoulder than the arm length minus half a voxel diagonal
    are blocked, so any point inside a free voxel stays within reach.
    """
    grid = voxelize(scenario.obstacles, spec)
    s = grid.index_of(forward_position(model, scenario.q_start))
    g = grid.index_of(scenario.x_goal)
    if s is None or g is None:
        raise ValueError("start or goal lies outside the grid")
    if shoulder is not None:
        arm = model.reach - float(np.linalg.norm(shoulder))
        mask_unreachable(grid, shoulder, arm - 0.5 * math.sqrt(3.0) * spec.resolution, keep=(s, g))
    centers, radii = scenario.arrays
    return PlanningTask(grid=grid, start=s, goal=g, centers=centers, radii=radii)


@dataclass
class PathPolyline:
    points: np.ndarray  # (N+1, 3)
    success: bool
    voxels: list[tuple[int, int, int]] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)


@njit(cache=True)
def q_update(q_sa, r, max_next, alpha, gamma):
    """One tabular Q-learning backup."""
    return (1.0 - alpha) * q_sa + alpha * (r + gamma * max_next)


@njit(cache=True)
def _train_chunk(Q, free, offsets, start, goal, ep0, n_episodes, episodes_total,
                 eps_start, eps_end, alpha, gamma, r_goal, r_coll, r_step, u, ra):
    nx, ny, nz = free.shape
    n_actions = offsets.shape[0]
    sx, sy = ny * nz, nz
    goal_lin = goal[0] * sx + goal[1] * sy + goal[2]
    hits = 0
    for e in range(n_episodes):
        ep = ep0 + e
        if episodes_total > 1:
            eps = eps_start + (eps_end - eps_start) * ep / (episodes_total - 1)
        else:
            eps = eps_start
        i, j, k = start[0], start[1], start[2]
        for t in range(u.shape[1]):
            s = i * sx + j * sy + k
            if u[e, t] < eps:
                a = ra[e, t]
            else:
                a = 0
                best = Q[s, 0]
                for b in range(1, n_actions):
                    if Q[s, b] > best:
                        best = Q[s, b]
                        a = b
            ni = i + offsets[a, 0]
            nj = j + offsets[a, 1]
            nk = k + offsets[a, 2]
            if ni < 0 or nj < 0 or nk < 0 or ni >= nx or nj >= ny or nk >= nz or not free[ni, nj, nk]:
                Q[s, a] = (1.0 - alpha) * Q[s, a] + alpha * r_coll
                break
            ns = ni * sx + nj * sy + nk
            if ns == goal_lin:
                Q[s, a] = (1.0 - alpha) * Q[s, a] + alpha * r_goal
                hits += 1
                break
            m = Q[ns, 0]
            for b in range(1, n_actions):
                if Q[ns, b] > m:
                    m = Q[ns, b]
            Q[s, a] = q_update(Q[s, a], r_step, m, alpha, gamma)
            i, j, k = ni, nj, nk
    return hits


def train(task: PlanningTask, action_set: ActionSet, config: TrainConfig = TrainConfig(),
          seed: int = 0, chunk: int = 500) -> QTable:
    """Epsilon-greedy Q-learning from the start voxel; deterministic per seed."""
    grid = task.grid
    if not (grid.is_free(task.start) and grid.is_free(task.goal)):
        raise ValueError("start and goal voxels must be free")
    Q = np.zeros((grid.n_voxels, len(action_set)))
    rng = np.random.default_rng(seed)
    start = np.array(task.start, dtype=np.int64)
    goal = np.array(task.goal, dtype=np.int64)
    offsets = np.ascontiguousarray(action_set.offsets, dtype=np.int64)
    hits = 0
    for ep0 in range(0, config.episodes, chunk):
        n = min(chunk, config.episodes - ep0)
        u = rng.random((n, config.max_steps))
        ra = rng.integers(0, len(action_set), size=(n, config.max_steps), dtype=np.int64)
        hits += _train_chunk(Q, grid.free, offsets, start, goal, ep0, n, config.episodes,
                     config.epsilon_start, config.epsilon_end, config.alpha, config.gamma,
                     config.reward_goal, config.reward_collision, config.reward_step, u, ra)
    return QTable(Q, goal_hits=hits)


def turning_angle(a, b) -> float:
    c = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return math.acos(min(1.0, max(-1.0, c)))


def lookahead_clearance(position, displacement, centers, radii, cfg: TieBreakConfig) -> float:
    steps = np.arange(1, cfg.lookahead_steps + 1)[:, None]
    pts = np.asarray(position) + steps * np.asarray(displacement)
    return float(min(clearance_many(pts, centers, radii).min(), cfg.clearance_cap))


def tie_break_select(q_row, prev_action, position, obstacles, action_set: ActionSet,
                     cfg: TieBreakConfig = TieBreakConfig()) -> int:
    """Greedy action, with near-ties resolved by turning angle and look-ahead clearance.

    ``obstacles`` is a ``(centers, radii)`` pair; ``prev_action`` an index or None.
    """
    q_row = np.asarray(q_row, dtype=float)
    q_max = float(q_row.max())
    tie = np.flatnonzero(np.abs(q_row - q_max) < cfg.threshold(q_max))
    if len(tie) <= 1:
        return int(np.argmax(q_row))
    centers, radii = obstacles
    disp = action_set.displacements
    best, best_score = -1, -np.inf
    for a in tie:
        theta = 0.0 if prev_action is None else turning_angle(disp[a], disp[prev_action])
        score = -cfg.w_theta * theta + cfg.w_d * lookahead_clearance(position, disp[a], centers, radii, cfg)
        if score > best_score:
            best, best_score = int(a), score
    return best


def default_k_max(grid: VoxelGrid) -> int:
    return 4 * int(math.ceil(math.sqrt(sum(n * n for n in grid.dims))))


def rollout(qtable: QTable, task: PlanningTask, action_set: ActionSet,
            cfg: TieBreakConfig = TieBreakConfig(), k_max: int | None = None) -> PathPolyline:
    """Greedy walk from the start voxel center.

    The Cartesian point advances by the action displacement and the state is
    the voxel containing it.  For the lattice-step variants this is exactly
    ``s + v``; for ``improved`` the point moves ``delta`` per step and the
    table is read at whichever voxel it lands in.
    """
    grid = task.grid
    k_max = default_k_max(grid) if k_max is None else k_max
    improved = action_set.variant is Variant.IMPROVED
    goal = tuple(task.goal)
    s = tuple(task.start)
    x = grid.center(s)
    points = [x]
    voxels = [s]
    actions: list[int] = []
    prev = None
    hit = False
    k = 0
    while s != goal and k < k_max:
        row = qtable.values[grid.linear(s)]
        if improved:
            a = tie_break_select(row, prev, x, (task.centers, task.radii), action_set, cfg)
        else:
            a = int(np.argmax(row))
        if improved:
            x = x + action_set.displacements[a]
        else:
            # lattice variants stay exactly on voxel centers
            x = grid.center(np.add(s, action_set.offsets[a]))
        nxt = grid.index_of(x)
        points.append(x)
        actions.append(a)
        prev = a
        if nxt is None or not grid.free[nxt]:
            hit = True
            voxels.append(nxt)
            break
        s = nxt
        voxels.append(s)
        k += 1
    success = (not hit) and s == goal
    return PathPolyline(points=np.array(points), success=success, voxels=voxels, actions=actions)


def plan(scenario: Scenario, model: ArmModel, variant, spec: GridSpec = GridSpec(),
         train_cfg: TrainConfig = TrainConfig(), tie_cfg: TieBreakConfig = TieBreakConfig(),
         seed: int = 0, delta: float | None = None, shoulder=None) -> PathPolyline:
    """Train a fresh table for one scenario and roll it out."""
    task = make_task(scenario, model, spec, shoulder)
    actions = build_action_set(variant, spec.resolution, delta)
    q = train(task, actions, train_cfg, seed)
    return rollout(q, task, actions, tie_cfg)
