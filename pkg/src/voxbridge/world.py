"""Workspace voxelization, sphere obstacles, collision queries and scenario generation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .kinematics import ArmModel, forward_position, link_spheres


class GenerationFailed(RuntimeError):
    """Scenario sampling ran out of attempts; the scene is over-constrained."""


class Density(str, Enum):
    SPARSE = "sparse"
    MEDIUM = "medium"
    DENSE = "dense"


# inclusive obstacle-count ranges per class; Dense is open-ended, capped here
DENSITY_COUNTS = {
    Density.SPARSE: (0, 30),
    Density.MEDIUM: (31, 99),
    Density.DENSE: (100, 150),
}


def classify_count(n: int) -> Density:
    if not 0 <= n <= DENSITY_COUNTS[Density.DENSE][1]:
        raise ValueError(f"obstacle count {n} falls outside every density class")
    if n <= 30:
        return Density.SPARSE
    if n <= 99:
        return Density.MEDIUM
    return Density.DENSE


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")


def obstacle_arrays(obstacles) -> tuple[np.ndarray, np.ndarray]:
    """``(centers (n, 3), radii (n,))`` from a list of :class:`Obstacle`."""
    if len(obstacles) == 0:
        return np.zeros((0, 3)), np.zeros(0)
    centers = np.array([o.center for o in obstacles], dtype=float)
    radii = np.array([o.radius for o in obstacles], dtype=float)
    return centers, radii


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, float, float] = (-1.0, -1.0, -1.0)
    size: float = 2.0
    resolution: float = 0.1  # 20^3 cells over the default cube
    # None -> half the diagonal of one voxel
    inflation: float | None = None

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("grid resolution must be positive")

    @property
    def dims(self) -> tuple[int, int, int]:
        n = int(math.ceil(self.size / self.resolution - 1e-9))
        return (n, n, n)

    @property
    def effective_inflation(self) -> float:
        if self.inflation is None:
            return 0.5 * math.sqrt(3.0) * self.resolution
        return self.inflation


@dataclass(eq=False)
class VoxelGrid:
    origin: np.ndarray
    resolution: float
    dims: tuple[int, int, int]
    free: np.ndarray  # bool, shape dims

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))

    @property
    def strides(self) -> tuple[int, int, int]:
        _, ny, nz = self.dims
        return (ny * nz, nz, 1)

    def in_bounds(self, ijk) -> bool:
        return all(0 <= int(c) < n for c, n in zip(ijk, self.dims))

    def index_of(self, point) -> tuple[int, int, int] | None:
        """Voxel containing ``point``, or None outside the grid."""
        ijk = np.floor((np.asarray(point, dtype=float) - self.origin) / self.resolution).astype(int)
        t = tuple(int(c) for c in ijk)
        return t if self.in_bounds(t) else None

    def center(self, ijk) -> np.ndarray:
        return self.origin + (np.asarray(ijk, dtype=float) + 0.5) * self.resolution

    def linear(self, ijk) -> int:
        sx, sy, _ = self.strides
        return int(ijk[0]) * sx + int(ijk[1]) * sy + int(ijk[2])

    def unravel(self, idx: int) -> tuple[int, int, int]:
        return tuple(int(c) for c in np.unravel_index(idx, self.dims))

    def is_free(self, ijk) -> bool:
        return self.in_bounds(ijk) and bool(self.free[tuple(ijk)])

    def point_free(self, point) -> bool:
        ijk = self.index_of(point)
        return ijk is not None and bool(self.free[ijk])

    def centers(self) -> np.ndarray:
        """All voxel centers, shape ``dims + (3,)``."""
        axes = [self.origin[d] + (np.arange(n) + 0.5) * self.resolution for d, n in enumerate(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def mask_unreachable(grid: VoxelGrid, shoulder, radius: float, keep=()) -> VoxelGrid:
    """Block voxels whose center lies farther than ``radius`` from ``shoulder``.

    Voxels listed in ``keep`` are left as they were. Modifies ``grid`` in place.
    """
    d = np.linalg.norm(grid.centers() - np.asarray(shoulder, dtype=float), axis=-1)
    kept = [(ijk, bool(grid.free[ijk])) for ijk in keep]
    grid.free &= d <= radius
    for ijk, v in kept:
        grid.free[ijk] = v
    return grid


def voxelize(obstacles, spec: GridSpec = GridSpec()) -> VoxelGrid:
    """Mark a voxel occupied when its center is within ``radius + inflation`` of an obstacle."""
    origin = np.asarray(spec.origin, dtype=float)
    res = spec.resolution
    dims = spec.dims
    free = np.ones(dims, dtype=bool)
    grid = VoxelGrid(origin=origin, resolution=res, dims=dims, free=free)
    centers, radii = obstacle_arrays(obstacles)
    infl = spec.effective_inflation
    axes = [origin[d] + (np.arange(n) + 0.5) * res for d, n in enumerate(dims)]
    for c, r in zip(centers, radii):
        reach = r + infl
        # only scan the bounding box of the inflated sphere
        lo = [max(0, int(math.floor((c[d] - reach - origin[d]) / res))) for d in range(3)]
        hi = [min(dims[d], int(math.ceil((c[d] + reach - origin[d]) / res)) + 1) for d in range(3)]
        if any(h <= l for l, h in zip(lo, hi)):
            continue
        X, Y, Z = np.meshgrid(*(axes[d][lo[d]:hi[d]] for d in range(3)), indexing="ij")
        d2 = (X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2
        free[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] &= d2 > reach * reach
    return grid


def min_clearance(point, obstacles) -> float:
    """Distance from ``point`` to the nearest obstacle surface; ``inf`` with no obstacles."""
    centers, radii = obstacle_arrays(obstacles)
    return float(clearance_many(np.asarray(point, dtype=float)[None], centers, radii)[0])


def clearance_many(points: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Vectorised :func:`min_clearance` over ``points (m, 3)``."""
    points = np.atleast_2d(points)
    if len(radii) == 0:
        return np.full(len(points), np.inf)
    d = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=-1) - radii[None, :]
    return d.min(axis=1)


def self_collision(model: ArmModel, q, spheres: np.ndarray | None = None) -> bool:
    """Overlap between spheres of non-adjacent bodies."""
    if spheres is None:
        spheres = link_spheres(model, q)
    owner = model.sphere_owner()
    radii = model.sphere_radii()
    mask = np.abs(owner[:, None] - owner[None, :]) > 1
    d = np.linalg.norm(spheres[:, None] - spheres[None, :], axis=-1)
    return bool(np.any((d <= radii[:, None] + radii[None, :]) & mask))


def arm_hits_obstacles(model: ArmModel, spheres: np.ndarray, centers, radii) -> bool:
    if len(radii) == 0:
        return False
    d = np.linalg.norm(spheres[:, None] - centers[None], axis=-1)
    return bool(np.any(d <= model.sphere_radii()[:, None] + radii[None, :]))


def collision_check(model: ArmModel, q, obstacles) -> bool:
    """True when any link sphere touches an obstacle or a non-adjacent link."""
    spheres = link_spheres(model, q)
    centers, radii = obstacle_arrays(obstacles)
    return arm_hits_obstacles(model, spheres, centers, radii) or self_collision(model, q, spheres)


@dataclass(frozen=True)
class ScenarioConfig:
    joint_margin: float = 0.2
    goal_margin: float = 0.1
    max_attempts: int = 200
    radius_range: tuple[float, float] = (0.03, 0.10)
    endpoint_exclusion: float = 0.1
    # end-effector targets live in a shell around the shoulder
    shoulder: tuple[float, float, float] = (0.0, 0.0, 0.15)
    goal_shell: tuple[float, float] = (0.25, 0.6)
    min_separation: float = 0.3
    ik_restarts: int = 4
    ik_iterations: int = 1500
    grid: GridSpec = field(default_factory=GridSpec)


@dataclass(eq=False)
class Scenario:
    seed: int
    density: Density
    obstacles: list[Obstacle]
    q_start: np.ndarray
    x_goal: np.ndarray
    q_goal: np.ndarray

    def __post_init__(self):
        self.q_start = np.asarray(self.q_start, dtype=float)
        self.x_goal = np.asarray(self.x_goal, dtype=float)
        self.q_goal = np.asarray(self.q_goal, dtype=float)
        self._arrays = None

    @property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._arrays is None:
            self._arrays = obstacle_arrays(self.obstacles)
        return self._arrays

    def x_start(self, model: ArmModel) -> np.ndarray:
        return forward_position(model, self.q_start)

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "density": self.density.value,
            "obstacles": [{"center": list(o.center), "radius": o.radius} for o in self.obstacles],
            "q_start": self.q_start.tolist(),
            "x_goal": self.x_goal.tolist(),
            "q_goal": self.q_goal.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        return cls(
            seed=int(doc["seed"]),
            density=Density(doc["density"]),
            obstacles=[Obstacle(tuple(o["center"]), float(o["radius"])) for o in doc["obstacles"]],
            q_start=doc["q_start"],
            x_goal=doc["x_goal"],
            q_goal=doc["q_goal"],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _sample_shell(rng, center, r_lo, r_hi) -> np.ndarray:
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    # uniform in volume
    r = (rng.uniform(r_lo ** 3, r_hi ** 3)) ** (1.0 / 3.0)
    return np.asarray(center) + r * v


def _solve_goal(model, q_start, x_goal, rng, cfg: ScenarioConfig):
    from .executor import ExecutorConfig, solve_point

    ecfg = ExecutorConfig()
    seeds = [q_start] + [rng.uniform(model.q_min, model.q_max) for _ in range(cfg.ik_restarts)]
    for q0 in seeds:
        q, err, _ = solve_point(model, q0, x_goal, ecfg, max_iters=cfg.ik_iterations)
        if err > ecfg.eps_p:
            continue
        if model.margin(q) < cfg.goal_margin or self_collision(model, q):
            continue
        return q
    return None


def generate_scenario(density, seed: int, model: ArmModel, cfg: ScenarioConfig = ScenarioConfig()) -> Scenario:
    """Sample a reproducible task for one density class.

    Raises :class:`GenerationFailed` after ``cfg.max_attempts`` rejected draws.
    """
    density = Density(density)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    lo_n, hi_n = DENSITY_COUNTS[density]
    lo_q = model.q_min + cfg.joint_margin
    hi_q = model.q_max - cfg.joint_margin
    box_lo = np.asarray(cfg.grid.origin, dtype=float)
    box_hi = box_lo + cfg.grid.size
    shoulder = np.asarray(cfg.shoulder)
    r_lo, r_hi = cfg.goal_shell
    # endpoint voxels must stay free after inflation
    half_diag = 0.5 * math.sqrt(3.0) * cfg.grid.resolution
    exclusion = max(cfg.endpoint_exclusion, cfg.grid.effective_inflation + half_diag + 1e-6)

    for _ in range(cfg.max_attempts):
        q_start = rng.uniform(lo_q, hi_q)
        x_start = forward_position(model, q_start)
        if not r_lo <= np.linalg.norm(x_start - shoulder) <= r_hi:
            continue
        start_spheres = link_spheres(model, q_start)
        if self_collision(model, q_start, start_spheres):
            continue

        x_goal = _sample_shell(rng, shoulder, r_lo, r_hi)
        if np.linalg.norm(x_goal - x_start) < cfg.min_separation:
            continue
        q_goal = _solve_goal(model, q_start, x_goal, rng, cfg)
        if q_goal is None:
            continue
        goal_spheres = link_spheres(model, q_goal)

        n = int(rng.integers(lo_n, hi_n + 1))
        obstacles: list[Obstacle] = []
        draws = 0
        while len(obstacles) < n and draws < 50 * max(n, 1):
            draws += 1
            r = float(rng.uniform(*cfg.radius_range))
            c = rng.uniform(box_lo, box_hi)
            if np.linalg.norm(c - x_start) < r + exclusion:
                continue
            if np.linalg.norm(c - x_goal) < r + exclusion:
                continue
            one_c, one_r = c[None], np.array([r])
            if arm_hits_obstacles(model, start_spheres, one_c, one_r):
                continue
            if arm_hits_obstacles(model, goal_spheres, one_c, one_r):
                continue
            obstacles.append(Obstacle(tuple(float(v) for v in c), r))
        if len(obstacles) < n:
            continue
        return Scenario(seed=int(seed), density=density, obstacles=obstacles,
                        q_start=q_start, x_goal=x_goal, q_goal=q_goal)
    raise GenerationFailed(f"no feasible {density.value} scenario for seed {seed} "
                           f"after {cfg.max_attempts} attempts")
