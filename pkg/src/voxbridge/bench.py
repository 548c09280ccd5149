"""Benchmark harness: task suites, planner and executor matrices, result tables."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .executor import ExecutorConfig, NumIKConfig, StepSink, execute_num_ik, execute_tp_dls
from .kinematics import ArmModel, default_model
from .metrics import ExecutionMetrics, Penalties, PlannerMetrics, execution_metrics, planner_metrics
from .planner import TieBreakConfig, TrainConfig, Variant, build_action_set, make_task, rollout, train
from .smoothing import SmoothingConfig, smooth_path
from .world import Density, GenerationFailed, GridSpec, ScenarioConfig, generate_scenario

log = logging.getLogger(__name__)

DENSITIES = tuple(d.value for d in Density)
PLANNERS = tuple(v.value for v in Variant)
EXECUTORS = ("numik", "tpdls")


@dataclass(frozen=True)
class RunConfig:
    densities: tuple[str, ...] = DENSITIES
    tasks_per_density: int = 50
    planners: tuple[str, ...] = PLANNERS
    executors: tuple[str, ...] = EXECUTORS
    base_seed: int = 0
    output_dir: str = "results"
    grid: GridSpec = field(default_factory=GridSpec)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    tie_break: TieBreakConfig = field(default_factory=TieBreakConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    num_ik: NumIKConfig = field(default_factory=NumIKConfig)
    penalties: Penalties = field(default_factory=Penalties)
    delta: float | None = None  # improved step length, defaults to the grid resolution
    max_resamples: int = 10
    reach_mask: bool = True  # plan only inside the arm's reach around the shoulder

    def __post_init__(self):
        for name, allowed in (("densities", DENSITIES), ("planners", PLANNERS), ("executors", EXECUTORS)):
            sel = getattr(self, name)
            if not sel:
                raise ValueError(f"{name} selection is empty")
            bad = set(sel) - set(allowed)
            if bad:
                raise ValueError(f"unknown {name}: {sorted(bad)}")
        if self.tasks_per_density < 1:
            raise ValueError("tasks_per_density must be positive")
        # the scenario generator must voxelize with the planning grid
        if self.scenario.grid != self.grid:
            object.__setattr__(self, "scenario", dataclasses.replace(self.scenario, grid=self.grid))

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        """Build from a (possibly partial) nested mapping; missing keys keep defaults."""
        return _build(cls, doc)

    def fingerprint(self) -> str:
        # the output location does not influence any result
        doc = self.to_dict()
        doc.pop("output_dir")
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if hasattr(x, "value"):  # enums
        return x.value
    return x


def _build(cls, doc: dict):
    kwargs = {}
    types = {f.name: f for f in dataclasses.fields(cls)}
    for key, val in doc.items():
        if key not in types:
            raise ValueError(f"unknown {cls.__name__} field {key!r}")
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            val = _build(type(default), val)
        elif isinstance(default, tuple) or isinstance(val, list):
            val = tuple(val)
        kwargs[key] = val
    return cls(**kwargs)


@dataclass(frozen=True)
class PlannerRow:
    density: str
    planner: str
    tasks: int
    success_rate: float
    length: float
    turns: float
    steps: float
    min_clearance: float
    config_hash: str


@dataclass(frozen=True)
class ExecutorRow:
    density: str
    solver: str
    tasks: int
    success_rate: float
    dq_95: float
    max_vel: float
    max_acc: float
    joint_margin: float
    backtracks: float
    iterations: float
    config_hash: str


@dataclass
class TaskRecord:
    task_id: str
    density: str
    index: int
    seed: int | None
    attempts: int
    skipped: str | None = None
    planner: dict[str, PlannerMetrics] = field(default_factory=dict)
    reference_digest: str | None = None
    executor: dict[str, ExecutionMetrics] = field(default_factory=dict)
    exec_seconds: dict[str, float] = field(default_factory=dict)
    paths: dict = field(default_factory=dict)  # planner polylines
    trajectories: dict = field(default_factory=dict)


@dataclass
class BenchmarkResult:
    config: RunConfig
    tasks: list[TaskRecord]
    planner_rows: list[PlannerRow]
    executor_rows: list[ExecutorRow]
    started: str
    finished: str


def task_seed(base_seed: int, density: str, index: int, attempt: int) -> int:
    """64-bit scenario seed; ``attempt`` is the resampling offset after a failed generation."""
    ss = np.random.SeedSequence([int(base_seed) & (2**64 - 1), DENSITIES.index(density), index, attempt])
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def _scenario_for(cfg: RunConfig, model: ArmModel, density: str, index: int):
    for attempt in range(cfg.max_resamples + 1):
        seed = task_seed(cfg.base_seed, density, index, attempt)
        try:
            return generate_scenario(density, seed, model, cfg.scenario), seed, attempt + 1
        except GenerationFailed:
            log.info("generation failed for %s/%d (seed %d), resampling", density, index, seed)
    return None, None, cfg.max_resamples + 1


def _run_task(cfg: RunConfig, model: ArmModel, density: str, index: int, planners, executors,
              keep_trajectories: bool, step_sink: StepSink | None) -> TaskRecord:
    task_id = f"{density}-{index:03d}"
    sc, seed, attempts = _scenario_for(cfg, model, density, index)
    rec = TaskRecord(task_id=task_id, density=density, index=index, seed=seed, attempts=attempts)
    if sc is None:
        rec.skipped = "scenario generation exhausted"
        log.warning("task %s skipped: %s", task_id, rec.skipped)
        return rec
    task = make_task(sc, model, cfg.grid, cfg.scenario.shoulder if cfg.reach_mask else None)
    needed = list(planners)
    if executors and "improved" not in needed:
        needed.append("improved")
    reference = None
    for name in needed:
        actions = build_action_set(name, cfg.grid.resolution, cfg.delta)
        q = train(task, actions, cfg.train, seed=seed)
        path = rollout(q, task, actions, cfg.tie_break)
        ref = smooth_path(path, cfg.smoothing) if path.success else None
        if name in planners:
            rec.paths[name] = path
            samples = ref.micro if ref is not None else None
            rec.planner[name] = planner_metrics(path, (task.centers, task.radii), cfg.penalties, samples)
        if name == "improved":
            reference = ref
    if not executors:
        return rec
    if reference is None:
        rec.skipped = "no improved reference path"
        log.warning("task %s: executors skipped, %s", task_id, rec.skipped)
        return rec
    rec.reference_digest = reference.digest()
    for name in executors:
        t0 = time.perf_counter()
        if name == "tpdls":
            traj = execute_tp_dls(model, sc.q_start, reference, cfg.executor, sink=step_sink)
            dt = cfg.executor.dt
        else:
            traj = execute_num_ik(model, sc.q_start, reference, cfg.num_ik)
            dt = cfg.num_ik.dt
        rec.exec_seconds[name] = time.perf_counter() - t0
        # both executors must see the very same reference
        if reference.digest() != rec.reference_digest:
            raise RuntimeError(f"reference path of {task_id} changed between executors")
        rec.executor[name] = execution_metrics(traj, model, dt)
        if keep_trajectories:
            rec.trajectories[name] = traj
    return rec


def _mean(vals) -> float:
    # nan marks a missing value, inf a clearance in an obstacle-free scene
    vals = [v for v in vals if math.isfinite(v)]
    return float(np.mean(vals)) if vals else float("nan")


def aggregate_planner(tasks: list[TaskRecord], cfg: RunConfig, planners=None) -> list[PlannerRow]:
    h = cfg.fingerprint()
    rows = []
    for d in cfg.densities:
        recs = [t for t in tasks if t.density == d and t.planner]
        for p in (cfg.planners if planners is None else planners):
            ms = [t.planner[p] for t in recs]
            rows.append(PlannerRow(
                density=d, planner=p, tasks=len(ms),
                success_rate=_mean([float(m.success) for m in ms]),
                length=_mean([m.length for m in ms]),
                turns=_mean([float(m.turns) for m in ms]),
                steps=_mean([float(m.steps) for m in ms]),
                min_clearance=_mean([m.min_clearance for m in ms if m.success]),
                config_hash=h,
            ))
    return rows


def aggregate_executor(tasks: list[TaskRecord], cfg: RunConfig, executors=None) -> list[ExecutorRow]:
    """Success rate over executed tasks; the other columns average successful trajectories."""
    h = cfg.fingerprint()
    rows = []
    for d in cfg.densities:
        recs = [t for t in tasks if t.density == d and t.executor]
        for s in (cfg.executors if executors is None else executors):
            ms = [t.executor[s] for t in recs]
            ok = [m for m in ms if m.success]
            rows.append(ExecutorRow(
                density=d, solver=s, tasks=len(ms),
                success_rate=_mean([float(m.success) for m in ms]),
                dq_95=_mean([m.dq_95 for m in ok]),
                max_vel=_mean([m.max_vel for m in ok]),
                max_acc=_mean([m.max_acc for m in ok]),
                joint_margin=_mean([m.joint_margin for m in ok]),
                backtracks=_mean([float(m.backtracks) for m in ok]),
                iterations=_mean([float(m.iterations) for m in ok]),
                config_hash=h,
            ))
    return rows


def run_benchmark(cfg: RunConfig, model: ArmModel | None = None, planners=None, executors=None,
                  keep_trajectories: bool = False, step_sink: StepSink | None = None) -> BenchmarkResult:
    """Run the planner and executor matrices in one pass over the task suite."""
    model = default_model() if model is None else model
    planners = tuple(cfg.planners if planners is None else planners)
    executors = tuple(cfg.executors if executors is None else executors)
    started = datetime.now(timezone.utc).isoformat()
    tasks = []
    for d in cfg.densities:
        for i in range(cfg.tasks_per_density):
            tasks.append(_run_task(cfg, model, d, i, planners, executors, keep_trajectories, step_sink))
    finished = datetime.now(timezone.utc).isoformat()
    prows = aggregate_planner(tasks, cfg, planners) if planners else []
    erows = aggregate_executor(tasks, cfg, executors) if executors else []
    return BenchmarkResult(cfg, tasks, prows, erows, started, finished)


def run_planner_benchmark(cfg: RunConfig, model: ArmModel | None = None) -> list[PlannerRow]:
    return run_benchmark(cfg, model, executors=()).planner_rows


def run_executor_benchmark(cfg: RunConfig, model: ArmModel | None = None) -> list[ExecutorRow]:
    return run_benchmark(cfg, model, planners=()).executor_rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows, path: str | Path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    names = [f.name for f in dataclasses.fields(rows[0])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([_fmt(getattr(r, n)) for n in names])


def read_rows(path: str | Path, cls) -> list:
    conv = {f.name: f.type for f in dataclasses.fields(cls)}
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            vals = {}
            for k, v in rec.items():
                t = conv[k]
                vals[k] = int(v) if t in (int, "int") else float(v) if t in (float, "float") else v
            out.append(cls(**vals))
    return out


def emit_results(result: BenchmarkResult, output_dir: str | Path | None = None,
                 model: ArmModel | None = None) -> list[Path]:
    """Write the CSV tables, ``meta.txt`` and any kept trajectories; returns the written paths."""
    model = default_model() if model is None else model
    cfg = result.config
    out = Path(cfg.output_dir if output_dir is None else output_dir)
    if not (result.planner_rows or result.executor_rows):
        raise ValueError("nothing to emit")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if result.planner_rows:
        write_rows(result.planner_rows, out / "planner_table.csv")
        written.append(out / "planner_table.csv")
    if result.executor_rows:
        write_rows(result.executor_rows, out / "executor_table.csv")
        written.append(out / "executor_table.csv")
    skipped = [{"task_id": t.task_id, "reason": t.skipped} for t in result.tasks if t.skipped]
    secs: dict[str, list[float]] = {}
    for t in result.tasks:
        for k, v in t.exec_seconds.items():
            secs.setdefault(f"{t.density}/{k}", []).append(v)
    meta = {
        "config_hash": cfg.fingerprint(),
        "model": {"name": model.name, "fingerprint": model.fingerprint},
        "started": result.started,
        "finished": result.finished,
        "tasks_attempted": len(result.tasks),
        "tasks_reported": len(result.tasks) - len(skipped),
        "tasks_skipped": skipped,
        "penalties": dataclasses.asdict(cfg.penalties),
        "mean_executor_seconds": {k: float(np.mean(v)) for k, v in sorted(secs.items())},
        "tasks": [{"task_id": t.task_id, "seed": t.seed, "attempts": t.attempts,
                   "reference_digest": t.reference_digest} for t in result.tasks],
        "run_config": cfg.to_dict(),
    }
    (out / "meta.txt").write_text(json.dumps(meta, indent=1) + "\n")
    written.append(out / "meta.txt")
    kept = [t for t in result.tasks if t.trajectories]
    if kept:
        (out / "traj").mkdir(exist_ok=True)
        for t in kept:
            for name, traj in t.trajectories.items():
                p = out / "traj" / f"{t.task_id}-{name}.txt"
                traj.save(p)
                written.append(p)
    return written
