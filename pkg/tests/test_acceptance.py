"""Acceptance criteria, run on the default benchmark configuration.

Each test prints one PASS/FAIL line and the lines are repeated in the
terminal summary. The two full benchmark runs take several minutes.
"""
import numpy as np
import pytest

from voxbridge.bench import RunConfig, emit_results, run_benchmark
from voxbridge.executor import ExecutorConfig
from voxbridge.kinematics import default_model, dls_pinv, forward_position, geometric_jacobian
from voxbridge.planner import TrainConfig, build_action_set, rollout, train
from voxbridge.world import GridSpec, voxelize

from oracles import bfs, random_field, small_task, value_iteration, voxelize_oracle

pytestmark = pytest.mark.slow

M = default_model()
DENSITIES = ("sparse", "medium", "dense")


class ClipChecker:
    """Step sink that checks the clip contracts of every TP-DLS update."""

    def __init__(self, cfg: ExecutorConfig):
        self.bound = cfg.dq_max_norm
        self.joint = np.asarray(cfg.dq_max_joint)
        self.count = 0
        self.violations = 0

    def __call__(self, rec):
        self.count += 1
        ok = np.linalg.norm(rec.dq) <= self.bound * (1 + 1e-12)
        ok &= bool(np.all(np.abs(rec.dq) <= self.joint))
        if rec.clipped_norm and not rec.clipped_joints.any():
            raw = rec.dq1 + rec.dq2
            cos = rec.dq @ raw / (np.linalg.norm(rec.dq) * np.linalg.norm(raw))
            ok &= abs(cos - 1.0) < 1e-12
        if not ok:
            self.violations += 1


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    cfg = RunConfig()
    sink = ClipChecker(cfg.executor)
    res = run_benchmark(cfg, model=M, keep_trajectories=True, step_sink=sink)
    out = tmp_path_factory.mktemp("bench")
    emit_results(res, out, model=M)
    return res, out, sink


def prow(res, density, planner):
    return next(r for r in res.planner_rows if r.density == density and r.planner == planner)


def erow(res, density, solver):
    return next(r for r in res.executor_rows if r.density == density and r.solver == solver)


def test_criterion_1_planner_success(bench, report):
    res, _, _ = bench
    rates = {d: {p: prow(res, d, p).success_rate for p in ("original", "nonorm", "improved")}
             for d in DENSITIES}
    high = all(rates[d]["improved"] >= 0.95 for d in DENSITIES)
    dense = rates["dense"]
    best = dense["improved"] > dense["original"] and dense["improved"] > dense["nonorm"]
    detail = "; ".join(f"{d} " + " ".join(f"{p}={v:.2f}" for p, v in r.items()) for d, r in rates.items())
    ok = report("criterion 1 planner success", high and best,
                f"improved>=0.95 everywhere: {high}, dense strictly best: {best} ({detail})")
    assert ok


def test_criterion_2_path_quality(bench, report):
    res, _, _ = bench
    parts, ok = [], True
    for d in DENSITIES:
        imp, nn = prow(res, d, "improved"), prow(res, d, "nonorm")
        # nan only when neither planner met an obstacle, which is parity too
        gap = abs(imp.min_clearance - nn.min_clearance)
        good = imp.length < nn.length and imp.turns < nn.turns and not gap > 0.05
        ok &= good
        parts.append(f"{d} length {imp.length:.3f}/{nn.length:.3f} turns {imp.turns:.2f}/{nn.turns:.2f} "
                     f"clearance gap {gap:.3f}")
    ok = report("criterion 2 path quality (improved/nonorm)", ok, "; ".join(parts))
    assert ok


def test_criterion_3_step_uniformity(bench, report):
    res, _, _ = bench
    delta = RunConfig().grid.resolution
    worst, n = 0.0, 0
    for t in res.tasks:
        path = t.paths.get("improved")
        if path is None or not path.success or len(path.points) < 2:
            continue
        n += 1
        steps = np.linalg.norm(np.diff(path.points, axis=0), axis=1)
        worst = max(worst, float(np.abs(steps - delta).max()))
    ok = report("criterion 3 step uniformity", n > 0 and worst < 1e-12 * delta,
                f"{n} rollouts, worst |step-delta| = {worst:.3e} (bound {1e-12 * delta:.1e})")
    assert ok


def _log_mode(errors, width=0.25):
    e = np.log10(np.maximum(np.asarray(errors), 1e-16))
    lo, hi = np.floor(e.min() / width) * width, np.ceil(e.max() / width) * width + width
    counts, edges = np.histogram(e, bins=np.arange(lo, hi + 1e-9, width))
    k = int(np.argmax(counts))
    return 10 ** edges[k], 10 ** edges[k + 1]


def test_criterion_4_execution_accuracy(bench, report):
    res, _, _ = bench
    eps = RunConfig().executor.eps_p
    executed = [t for t in res.tasks if "tpdls" in t.trajectories]
    bad = [t.task_id for t in executed if max(t.trajectories["tpdls"].waypoint_errors, default=0.0) > eps
           or not t.trajectories["tpdls"].success]
    dense = np.concatenate([t.trajectories["tpdls"].waypoint_errors for t in executed if t.density == "dense"])
    lo, hi = _log_mode(dense)
    in_band = lo >= 1e-4 * (1 - 1e-9) and hi <= 1e-3 * (1 + 1e-9)
    ok = report("criterion 4 execution accuracy", not bad and in_band,
                f"{len(executed)} executed tasks, failing {bad or 'none'}; dense error mode "
                f"[{lo:.2e}, {hi:.2e}] m, median {np.median(dense):.2e} m")
    assert ok


def test_criterion_5_smoothness_gap(bench, report):
    res, _, _ = bench
    parts, ok = [], True
    for d in DENSITIES:
        tp, ni = erow(res, d, "tpdls"), erow(res, d, "numik")
        good = tp.dq_95 <= 0.1 * ni.dq_95 and tp.max_acc <= 0.5 * ni.max_acc
        ok &= good
        parts.append(f"{d} dq95 {tp.dq_95:.4f}/{ni.dq_95:.4f} max_acc {tp.max_acc:.0f}/{ni.max_acc:.0f}")
    ok = report("criterion 5 smoothness gap (tpdls/numik)", ok, "; ".join(parts))
    assert ok


def test_criterion_6_joint_margin(bench, report):
    res, _, _ = bench
    tp, ni = erow(res, "dense", "tpdls"), erow(res, "dense", "numik")
    ok = report("criterion 6 dense joint margin", tp.joint_margin >= ni.joint_margin,
                f"tpdls {tp.joint_margin:.4f} vs numik {ni.joint_margin:.4f} rad")
    assert ok


def test_criterion_7_numerical_kinematics(bench, report):
    _, _, sink = bench
    rng = np.random.default_rng(700)
    h = 1e-6
    worst_fd = 0.0
    for q in rng.uniform(M.q_min, M.q_max, size=(100, 7)):
        J = geometric_jacobian(M, q)[:3]
        F = np.empty((3, 7))
        for j in range(7):
            e = np.zeros(7)
            e[j] = h
            F[:, j] = (forward_position(M, q + e) - forward_position(M, q - e)) / (2 * h)
        worst_fd = max(worst_fd, float(np.abs(J - F).max()))
    worst_sv = 0.0
    for _ in range(100):
        lam = rng.uniform(1e-3, 1.0)
        A = rng.normal(size=(3, 7)) * rng.uniform(1e-3, 10)
        s = np.linalg.svd(dls_pinv(A, lam), compute_uv=False)
        worst_sv = max(worst_sv, float(s.max() * 2 * lam))
    good = worst_fd < 1e-6 and worst_sv <= 1 + 1e-12 and sink.count > 0 and sink.violations == 0
    ok = report("criterion 7 numerical kinematics", good,
                f"FD Jacobian max diff {worst_fd:.2e}; max sigma*2*lambda {worst_sv:.12f}; "
                f"{sink.violations} clip violations in {sink.count} step records")
    assert ok


def test_criterion_8_oracles(report):
    rng = np.random.default_rng(800)
    acts = build_action_set("original", 0.1)
    cfg = TrainConfig(episodes=20000)
    matched = 0
    for inst in range(20):
        task = small_task(int(rng.integers(4, 8)), rng=rng)
        path = rollout(train(task, acts, cfg, seed=inst), task, acts)
        d = bfs(task.grid, task.start, task.goal, acts.offsets)
        Qs = value_iteration(task.grid, task.goal, acts.offsets, cfg)
        greedy_ok = all(Qs[task.grid.linear(s)][a] >= Qs[task.grid.linear(s)].max() - 1e-9
                        for s, a in zip(path.voxels[:-1], path.actions))
        matched += int(path.success and len(path.points) - 1 == d and greedy_ok)
    spec = GridSpec()
    fields = 0
    for _ in range(10):
        obs = random_field(rng, int(rng.integers(1, 40)))
        fields += int(np.array_equal(voxelize(obs, spec).free, voxelize_oracle(obs, spec)))
    ok = report("criterion 8 oracle suite", matched == 20 and fields == 10,
                f"{matched}/20 rollouts match BFS and value iteration; {fields}/10 voxel fields match")
    assert ok


def test_criterion_9_determinism(bench, tmp_path, report):
    res, out, _ = bench
    again = run_benchmark(res.config, model=M)
    emit_results(again, tmp_path, model=M)
    same = all((out / n).read_bytes() == (tmp_path / n).read_bytes()
               for n in ("planner_table.csv", "executor_table.csv"))
    ok = report("criterion 9 determinism", same, "planner and executor CSVs byte-identical" if same
                else "CSV bytes differ between runs")
    assert ok
