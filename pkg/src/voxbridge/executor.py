"""Joint-space execution of a Cartesian reference path.

Two executors share the same calling convention:

* :func:`execute_tp_dls` -- damped position tracking with null-space joint
  centering and norm/per-joint increment clipping.
* :func:`execute_num_ik` -- the pointwise numerical IK baseline: near-undamped
  Gauss-Newton on a full pose target (the reference position plus the initial
  tool orientation), warm-started from the previous solution, clamped to the
  joint box, with random restarts and no null-space term or increment bounds.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit

from .kinematics import (ArmModel, _chain, _jacobian, dls_pinv, forward_position, joint_frames,
                         null_projector, position_and_jacobian)


class ExecutionError(RuntimeError):
    """A non-finite value appeared inside an update; the model or config is broken."""


@dataclass(frozen=True)
class ExecutorConfig:
    lam: float = 0.01
    k_p: float = 1.0
    alpha_c: float = 0.05
    dq_max_norm: float = 0.05
    dq_max_joint: tuple[float, ...] = (0.03,) * 7
    eps_p: float = 1e-3
    k_max_iters: int = 200
    dt: float = 0.01

    def __post_init__(self):
        vals = [self.lam, self.k_p, self.alpha_c, self.dq_max_norm, self.eps_p, self.dt, *self.dq_max_joint]
        if any(not v > 0 for v in vals) or self.k_max_iters < 1:
            raise ValueError("executor parameters must all be positive")
        if len(self.dq_max_joint) != 7:
            raise ValueError("dq_max_joint needs one bound per joint")


@dataclass(frozen=True)
class NumIKConfig:
    lam: float = 1e-6  # numerical safety only
    eps_p: float = 1e-3
    eps_o: float = 1e-2  # rad, orientation tolerance of the pose target
    w_o: float = 0.25  # m per rad, weights orientation rows against position rows
    k_max_iters: int = 100
    restarts: int = 3
    seed: int = 0
    dt: float = 0.01

    def __post_init__(self):
        if any(not v > 0 for v in (self.lam, self.eps_p, self.eps_o, self.w_o, self.dt)):
            raise ValueError("Num-IK parameters must be positive")
        if self.k_max_iters < 1 or self.restarts < 0:
            raise ValueError("k_max_iters must be positive and restarts non-negative")


@dataclass
class TpDlsStepRecord:
    e_p: np.ndarray
    e_c: np.ndarray
    dq1: np.ndarray
    dq2: np.ndarray
    dq: np.ndarray
    clipped_norm: bool
    clipped_joints: np.ndarray


StepSink = Callable[[TpDlsStepRecord], None]


@dataclass
class JointTrajectory:
    configs: list[np.ndarray]
    waypoint_errors: list[float]
    iteration_counts: list[int]
    success: bool
    retries: int = 0
    solver: str = ""

    @property
    def array(self) -> np.ndarray:
        return np.array(self.configs)

    def dumps(self) -> str:
        """One JSON record per line: index, q, final error, iterations (index 0 is q0)."""
        lines = [json.dumps({"solver": self.solver, "success": self.success, "retries": self.retries})]
        lines.append(json.dumps({"i": 0, "q": self.configs[0].tolist(), "error": None, "iterations": 0}))
        for i, (q, e, k) in enumerate(zip(self.configs[1:], self.waypoint_errors, self.iteration_counts), 1):
            lines.append(json.dumps({"i": i, "q": q.tolist(), "error": e, "iterations": k}))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "JointTrajectory":
        rows = [json.loads(l) for l in text.splitlines() if l.strip()]
        head, recs = rows[0], rows[1:]
        return cls(
            configs=[np.array(r["q"], dtype=float) for r in recs],
            waypoint_errors=[r["error"] for r in recs[1:]],
            iteration_counts=[r["iterations"] for r in recs[1:]],
            success=head["success"],
            retries=head["retries"],
            solver=head["solver"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def clip_norm(dq: np.ndarray, bound: float) -> np.ndarray:
    n = float(np.linalg.norm(dq))
    if n <= bound:
        return dq
    return dq * (bound / n)


def clip_components(dq: np.ndarray, bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    return np.clip(dq, -b, b)


def _tp_dls_update(model: ArmModel, q, x_target, cfg: ExecutorConfig, p=None, J=None):
    if p is None:
        p, J = position_and_jacobian(model, q)
    e_p = x_target - p
    Jp = J[:3]
    Jp_dag = dls_pinv(Jp, cfg.lam)
    dq1 = Jp_dag @ (cfg.k_p * e_p)
    N1 = null_projector(Jp, Jp_dag)
    e_c = model.q_mid - q
    dq2 = cfg.alpha_c * (N1.T @ e_c)
    raw = dq1 + dq2
    dq = clip_norm(raw, cfg.dq_max_norm)
    clipped_norm = dq is not raw
    bounds = np.asarray(cfg.dq_max_joint)
    clipped_joints = np.abs(dq) > bounds
    dq = clip_components(dq, bounds)
    if not np.all(np.isfinite(dq)):
        raise ExecutionError("non-finite joint increment")
    rec = TpDlsStepRecord(e_p=e_p, e_c=e_c, dq1=dq1, dq2=dq2, dq=dq,
                          clipped_norm=bool(clipped_norm), clipped_joints=clipped_joints)
    return q + dq, rec


def tp_dls_step(model: ArmModel, q, x_target, cfg: ExecutorConfig = ExecutorConfig()):
    """One damped, centred and clipped update toward ``x_target``.

    Returns ``(q_next, record)``.
    """
    q = np.asarray(q, dtype=float)
    return _tp_dls_update(model, q, np.asarray(x_target, dtype=float), cfg)


def solve_point(model: ArmModel, q, x_target, cfg: ExecutorConfig = ExecutorConfig(),
                max_iters: int | None = None, sink: StepSink | None = None):
    """Iterate :func:`tp_dls_step` until the position error is within ``eps_p``.

    Returns ``(q, final_error, iterations)``.
    """
    q = np.asarray(q, dtype=float)
    x_target = np.asarray(x_target, dtype=float)
    k_max = cfg.k_max_iters if max_iters is None else max_iters
    k = 0
    while True:
        p, J = position_and_jacobian(model, q)
        err = float(np.linalg.norm(x_target - p))
        if err <= cfg.eps_p or k >= k_max:
            return q, err, k
        q, rec = _tp_dls_update(model, q, x_target, cfg, p, J)
        if sink is not None:
            sink(rec)
        k += 1


def _targets(reference) -> np.ndarray:
    pts = reference.micro if hasattr(reference, "micro") else reference
    return np.asarray(pts, dtype=float).reshape(-1, 3)


def execute_tp_dls(model: ArmModel, q0, reference, cfg: ExecutorConfig = ExecutorConfig(),
                   sink: StepSink | None = None) -> JointTrajectory:
    """Track every micro waypoint of ``reference`` with TP-DLS.

    Execution stops at the first waypoint that misses ``eps_p`` within the
    iteration budget and the trajectory is flagged as failed.
    """
    q = np.asarray(q0, dtype=float).copy()
    traj = JointTrajectory(configs=[q.copy()], waypoint_errors=[], iteration_counts=[],
                           success=True, solver="tpdls")
    for x in _targets(reference):
        q, err, k = solve_point(model, q, x, cfg, sink=sink)
        traj.waypoint_errors.append(err)
        traj.iteration_counts.append(k)
        if err > cfg.eps_p:
            traj.success = False
            return traj
        traj.configs.append(q.copy())
    return traj


@njit(cache=True)
def _orient_error(R, Rd):
    e = np.zeros(3)
    for i in range(3):
        e += 0.5 * np.cross(R[:, i], Rd[:, i])
    return e


@njit(cache=True)
def _pose_gn(offsets, axes, tool, q_min, q_max, q, x, Rd, lam, w_o, eps_p, eps_o, k_max):
    """Gauss-Newton on the weighted 6-D pose error, projected onto the joint box.

    Returns ``(q, position_error, orientation_error, iterations)``; a non-finite
    or exploding error is reported as ``inf``.
    """
    q = q.copy()
    k = 0
    best = np.inf
    e = np.empty(6)
    while True:
        J, p = _jacobian(offsets, axes, tool, q)
        R = _chain(offsets, axes, tool, q)[0][-1]
        ep = x - p
        eo = _orient_error(R, Rd)
        ne_p = np.sqrt(ep @ ep)
        ne_o = np.sqrt(eo @ eo)
        if not np.isfinite(ne_p) or ne_p > 1e3 * max(best, eps_p):
            return q, np.inf, np.inf, k
        if (ne_p <= eps_p and ne_o <= eps_o) or k >= k_max:
            return q, ne_p, ne_o, k
        best = min(best, ne_p)
        e[:3] = ep
        e[3:] = w_o * eo
        Jw = J.copy()
        Jw[3:] *= w_o
        A = Jw @ Jw.T + lam * lam * np.eye(6)
        dq = Jw.T @ np.linalg.solve(A, e)
        q = np.minimum(np.maximum(q + dq, q_min), q_max)
        k += 1


def _solve_pose(model: ArmModel, q, x, Rd, cfg: NumIKConfig):
    """Pose solve from ``q``, then position-only polishing if the pose compromise misses ``eps_p``.

    The polish starts from the pose result and, if that still misses, from ``q``
    itself.  Returns ``(q, position_error, orientation_error, iterations)``.
    """
    args = (model.offsets, model.axes, model.tool_offset, model.q_min, model.q_max)
    q0 = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    q, ep, eo, k = _pose_gn(*args, q0, x, Rd, cfg.lam, cfg.w_o, cfg.eps_p, cfg.eps_o, cfg.k_max_iters)
    for start in (q, q0):
        if ep <= cfg.eps_p:
            break
        q2, ep2, _, k2 = _pose_gn(*args, start, x, Rd, cfg.lam, 0.0, cfg.eps_p, np.inf, cfg.k_max_iters)
        k += k2
        if ep2 < ep:
            R = _chain(model.offsets, model.axes, model.tool_offset, q2)[0][-1]
            q, ep, eo = q2, ep2, float(np.linalg.norm(_orient_error(R, Rd)))
    return q, ep, eo, k


def _rank(res, eps_p):
    # position tolerance first, then the orientation residual
    _, ep, eo, _ = res
    ok = bool(ep <= eps_p)
    return (not ok, eo if ok else ep)


def execute_num_ik(model: ArmModel, q0, reference, cfg: NumIKConfig = NumIKConfig()) -> JointTrajectory:
    """Pointwise IK baseline, warm-started from the previous solution.

    Every waypoint is solved as a pose target whose orientation is the tool
    orientation at ``q0``.  When the warm start does not converge, up to
    ``cfg.restarts`` uniformly random seeds are tried and the best solution is
    kept; each such attempt counts as a retry.  A waypoint succeeds when its
    position error is within ``eps_p``.
    """
    q = np.asarray(q0, dtype=float).copy()
    Rd = np.ascontiguousarray(joint_frames(model, q)[0][-1])
    rng = np.random.default_rng(cfg.seed)
    traj = JointTrajectory(configs=[q.copy()], waypoint_errors=[], iteration_counts=[],
                           success=True, solver="numik")
    for x in _targets(reference):
        res = _solve_pose(model, q, x, Rd, cfg)
        iters = res[3]
        if not (res[1] <= cfg.eps_p and res[2] <= cfg.eps_o):
            for _ in range(cfg.restarts):
                traj.retries += 1
                seed_q = rng.uniform(model.q_min, model.q_max)
                alt = _solve_pose(model, seed_q, x, Rd, cfg)
                iters += alt[3]
                if _rank(alt, cfg.eps_p) < _rank(res, cfg.eps_p):
                    res = alt
                if alt[1] <= cfg.eps_p and alt[2] <= cfg.eps_o:
                    break
        q_new, err = res[0], float(res[1])
        traj.waypoint_errors.append(err)
        traj.iteration_counts.append(int(iters))
        if not err <= cfg.eps_p:
            traj.success = False
            return traj
        q = q_new
        traj.configs.append(q.copy())
    return traj
