"""Kinematic model of a 7-joint S-R-S arm.

Joint configurations are plain ``(7,)`` float arrays.  All functions here are
pure: they never mutate their inputs and keep no state between calls.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit

N_JOINTS = 7


class KinematicsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Body:
    name: str
    frame: int  # 0 = base frame, k = frame after joint k
    centers: np.ndarray  # (n, 3) in the body frame
    radii: np.ndarray  # (n,)


@dataclass(frozen=True, eq=False)
class ArmModel:
    name: str
    offsets: np.ndarray  # (7, 3) joint origin in the parent frame
    axes: np.ndarray  # (7, 3) unit rotation axes in the local frame
    tool_offset: np.ndarray  # (3,)
    q_min: np.ndarray
    q_max: np.ndarray
    bodies: tuple[Body, ...]
    reach: float
    fingerprint: str = field(default="", compare=False)

    def __post_init__(self):
        if self.offsets.shape != (N_JOINTS, 3) or self.axes.shape != (N_JOINTS, 3):
            raise KinematicsError("model must describe exactly 7 joints")
        if not np.all(self.q_min < self.q_max):
            raise KinematicsError("q_min must be strictly below q_max")
        for b in self.bodies:
            if not np.all(b.radii > 0):
                raise KinematicsError(f"body {b.name!r} has a non-positive sphere radius")
            if not 0 <= b.frame <= N_JOINTS:
                raise KinematicsError(f"body {b.name!r} references frame {b.frame}")
        for arr in (self.offsets, self.axes, self.tool_offset, self.q_min, self.q_max):
            arr.setflags(write=False)

    @property
    def q_mid(self) -> np.ndarray:
        return 0.5 * (self.q_min + self.q_max)

    @property
    def base_position(self) -> np.ndarray:
        return np.zeros(3)

    def margin(self, q) -> float:
        """Smallest distance of any joint to its nearest limit (negative if outside)."""
        q = np.asarray(q, dtype=float)
        return float(np.min(np.minimum(q - self.q_min, self.q_max - q)))

    def sphere_owner(self) -> np.ndarray:
        """Body index of every collision sphere, in :func:`link_spheres` order."""
        return np.concatenate([np.full(len(b.radii), i) for i, b in enumerate(self.bodies)])

    def sphere_radii(self) -> np.ndarray:
        return np.concatenate([b.radii for b in self.bodies])


def model_from_dict(doc: dict) -> ArmModel:
    joints = doc["joints"]
    if len(joints) != N_JOINTS:
        raise KinematicsError(f"expected {N_JOINTS} joints, got {len(joints)}")
    axes = np.array([j["axis"] for j in joints], dtype=float)
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    bodies = tuple(
        Body(
            name=b["name"],
            frame=int(b["frame"]),
            centers=np.array([s["center"] for s in b["spheres"]], dtype=float).reshape(-1, 3),
            radii=np.array([s["radius"] for s in b["spheres"]], dtype=float),
        )
        for b in doc["bodies"]
    )
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return ArmModel(
        name=doc.get("name", "arm"),
        offsets=np.array([j["offset"] for j in joints], dtype=float),
        axes=axes,
        tool_offset=np.array(doc["tool_offset"], dtype=float),
        q_min=np.array([j["q_min"] for j in joints], dtype=float),
        q_max=np.array([j["q_max"] for j in joints], dtype=float),
        bodies=bodies,
        reach=float(doc["reach"]),
        fingerprint=hashlib.sha256(canon.encode()).hexdigest()[:16],
    )


def load_model(path: str | Path | None = None) -> ArmModel:
    """Load an arm description from a JSON model file (the bundled S-R-S arm by default)."""
    if path is None:
        text = resources.files("voxbridge.data").joinpath("srs7.json").read_text()
    else:
        text = Path(path).read_text()
    return model_from_dict(json.loads(text))


_DEFAULT: ArmModel | None = None


def default_model() -> ArmModel:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_model()
    return _DEFAULT


def _check_q(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (N_JOINTS,):
        raise KinematicsError(f"joint configuration must have shape (7,), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise KinematicsError("joint configuration contains non-finite values")
    return q


@njit(cache=True)
def _chain(offsets, axes, tool, q):
    n = q.shape[0]
    R = np.empty((n + 1, 3, 3))
    p = np.empty((n + 1, 3))
    R[0] = np.eye(3)
    p[0] = 0.0
    for j in range(n):
        x, y, z = axes[j, 0], axes[j, 1], axes[j, 2]
        c, s = np.cos(q[j]), np.sin(q[j])
        C = 1.0 - c
        # Rodrigues, axis is unit length
        rot = np.empty((3, 3))
        rot[0, 0] = c + x * x * C
        rot[0, 1] = x * y * C - z * s
        rot[0, 2] = x * z * C + y * s
        rot[1, 0] = y * x * C + z * s
        rot[1, 1] = c + y * y * C
        rot[1, 2] = y * z * C - x * s
        rot[2, 0] = z * x * C - y * s
        rot[2, 1] = z * y * C + x * s
        rot[2, 2] = c + z * z * C
        p[j + 1] = p[j] + R[j] @ offsets[j]
        R[j + 1] = R[j] @ rot
    p_ee = p[n] + R[n] @ tool
    return R, p, p_ee


@njit(cache=True)
def _jacobian(offsets, axes, tool, q):
    R, p, p_ee = _chain(offsets, axes, tool, q)
    n = q.shape[0]
    J = np.empty((6, n))
    for j in range(n):
        # the joint axis is invariant under its own rotation, so frame j+1 works
        w = R[j + 1] @ axes[j]
        r = p_ee - p[j + 1]
        J[0, j] = w[1] * r[2] - w[2] * r[1]
        J[1, j] = w[2] * r[0] - w[0] * r[2]
        J[2, j] = w[0] * r[1] - w[1] * r[0]
        J[3, j] = w[0]
        J[4, j] = w[1]
        J[5, j] = w[2]
    return J, p_ee


def joint_frames(model: ArmModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Rotations ``(8, 3, 3)`` and origins ``(8, 3)`` of the base frame and each joint frame."""
    q = _check_q(q)
    R, p, _ = _chain(model.offsets, model.axes, model.tool_offset, q)
    return R, p


def forward_position(model: ArmModel, q) -> np.ndarray:
    """End-effector position in the base frame."""
    q = _check_q(q)
    return _chain(model.offsets, model.axes, model.tool_offset, q)[2]


def geometric_jacobian(model: ArmModel, q) -> np.ndarray:
    """6x7 base-frame Jacobian, linear velocity rows first.

    The translational block used by the executors is ``J[:3]``.
    """
    q = _check_q(q)
    return _jacobian(model.offsets, model.axes, model.tool_offset, q)[0]


def position_and_jacobian(model: ArmModel, q) -> tuple[np.ndarray, np.ndarray]:
    """``(p(q), J(q))`` from a single pass over the chain."""
    q = _check_q(q)
    J, p_ee = _jacobian(model.offsets, model.axes, model.tool_offset, q)
    return p_ee, J


def pose_and_jacobian(model: ArmModel, q) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """End-effector position, orientation matrix and 6x7 Jacobian."""
    q = _check_q(q)
    R, _, _ = _chain(model.offsets, model.axes, model.tool_offset, q)
    J, p_ee = _jacobian(model.offsets, model.axes, model.tool_offset, q)
    return p_ee, R[-1], J


def translational_jacobian(model: ArmModel, q) -> np.ndarray:
    return geometric_jacobian(model, q)[:3]


def link_spheres(model: ArmModel, q) -> np.ndarray:
    """World-frame centers ``(n, 3)`` of all collision spheres."""
    R, p = joint_frames(model, q)
    return np.concatenate([b.centers @ R[b.frame].T + p[b.frame] for b in model.bodies])


def dls_pinv(Jp: np.ndarray, lam: float) -> np.ndarray:
    """Damped least-squares inverse ``Jp^T (Jp Jp^T + lam^2 I)^-1``."""
    if not lam > 0:
        raise KinematicsError(f"damping must be positive, got {lam}")
    Jp = np.asarray(Jp, dtype=float)
    m = Jp.shape[0]
    A = Jp @ Jp.T + lam * lam * np.eye(m)
    # A is symmetric positive definite, so solve instead of inverting
    return np.linalg.solve(A, Jp).T


def null_projector(Jp: np.ndarray, Jp_dagger: np.ndarray) -> np.ndarray:
    n = Jp.shape[1]
    return np.eye(n) - Jp_dagger @ Jp
