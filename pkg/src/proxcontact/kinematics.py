"""Serial-chain kinematics: forward kinematics, Jacobians and capsule queries.

A :class:`RobotModel` is a chain of revolute joints. Each joint carries a
fixed transform from the previous joint frame (``origin``) followed by a
rotation about ``axis``. Frame ``i`` is the frame *after* joint ``i`` has
rotated; collision capsules are attached to one of these frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

SCHEMA_VERSION = 1


class ModelError(ValueError):
    """Invalid robot model description or mismatched joint vector."""


def transform(xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Homogeneous transform from a translation and fixed-axis roll/pitch/yaw."""
    T = np.eye(4)
    T[:3, :3] = Rotation.from_euler("xyz", rpy).as_matrix()
    T[:3, 3] = xyz
    return T


@dataclass(frozen=True)
class Joint:
    name: str
    origin: np.ndarray
    axis: np.ndarray

    def rotation(self, angle: float) -> np.ndarray:
        # Rodrigues about the joint axis
        k = self.axis
        K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
        return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


@dataclass(frozen=True)
class Capsule:
    link: int
    a: np.ndarray
    b: np.ndarray
    radius: float


@dataclass(frozen=True)
class RobotModel:
    """Kinematic chain plus collision capsules.

    Parameters
    ----------
    name : str
    joints : tuple of Joint
    capsules : tuple of Capsule
        Segment endpoints are expressed in the frame of ``capsule.link``.
    joint_limits : array, shape (n, 2)
    tool : array, shape (4, 4)
        End-effector frame relative to the last joint frame.
    velocity_limits : array, shape (n,)
    home : array, shape (n,)
        Seed configuration used for inverse kinematics.
    sensor_specs : tuple of dict
        Raw sensor-mount records from the model file, parsed by
        :mod:`proxcontact.sensing`.
    """

    name: str
    joints: tuple
    capsules: tuple
    joint_limits: np.ndarray
    tool: np.ndarray = field(default_factory=lambda: np.eye(4))
    velocity_limits: np.ndarray | None = None
    home: np.ndarray | None = None
    sensor_specs: tuple = ()

    def __post_init__(self):
        n = len(self.joints)
        if n < 1:
            raise ModelError("model needs at least one joint")
        limits = np.asarray(self.joint_limits, dtype=float)
        if limits.shape != (n, 2) or np.any(limits[:, 0] >= limits[:, 1]):
            raise ModelError("joint_limits must be (n, 2) with min < max")
        for cap in self.capsules:
            if cap.radius <= 0:
                raise ModelError("capsule radii must be positive")
            if not 0 <= cap.link < n:
                raise ModelError(f"capsule attached to unknown joint frame {cap.link}")
        object.__setattr__(self, "joint_limits", limits)
        if self.velocity_limits is None:
            object.__setattr__(self, "velocity_limits", np.full(n, np.inf))
        if self.home is None:
            object.__setattr__(self, "home", limits.mean(axis=1))

    @property
    def n(self) -> int:
        return len(self.joints)

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ModelError(f"expected {self.n} joint values, got shape {q.shape}")
        return q


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    q_dot: np.ndarray


@dataclass(frozen=True)
class BodyPoint:
    """Closest point on the robot body to a query point."""

    link_index: int
    local_point: np.ndarray
    world_point: np.ndarray
    distance: float
    direction: np.ndarray
    degenerate: bool = False


# --- model files ------------------------------------------------------------


def model_from_dict(data: dict) -> RobotModel:
    if data.get("schema") != SCHEMA_VERSION:
        raise ModelError(f"unsupported model schema {data.get('schema')!r}")
    joints = []
    for j in data["joints"]:
        axis = np.asarray(j.get("axis", (0, 0, 1)), dtype=float)
        axis = axis / np.linalg.norm(axis)
        origin = j.get("origin", {})
        joints.append(Joint(j.get("name", f"j{len(joints)}"),
                            transform(origin.get("xyz", (0, 0, 0)), origin.get("rpy", (0, 0, 0))),
                            axis))
    caps = tuple(
        Capsule(int(c["link"]), np.asarray(c["a"], float), np.asarray(c["b"], float), float(c["radius"]))
        for c in data.get("capsules", ())
    )
    tool = data.get("tool", {})
    return RobotModel(
        name=data.get("name", "robot"),
        joints=tuple(joints),
        capsules=caps,
        joint_limits=np.asarray(data["joint_limits"], dtype=float),
        tool=transform(tool.get("xyz", (0, 0, 0)), tool.get("rpy", (0, 0, 0))),
        velocity_limits=None if "velocity_limits" not in data else np.asarray(data["velocity_limits"], float),
        home=None if "home" not in data else np.asarray(data["home"], float),
        sensor_specs=tuple(data.get("sensors", ())),
    )


def load_model(name_or_path: str | Path) -> RobotModel:
    """Load a bundled model by name (``"planar2"``, ``"redundant7"``) or a JSON path."""
    path = Path(name_or_path)
    if path.suffix == ".json" or path.exists():
        text = path.read_text()
    else:
        ref = resources.files("proxcontact") / "data" / "models" / f"{name_or_path}.json"
        if not ref.is_file():
            raise ModelError(f"unknown bundled model {name_or_path!r}")
        text = ref.read_text()
    return model_from_dict(json.loads(text))


# --- forward kinematics ---------------------------------------------------


def forward_kinematics(model: RobotModel, q) -> list[np.ndarray]:
    """World frames after every joint, followed by the end-effector frame.

    Returns a list of ``n + 1`` homogeneous transforms.
    """
    q = model.check_q(q)
    frames = []
    T = np.eye(4)
    for joint, angle in zip(model.joints, q):
        T = T @ joint.origin
        R = np.eye(4)
        R[:3, :3] = joint.rotation(angle)
        T = T @ R
        frames.append(T)
    frames.append(T @ model.tool)
    return frames


def ee_pose(model: RobotModel, q) -> np.ndarray:
    return forward_kinematics(model, q)[-1]


def _axes_world(model, frames, upto):
    return np.array([frames[i][:3, :3] @ model.joints[i].axis for i in range(upto + 1)])


def _point_columns(model, frames, upto, p, axes=None):
    J = np.zeros((3, model.n))
    z = _axes_world(model, frames, upto) if axes is None else axes[: upto + 1]
    r = p - np.array([frames[i][:3, 3] for i in range(upto + 1)])
    # row-wise z x r
    J[0, : upto + 1] = z[:, 1] * r[:, 2] - z[:, 2] * r[:, 1]
    J[1, : upto + 1] = z[:, 2] * r[:, 0] - z[:, 0] * r[:, 2]
    J[2, : upto + 1] = z[:, 0] * r[:, 1] - z[:, 1] * r[:, 0]
    return J


def jacobian(model: RobotModel, q, target: BodyPoint | None = None, frames=None) -> np.ndarray:
    """Geometric Jacobian.

    With ``target=None`` returns the 6 x n end-effector Jacobian (linear rows
    first, then angular). With a :class:`BodyPoint` returns the 3 x n
    positional Jacobian of ``target.local_point`` rigidly attached to
    ``target.link_index``; columns of joints distal to that link are zero.
    """
    q = model.check_q(q)
    if frames is None:
        frames = forward_kinematics(model, q)
    if target is None:
        p = frames[-1][:3, 3]
        axes = _axes_world(model, frames, model.n - 1)
        J = np.zeros((6, model.n))
        J[:3] = _point_columns(model, frames, model.n - 1, p, axes)
        J[3:] = axes.T
        return J
    link = target.link_index
    if not 0 <= link < model.n:
        raise ModelError(f"body point attached to unknown link {link}")
    F = frames[link]
    p = F[:3, :3] @ target.local_point + F[:3, 3]
    return _point_columns(model, frames, link, p)


# --- closest points -----------------------------------------------------------


def closest_point_on_segment(point, a, b):
    """Closest point to ``point`` on segment ``ab`` and its parameter in [0, 1]."""
    ab = b - a
    denom = ab @ ab
    t = 0.0 if denom == 0.0 else float(np.clip((point - a) @ ab / denom, 0.0, 1.0))
    return a + t * ab, t


def capsule_points_world(model: RobotModel, frames) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for cap in model.capsules:
        F = frames[cap.link]
        R, o = F[:3, :3], F[:3, 3]
        out.append((R @ cap.a + o, R @ cap.b + o))
    return out


def closest_point_on_robot(model: RobotModel, q, obstacle, frames=None) -> BodyPoint:
    """Closest point on any capsule surface to ``obstacle``.

    Ties between capsules go to the first capsule in model order. An obstacle
    inside a capsule yields ``distance == 0`` with a zero direction and
    ``degenerate=True``.
    """
    q = model.check_q(q)
    if not model.capsules:
        raise ModelError("model has no collision capsules")
    if frames is None:
        frames = forward_kinematics(model, q)
    obstacle = np.asarray(obstacle, dtype=float)
    best = None
    for cap, (a, b) in zip(model.capsules, capsule_points_world(model, frames)):
        on_axis, _ = closest_point_on_segment(obstacle, a, b)
        gap = obstacle - on_axis
        centre_dist = float(np.linalg.norm(gap))
        dist = max(centre_dist - cap.radius, 0.0)
        if best is None or dist < best[0]:
            best = (dist, cap, on_axis, gap, centre_dist)
    dist, cap, on_axis, gap, centre_dist = best
    F = frames[cap.link]
    if dist <= 0.0:
        # obstacle touches or penetrates the body: it is its own closest point
        world = obstacle.copy()
        direction = np.zeros(3)
        degenerate = True
    else:
        direction = gap / centre_dist
        world = on_axis + cap.radius * direction
        degenerate = False
    local = F[:3, :3].T @ (world - F[:3, 3])
    return BodyPoint(cap.link, local, world, dist, direction, degenerate)


def capsule_axis_point(model: RobotModel, frames, obstacle) -> tuple[int, np.ndarray]:
    """Nearest point on any capsule *axis* to ``obstacle``; used as a fallback direction source."""
    best = None
    for cap, (a, b) in zip(model.capsules, capsule_points_world(model, frames)):
        p, _ = closest_point_on_segment(obstacle, a, b)
        d = float(np.linalg.norm(obstacle - p))
        if best is None or d < best[0]:
            best = (d, cap.link, p)
    return best[1], best[2]


# --- inverse kinematics ---------------------------------------------------------


def orientation_error(R_des: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Rotation vector taking ``R`` to ``R_des``, expressed in the world frame."""
    return Rotation.from_matrix(R_des @ R.T).as_rotvec()


def inverse_kinematics(model: RobotModel, target: np.ndarray, q0=None, position_only=False,
                       tol=1e-10, max_iter=500, damping=1e-3) -> np.ndarray:
    """Damped least-squares IK to a 4 x 4 target pose (or 3-vector if ``position_only``)."""
    q = model.home.copy() if q0 is None else model.check_q(q0).copy()
    target = np.asarray(target, dtype=float)
    for _ in range(max_iter):
        frames = forward_kinematics(model, q)
        T = frames[-1]
        J = jacobian(model, q, frames=frames)
        if position_only:
            p_t = target[:3, 3] if target.shape == (4, 4) else target
            err = p_t - T[:3, 3]
            J = J[:3]
        else:
            err = np.concatenate([target[:3, 3] - T[:3, 3], orientation_error(target[:3, :3], T[:3, :3])])
        if np.linalg.norm(err) < tol:
            return q
        dq = J.T @ np.linalg.solve(J @ J.T + damping * np.eye(J.shape[0]), err)
        q = np.clip(q + dq, model.joint_limits[:, 0], model.joint_limits[:, 1])
    raise ModelError("inverse kinematics did not converge")


def random_configuration(model: RobotModel, rng: np.random.Generator) -> np.ndarray:
    lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
    return rng.uniform(lo, hi)


__all__: Sequence[str] = [
    "BodyPoint", "Capsule", "Joint", "JointState", "ModelError", "RobotModel",
    "capsule_axis_point", "closest_point_on_robot", "closest_point_on_segment",
    "ee_pose", "forward_kinematics", "inverse_kinematics", "jacobian",
    "load_model", "model_from_dict", "orientation_error", "random_configuration",
    "transform",
]
