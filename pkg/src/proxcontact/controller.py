"""Velocity-level QP controller with proximity-informed scaling and restrictions.

Each cycle builds::

    minimize  1/2 |xd - J qd|^2 + mu/2 |qd|^2 + k/2 |qd_mid - qd|^2
    s.t.      d_i^T J_c,i qd <= xa(d_i)      for every nearby obstacle i

where ``xd`` is the main-task velocity after distance scaling and recovery.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Sequence

import numpy as np

from . import kinematics as kin
from .qp import ActiveSetSolver, QpProblem
from .sensing import ObstacleEstimate


class Mode(str, Enum):
    NOMINAL = "nominal"
    SCALED = "scaled"
    REACTING = "reacting"


@dataclass(frozen=True)
class ControllerGains:
    """Controller parameters (distances in m, velocities in m/s, ``l_max`` in cycles)."""

    d_max: float = 0.8
    d_min: float = 0.05
    l_max: int = 200
    V_max: float = 0.04
    d_repulse: float = 0.1
    d_crit: float = 0.1
    d_notice: float = 0.6
    beta: float = -10.0
    # regularisation weights and mid-joint horizon; tunable, see README
    mu: float = 0.01
    k: float = 0.1
    t_mid: float = 2.0
    max_constraints: int = 8

    def __post_init__(self):
        if not (self.mu > 0 or self.k > 0):
            raise ValueError("mu or k must be positive for a strictly convex QP")
        if not 0 < self.d_crit <= self.d_repulse < self.d_notice <= self.d_max:
            raise ValueError("need 0 < d_crit <= d_repulse < d_notice <= d_max")
        if self.l_max < 1 or self.V_max <= 0 or self.t_mid <= 0:
            raise ValueError("l_max >= 1, V_max > 0 and t_mid > 0 required")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def velocity_scale(d_lowest: float, d_max: float) -> float:
    """Fraction of the task velocity kept when the nearest obstacle is ``d_lowest`` away."""
    return float(np.clip(d_lowest / d_max, 0.0, 1.0))


def recovery_factor(scale: float, l_obs: int, l_max: int) -> float:
    """Linear ramp from ``scale`` back to 1 over ``l_max`` cycles."""
    if l_obs >= l_max:
        return 1.0
    return scale + (1.0 - scale) * l_obs / l_max


@dataclass
class RecoveryState:
    """Cycle counter of the velocity recovery ramp.

    ``l_obs == l_max`` means no recovery is in progress.
    """

    l_max: int = 200
    l_obs: int = 200
    scale: float = 1.0

    def update(self, d_lowest: float | None, d_max: float) -> float:
        if d_lowest is not None:
            self.scale = velocity_scale(d_lowest, d_max)
            self.l_obs = 0
            return self.scale
        if self.l_obs < self.l_max:
            self.l_obs += 1
        return recovery_factor(self.scale, self.l_obs, self.l_max)


def _sigmoid(v_max, beta, x):
    return v_max / (1.0 + np.exp(beta * (2.0 * x - 1.0)))


def approach_limit(d: float, gains: ControllerGains) -> float | None:
    """Largest allowed approach velocity toward an obstacle ``d`` metres away.

    Negative values demand a retreat. ``None`` means the restriction is
    dropped (obstacle beyond ``d_notice``).
    """
    g = gains
    if d >= g.d_notice:
        return None
    if d < g.d_repulse:
        return float(_sigmoid(g.V_max, g.beta, d / g.d_crit) - g.V_max)
    return float(_sigmoid(g.V_max, g.beta, (d - g.d_crit) / (g.d_notice - g.d_crit)))


def mid_joint_velocity(q, limits, t_mid: float) -> np.ndarray:
    """Joint velocities that reach the middle of the joint range in ``t_mid`` seconds."""
    limits = np.asarray(limits, dtype=float)
    return (limits.mean(axis=1) - np.asarray(q, dtype=float)) / t_mid


@dataclass(frozen=True)
class ControlCommand:
    q_dot: np.ndarray
    scaled_task: np.ndarray
    active_constraints: int
    mode: Mode
    scale_factor: float = 1.0
    slack_used: bool = False
    clamped: bool = False
    constraint_rows: tuple = ()


@dataclass(frozen=True)
class ObstacleRow:
    """One assembled movement restriction."""

    source_id: int
    distance: float
    direction: np.ndarray
    jacobian: np.ndarray
    limit: float

    @property
    def row(self) -> np.ndarray:
        return self.direction @ self.jacobian


@dataclass
class DirectionMemory:
    """Last non-degenerate obstacle direction per sensor, for touching obstacles."""

    last: dict = field(default_factory=dict)


def build_restrictions(model, q, obstacles: Sequence[ObstacleEstimate], gains: ControllerGains,
                       frames=None, memory: DirectionMemory | None = None) -> list[ObstacleRow]:
    """Approach-velocity rows for the nearest ``gains.max_constraints`` obstacles."""
    if frames is None:
        frames = kin.forward_kinematics(model, q)
    rows = []
    for est in obstacles:
        bp = kin.closest_point_on_robot(model, q, est.h, frames=frames)
        limit = approach_limit(bp.distance, gains)
        if limit is None:
            continue
        direction = bp.direction
        if bp.degenerate:
            direction = None if memory is None else memory.last.get(est.source_id)
            if direction is None:
                link, axis_pt = kin.capsule_axis_point(model, frames, est.h)
                gap = est.h - axis_pt
                norm = np.linalg.norm(gap)
                if norm == 0.0:
                    continue
                direction = gap / norm
                bp = kin.BodyPoint(link, frames[link][:3, :3].T @ (est.h - frames[link][:3, 3]),
                                   est.h.copy(), 0.0, direction, True)
        elif memory is not None:
            memory.last[est.source_id] = direction
        Jc = kin.jacobian(model, q, bp, frames=frames)
        rows.append(ObstacleRow(est.source_id, bp.distance, direction, Jc, limit))
    rows.sort(key=lambda r: (r.distance, r.source_id))
    return rows[: gains.max_constraints]


def assemble_qp(J, task_xd, q_dot_mid, gains: ControllerGains, rows: Sequence[ObstacleRow]) -> QpProblem:
    n = J.shape[1]
    H = J.T @ J + (gains.mu + gains.k) * np.eye(n)
    g = -(J.T @ task_xd + gains.k * q_dot_mid)
    if rows:
        A = np.array([r.row for r in rows])
        b = np.array([r.limit for r in rows])
    else:
        A, b = np.zeros((0, n)), np.zeros(0)
    return QpProblem(H, g, A, b)


class Controller:
    """Per-loop controller state: recovery ramp, QP warm start, direction memory."""

    def __init__(self, model: kin.RobotModel, gains: ControllerGains | None = None,
                 restrictions: bool = True, proximity: bool = True):
        self.model = model
        self.gains = gains or ControllerGains()
        self.restrictions = restrictions
        self.proximity = proximity
        self.recovery = RecoveryState(l_max=self.gains.l_max, l_obs=self.gains.l_max)
        self.solver = ActiveSetSolver()
        self.memory = DirectionMemory()

    def step(self, state: kin.JointState, task_xd, obstacles: Sequence[ObstacleEstimate],
             d_lowest: float | None, reaction=None, frames=None, feedback=None) -> ControlCommand:
        return compute_command(self.model, state, task_xd, obstacles if self.proximity else (),
                               self.gains, self.recovery,
                               d_lowest=d_lowest if self.proximity else None,
                               reaction=reaction, restrictions=self.restrictions,
                               solver=self.solver, memory=self.memory, frames=frames,
                               feedback=feedback)


def compute_command(model: kin.RobotModel, state: kin.JointState, task_xd,
                    obstacles: Sequence[ObstacleEstimate], gains: ControllerGains,
                    recovery: RecoveryState, d_lowest: float | None = None, reaction=None,
                    restrictions: bool = True, solver: ActiveSetSolver | None = None,
                    memory: DirectionMemory | None = None, frames=None, feedback=None) -> ControlCommand:
    """One control cycle.

    Parameters
    ----------
    task_xd : array, shape (3,) or (6,)
        Main-task end-effector velocity (linear, then angular if 6-D).
    obstacles : sequence of ObstacleEstimate
        Estimates already gated by ``gains.d_max``.
    d_lowest : float or None
        End-effector distance of the nearest gated obstacle. Computed from
        ``obstacles`` when omitted and ``obstacles`` is non-empty.
    reaction : array, shape (3,), optional
        Contact reaction velocity. When given it replaces the linear part of
        the task, unscaled, and the mode is ``reacting``.
    feedback : array, same shape as ``task_xd``, optional
        Tracking correction added after scaling. Distance scaling slows the
        feedforward (and a phase-driven reference with it); scaling the
        correction too would let the regularisation terms pull the end
        effector off the path. Its linear part is dropped while reacting.
    """
    q = model.check_q(state.q)
    if frames is None:
        frames = kin.forward_kinematics(model, q)
    task_xd = np.asarray(task_xd, dtype=float)
    J = kin.jacobian(model, q, frames=frames)[: task_xd.shape[0]]

    if d_lowest is None and obstacles:
        ee = frames[-1][:3, 3]
        d_lowest = min(float(np.linalg.norm(o.h - ee)) for o in obstacles)
    factor = recovery.update(d_lowest, gains.d_max)

    fb = np.zeros_like(task_xd) if feedback is None else np.asarray(feedback, dtype=float)
    if reaction is not None:
        xd = task_xd + fb
        xd[:3] = reaction
        mode = Mode.REACTING
    else:
        xd = factor * task_xd + fb
        mode = Mode.SCALED if factor < 1.0 else Mode.NOMINAL

    rows = build_restrictions(model, q, obstacles, gains, frames, memory) if restrictions else []
    qd_mid = mid_joint_velocity(q, model.joint_limits, gains.t_mid)
    problem = assemble_qp(J, xd, qd_mid, gains, rows)
    sol = (solver or ActiveSetSolver()).solve(problem)

    q_dot = sol.x
    peak = np.max(np.abs(q_dot) / model.velocity_limits)
    clamped = bool(peak > 1.0)
    if clamped:
        q_dot = q_dot / peak
    return ControlCommand(q_dot, xd, len(rows), mode, factor, sol.slack_used, clamped, tuple(rows))
