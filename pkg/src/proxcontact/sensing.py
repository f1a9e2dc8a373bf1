"""Proximity sensor units: pose, ray-cast readings, obstacle points and gating."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .kinematics import RobotModel, transform

MAX_RANGE = 4.0


class SensingError(ValueError):
    pass


@dataclass(frozen=True)
class SensorUnitPose:
    """World pose of one sensor unit; it measures along its local z axis."""

    id: int
    link_index: int
    position: np.ndarray
    rotation: np.ndarray

    @property
    def axis(self) -> np.ndarray:
        return self.rotation[:, 2]


@dataclass(frozen=True)
class SensorMount:
    """Fixed placement of a sensor unit on a link frame."""

    id: int
    link_index: int
    local: np.ndarray  # 4x4, relative to the link frame

    def pose(self, frames) -> SensorUnitPose:
        T = frames[self.link_index] @ self.local
        return SensorUnitPose(self.id, self.link_index, T[:3, 3].copy(), T[:3, :3].copy())


def mounts_from_specs(model: RobotModel, specs: Iterable[dict]) -> list[SensorMount]:
    """Parse sensor records; ``link: "ee"`` mounts relative to the tool frame."""
    mounts = []
    seen = set()
    for s in specs:
        sid = int(s["id"])
        if sid in seen:
            raise SensingError(f"duplicate sensor id {sid}")
        seen.add(sid)
        local = transform(s.get("xyz", (0, 0, 0)), s.get("rpy", (0, 0, 0)))
        if s["link"] == "ee":
            link, local = model.n - 1, model.tool @ local
        else:
            link = int(s["link"])
            if not 0 <= link < model.n:
                raise SensingError(f"sensor {sid} mounted on unknown link {link}")
        mounts.append(SensorMount(sid, link, local))
    return mounts


@dataclass(frozen=True)
class ObstacleEstimate:
    h: np.ndarray
    source_id: int
    d_obs: float
    stamp: float


def obstacle_position(pose: SensorUnitPose, d_obs: float) -> np.ndarray:
    """World point seen ``d_obs`` metres along the sensor's z axis."""
    if not 0.0 <= d_obs <= MAX_RANGE:
        raise SensingError(f"reading {d_obs} outside [0, {MAX_RANGE}] m")
    return pose.position + pose.rotation @ np.array([0.0, 0.0, d_obs])


# --- scene primitives -----------------------------------------------------------


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def ray_hit(self, origin, direction) -> float | None:
        oc = origin - self.center
        b = oc @ direction
        c = oc @ oc - self.radius ** 2
        if c <= 0.0:
            return 0.0
        disc = b * b - c
        if disc < 0.0:
            return None
        t = -b - np.sqrt(disc)
        return t if t >= 0.0 else None

    def contains(self, p) -> bool:
        return float(np.linalg.norm(p - self.center)) < self.radius

    def penetration(self, p):
        """Depth and outward normal of a point inside the sphere, else None."""
        gap = p - self.center
        r = float(np.linalg.norm(gap))
        if r >= self.radius:
            return None
        normal = gap / r if r > 0 else np.array([0.0, 0.0, 1.0])
        return self.radius - r, normal

    def distance_to_point(self, p) -> float:
        return float(np.linalg.norm(p - self.center)) - self.radius


@dataclass(frozen=True)
class Box:
    """Axis-aligned box between corners ``lo`` and ``hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def ray_hit(self, origin, direction) -> float | None:
        # slab method
        t_near, t_far = -np.inf, np.inf
        for k in range(3):
            if direction[k] == 0.0:
                if origin[k] < self.lo[k] or origin[k] > self.hi[k]:
                    return None
                continue
            t1 = (self.lo[k] - origin[k]) / direction[k]
            t2 = (self.hi[k] - origin[k]) / direction[k]
            if t1 > t2:
                t1, t2 = t2, t1
            t_near, t_far = max(t_near, t1), min(t_far, t2)
            if t_near > t_far:
                return None
        if t_far < 0.0:
            return None
        return max(t_near, 0.0)

    def contains(self, p) -> bool:
        return bool(np.all(p > self.lo) and np.all(p < self.hi))

    def penetration(self, p):
        if not self.contains(p):
            return None
        # exit through the nearest face
        depths = np.concatenate([p - self.lo, self.hi - p])
        k = int(np.argmin(depths))
        normal = np.zeros(3)
        normal[k % 3] = -1.0 if k < 3 else 1.0
        return float(depths[k]), normal

    def distance_to_point(self, p) -> float:
        outside = np.maximum(np.maximum(self.lo - p, p - self.hi), 0.0)
        d_out = float(np.linalg.norm(outside))
        if d_out > 0.0:
            return d_out
        return -float(np.min(np.concatenate([p - self.lo, self.hi - p])))


def simulate_proximity(pose: SensorUnitPose, scene: Sequence) -> float:
    """Time-of-flight reading: distance to the first primitive along the sensor ray.

    Returns :data:`MAX_RANGE` when nothing is hit within range. Rays are
    one-sided; a sensor inside a primitive reads 0.
    """
    best = MAX_RANGE
    d = pose.axis
    for prim in scene:
        t = prim.ray_hit(pose.position, d)
        if t is not None and t < best:
            best = t
    return float(best)


def read_sensors(poses: Sequence[SensorUnitPose], scene, stamp: float,
                 rng: np.random.Generator | None = None, noise: float = 0.005) -> list[ObstacleEstimate]:
    """One sensor tick: reading and back-projected obstacle point for every unit.

    With ``rng`` given, unsaturated readings get uniform noise of +/- ``noise``
    metres (clipped to the valid range).
    """
    out = []
    for pose in poses:
        d = simulate_proximity(pose, scene)
        if rng is not None and d < MAX_RANGE:
            d = float(np.clip(d + rng.uniform(-noise, noise), 0.0, MAX_RANGE))
        out.append(ObstacleEstimate(obstacle_position(pose, d), pose.id, d, stamp))
    return out


def gate_obstacles(estimates: Sequence[ObstacleEstimate], ee_position, d_max: float):
    """Keep estimates within ``d_max`` of the end effector.

    Returns
    -------
    kept : list of ObstacleEstimate
    d_lowest : float or None
        Smallest end-effector distance among the kept estimates.
    """
    if d_max <= 0:
        raise SensingError("d_max must be positive")
    ee = np.asarray(ee_position, dtype=float)
    kept, d_lowest = [], None
    for est in estimates:
        if est.d_obs >= MAX_RANGE:
            continue
        d = float(np.linalg.norm(est.h - ee))
        if d <= d_max:
            kept.append(est)
            d_lowest = d if d_lowest is None else min(d_lowest, d)
    return kept, d_lowest


class EstimateBuffer:
    """Latest-value snapshot shared between the sensor clock and the control loop.

    ``publish`` replaces the whole estimate set at once, so a reader always
    sees one complete tick.
    """

    def __init__(self):
        self._snapshot: tuple[ObstacleEstimate, ...] = ()

    def publish(self, estimates: Iterable[ObstacleEstimate]) -> None:
        self._snapshot = tuple(estimates)

    def latest(self) -> tuple[ObstacleEstimate, ...]:
        return self._snapshot
