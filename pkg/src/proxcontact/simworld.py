"""Deterministic scenario simulator.

The loop runs at 100 Hz: forward kinematics, sensor tick every other cycle
(50 Hz, latest-value snapshot in between), gating, synthetic force estimate,
contact monitor, QP command and explicit Euler integration of the joint
angles. Every quantity ends up as a column of a :class:`Trace`.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import kinematics as kin
from .contact import ContactMonitor, ThresholdParams
from .controller import Controller, ControllerGains
from .sensing import (Box, EstimateBuffer, Sphere, gate_obstacles, mounts_from_specs,
                      read_sensors)

SCHEMA_VERSION = 1
DT = 0.01
SENSOR_DIVIDER = 2
MAX_TASK_SPEED = 0.3


class ScenarioError(ValueError):
    pass


# --- tasks ---------------------------------------------------------------------


@dataclass(frozen=True)
class CircleTask:
    """Circle traversed at constant speed; ``plane`` names the two world axes it spans."""

    center: tuple
    radius: float
    speed: float = 0.3
    plane: str = "yz"
    start_angle: float = 0.0
    direction: int = 1

    def _axes(self):
        return ["xyz".index(c) for c in self.plane]

    def reference(self, s: float):
        """Position and unit tangent after travelling arc length ``s``."""
        th = self.start_angle + self.direction * s / self.radius
        i, j = self._axes()
        p = np.array(self.center, dtype=float)
        p[i] += self.radius * np.cos(th)
        p[j] += self.radius * np.sin(th)
        t = np.zeros(3)
        t[i] = -np.sin(th) * self.direction
        t[j] = np.cos(th) * self.direction
        return p, t

    def distance(self, p) -> float:
        """Distance from ``p`` to the circle as a curve."""
        i, j = self._axes()
        k = 3 - i - j
        c = np.asarray(self.center, dtype=float)
        rel = np.asarray(p, dtype=float) - c
        radial = np.hypot(rel[i], rel[j]) - self.radius
        return float(np.hypot(radial, rel[k]))

    def to_dict(self):
        return {"type": "circle", **asdict(self), "center": list(self.center)}


@dataclass(frozen=True)
class LineTask:
    start: tuple
    end: tuple
    speed: float = 0.3

    def reference(self, s: float):
        a, b = np.asarray(self.start, float), np.asarray(self.end, float)
        length = float(np.linalg.norm(b - a))
        t = (b - a) / length
        if s >= length:
            return b, np.zeros(3)
        return a + s * t, t

    def distance(self, p) -> float:
        a, b = np.asarray(self.start, float), np.asarray(self.end, float)
        q, _ = kin.closest_point_on_segment(np.asarray(p, float), a, b)
        return float(np.linalg.norm(np.asarray(p) - q))

    def to_dict(self):
        return {"type": "line", "start": list(self.start), "end": list(self.end), "speed": self.speed}


def task_from_dict(d: dict):
    kind = d.get("type")
    if kind == "circle":
        return CircleTask(tuple(d["center"]), float(d["radius"]), float(d.get("speed", 0.3)),
                          d.get("plane", "yz"), float(d.get("start_angle", 0.0)), int(d.get("direction", 1)))
    if kind == "line":
        return LineTask(tuple(d["start"]), tuple(d["end"]), float(d.get("speed", 0.3)))
    raise ScenarioError(f"unknown task type {kind!r}")


# --- scripted obstacles and pushes -------------------------------------------------


@dataclass(frozen=True)
class ScriptedObstacle:
    """Sphere or box whose reference point follows piecewise-linear waypoints.

    ``waypoints`` rows are ``(t, x, y, z)``; the position is held before the
    first and after the last. With ``anchor="ee"`` positions are offsets from
    the current end-effector position. Outside ``active`` the obstacle is
    absent from the scene.
    """

    kind: str
    waypoints: tuple
    radius: float = 0.05
    half_extent: tuple = (0.0, 0.0, 0.0)
    anchor: str = "world"
    active: tuple | None = None

    def position(self, t: float, ee=None) -> np.ndarray:
        w = np.asarray(self.waypoints, dtype=float).reshape(-1, 4)
        p = np.array([np.interp(t, w[:, 0], w[:, k]) for k in (1, 2, 3)])
        if self.anchor == "ee":
            p = p + ee
        return p

    def at(self, t: float, ee=None):
        if self.active is not None and not self.active[0] <= t < self.active[1]:
            return None
        c = self.position(t, ee)
        if self.kind == "sphere":
            return Sphere(c, self.radius)
        h = np.asarray(self.half_extent, dtype=float)
        return Box(c - h, c + h)

    def to_dict(self):
        d = {"type": self.kind, "waypoints": [list(w) for w in self.waypoints], "anchor": self.anchor}
        if self.kind == "sphere":
            d["radius"] = self.radius
        else:
            d["half_extent"] = list(self.half_extent)
        if self.active is not None:
            d["active"] = list(self.active)
        return d


def obstacle_from_dict(d: dict) -> ScriptedObstacle:
    kind = d.get("type")
    if kind not in ("sphere", "box"):
        raise ScenarioError(f"unknown obstacle type {kind!r}")
    if "waypoints" in d:
        wps = tuple(tuple(float(v) for v in w) for w in d["waypoints"])
    elif kind == "box" and "lo" in d:
        lo, hi = np.asarray(d["lo"], float), np.asarray(d["hi"], float)
        c = [float(v) for v in (lo + hi) / 2]
        return ScriptedObstacle("box", ((0.0, *c),), half_extent=tuple(float(v) for v in (hi - lo) / 2),
                                active=tuple(d["active"]) if "active" in d else None)
    else:
        wps = ((0.0, *(float(v) for v in d["center"])),)
    return ScriptedObstacle(kind, wps, float(d.get("radius", 0.05)),
                            tuple(float(v) for v in d.get("half_extent", (0, 0, 0))),
                            d.get("anchor", "world"), tuple(d["active"]) if "active" in d else None)


@dataclass(frozen=True)
class Push:
    direction: tuple
    magnitude: float
    start: float
    duration: float

    def force(self, t: float) -> np.ndarray:
        if self.start <= t < self.start + self.duration:
            d = np.asarray(self.direction, dtype=float)
            return self.magnitude * d / np.linalg.norm(d)
        return np.zeros(3)


@dataclass(frozen=True)
class PlantParams:
    k_c: float = 2000.0
    sigma0: float = 0.3
    sigma_v: float = 3.0


@dataclass(frozen=True)
class Tracking:
    """Closed-loop reference tracking gains of the main task."""

    kp: float = 60.0
    ko: float = 10.0
    max_correction: float = 0.5
    min_correction: float = 0.16


# --- scenario -----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    task: object
    duration: float
    model: str = "redundant7"
    seed: int = 0
    obstacles: tuple = ()
    pushes: tuple = ()
    orientation: tuple = ((1.0, 0.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, -1.0))
    plant: PlantParams = field(default_factory=PlantParams)
    tracking: Tracking = field(default_factory=Tracking)
    restrictions: bool = True
    sensors: tuple | None = None
    sensor_noise: bool = False
    description: str = ""

    def __post_init__(self):
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        if self.task.speed > MAX_TASK_SPEED + 1e-12:
            raise ScenarioError(f"task speed exceeds {MAX_TASK_SPEED} m/s")

    def to_dict(self) -> dict:
        d = {
            "schema": SCHEMA_VERSION, "name": self.name, "description": self.description,
            "model": self.model, "duration": self.duration, "seed": self.seed,
            "task": self.task.to_dict(),
            "orientation": [list(r) for r in self.orientation],
            "obstacles": [o.to_dict() for o in self.obstacles],
            "pushes": [asdict(p) | {"direction": list(p.direction)} for p in self.pushes],
            "plant": asdict(self.plant), "tracking": asdict(self.tracking),
            "restrictions": self.restrictions, "sensor_noise": self.sensor_noise,
        }
        if self.sensors is not None:
            d["sensors"] = [dict(s) for s in self.sensors]
        return d


def scenario_from_dict(d: dict) -> Scenario:
    if d.get("schema") != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario schema {d.get('schema')!r}")
    try:
        return Scenario(
            name=d["name"], task=task_from_dict(d["task"]), duration=float(d["duration"]),
            model=d.get("model", "redundant7"), seed=int(d.get("seed", 0)),
            obstacles=tuple(obstacle_from_dict(o) for o in d.get("obstacles", ())),
            pushes=tuple(Push(tuple(p["direction"]), float(p["magnitude"]), float(p["start"]),
                              float(p["duration"])) for p in d.get("pushes", ())),
            orientation=tuple(tuple(float(v) for v in r) for r in
                              d.get("orientation", ((1, 0, 0), (0, -1, 0), (0, 0, -1)))),
            plant=PlantParams(**d.get("plant", {})), tracking=Tracking(**d.get("tracking", {})),
            restrictions=bool(d.get("restrictions", True)),
            sensors=None if "sensors" not in d else tuple(d["sensors"]),
            sensor_noise=bool(d.get("sensor_noise", False)), description=d.get("description", ""),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def load_scenario(name_or_path) -> Scenario:
    """Bundled scenario by name (e.g. ``"static_wall_circle"``) or a JSON file path."""
    path = Path(name_or_path)
    if path.exists():
        text = path.read_text()
    else:
        ref = resources.files("proxcontact") / "data" / "scenarios" / f"{Path(str(name_or_path)).stem}.json"
        if not ref.is_file():
            raise ScenarioError(f"no scenario {name_or_path!r}")
        text = ref.read_text()
    return scenario_from_dict(json.loads(text))


def bundled_scenarios() -> list[str]:
    root = resources.files("proxcontact") / "data" / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


# --- plant ----------------------------------------------------------------------


def synth_external_force(ee_position, ee_speed: float, scene: Sequence, pushes: Sequence[Push], t: float,
                         rng: np.random.Generator | None, plant: PlantParams = PlantParams()):
    """Synthetic external force estimate at the end effector.

    Spring contact against every primitive the end-effector point is inside,
    plus active push pulses, plus Gaussian noise whose spread grows with
    end-effector speed. Returns ``(force, in_contact)``.
    """
    p = np.asarray(ee_position, dtype=float)
    F = np.zeros(3)
    touching = False
    for prim in scene:
        pen = prim.penetration(p)
        if pen is not None:
            depth, normal = pen
            F += plant.k_c * depth * normal
            touching = True
    for push in pushes:
        f = push.force(t)
        if np.any(f):
            F += f
            touching = True
    if rng is not None:
        F += rng.normal(0.0, plant.sigma0 + plant.sigma_v * ee_speed, 3)
    return F, touching


def _segment_box_distance(a, b, box: Box, samples: int = 257) -> float:
    """Signed distance between segment ``ab`` and an axis-aligned box.

    Outside, the squared distance is a quadratic in the segment parameter
    between the points where a coordinate crosses a slab face, so each
    piece is minimised in closed form. A penetrating segment falls back to a
    dense sample of the (negative) interior distance.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    d = b - a
    lo, hi = box.lo, box.hi
    cuts = [0.0, 1.0]
    for k in range(3):
        if d[k] != 0.0:
            for v in (lo[k], hi[k]):
                t = (v - a[k]) / d[k]
                if 0.0 < t < 1.0:
                    cuts.append(t)
    cuts.sort()
    best = np.inf
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        pm = a + 0.5 * (t0 + t1) * d
        # per axis: deviation c + e t outside the slab, 0 inside
        c, e = np.zeros(3), np.zeros(3)
        below, above = pm < lo, pm > hi
        c[below], e[below] = lo[below] - a[below], -d[below]
        c[above], e[above] = a[above] - hi[above], d[above]
        ee = e @ e
        t = t0 if ee == 0.0 else float(np.clip(-(c @ e) / ee, t0, t1))
        dev = c + e * t
        best = min(best, float(dev @ dev))
    if best > 0.0:
        return float(np.sqrt(best))
    ts = np.linspace(0.0, 1.0, samples)
    depth = np.minimum(a + ts[:, None] * d - lo, hi - (a + ts[:, None] * d)).min(axis=1)
    i = int(np.argmax(depth))
    # signed distance is convex along the segment: refine inside the bracket
    l, r = ts[max(i - 1, 0)], ts[min(i + 1, samples - 1)]
    for _ in range(40):
        m1, m2 = l + (r - l) / 3, r - (r - l) / 3
        if box.distance_to_point(a + m1 * d) <= box.distance_to_point(a + m2 * d):
            r = m2
        else:
            l = m1
    return min(float(-depth[i]), box.distance_to_point(a + 0.5 * (l + r) * d))


def robot_obstacle_distance(model: kin.RobotModel, frames, scene: Sequence) -> float:
    """Smallest surface-to-surface distance between robot capsules and the scene (inf if empty)."""
    best = np.inf
    for cap, (a, b) in zip(model.capsules, kin.capsule_points_world(model, frames)):
        for prim in scene:
            if isinstance(prim, Sphere):
                q, _ = kin.closest_point_on_segment(prim.center, a, b)
                d = float(np.linalg.norm(prim.center - q)) - prim.radius
            else:
                d = _segment_box_distance(a, b, prim)
            best = min(best, d - cap.radius)
    return best


# --- trace ------------------------------------------------------------------------


@dataclass
class Trace:
    """Column store of one run; ``columns`` maps name to a 1-D array."""

    columns: dict
    metadata: dict

    def __getitem__(self, name):
        return self.columns[name]

    def __len__(self):
        return len(self.columns["t"])

    def vector(self, prefix: str, size: int = 3) -> np.ndarray:
        suffixes = "xyz" if size == 3 else [str(i) for i in range(size)]
        return np.column_stack([self.columns[f"{prefix}_{s}"] for s in suffixes])

    def to_csv(self) -> str:
        names = list(self.columns)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        cols = [self.columns[n] for n in names]
        for i in range(len(self)):
            writer.writerow([c[i] if c.dtype.kind in "UO" else "%.9g" % c[i] for c in cols])
        return buf.getvalue()

    def write(self, out_dir, stem: str | None = None) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.metadata["scenario"]
        csv_path, meta_path = out / f"{stem}.csv", out / f"{stem}.json"
        csv_path.write_text(self.to_csv())
        meta_path.write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")
        return csv_path, meta_path

    @classmethod
    def read_csv(cls, path, metadata=None) -> "Trace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        names, body = rows[0], rows[1:]
        cols = {}
        for j, n in enumerate(names):
            vals = [r[j] for r in body]
            try:
                cols[n] = np.array([float(v) for v in vals])
            except ValueError:
                cols[n] = np.array(vals)
        return cls(cols, metadata or {})


def summarize(trace: Trace) -> dict:
    """Run summary. Peak force is the largest raw force norm over rows flagged as contact."""
    F = trace.vector("F_raw")
    flag = trace["contact_flag"] > 0
    F_ext = trace.vector("F_ext")
    return {
        "peak_force": float(np.linalg.norm(F[flag], axis=1).max()) if flag.any() else 0.0,
        "peak_F_ext": float(np.linalg.norm(F_ext[flag], axis=1).max()) if flag.any() else 0.0,
        "min_obstacle_distance": float(np.min(trace["min_obstacle_distance"])),
        "contact_count": int(np.sum(np.diff(np.concatenate([[0], flag.astype(int)])) == 1)),
        "contact_rows": int(flag.sum()),
        "slack_events": int(np.sum(trace["slack_used"])),
    }


# --- runner ---------------------------------------------------------------------------


def run_scenario(scenario: Scenario, proximity: bool = True, restrictions: bool = True,
                 gains: ControllerGains | None = None, params: ThresholdParams | None = None,
                 compliance: float = 0.01, window: int = 100, alpha: float = 0.1, lam: float = 0.75,
                 reaction_cycles: int | None = None, seed: int | None = None) -> Trace:
    """Simulate ``scenario`` and return its trace.

    ``proximity=False`` runs the robot uninformed: sensor data is recorded but
    neither scales the task, restricts motion nor tightens the contact band.
    Movement restrictions apply only when both ``restrictions`` and the
    scenario allow them.
    """
    gains = gains or ControllerGains()
    params = params or ThresholdParams(d_max=gains.d_max, d_min=gains.d_min)
    seed = scenario.seed if seed is None else seed
    model = kin.load_model(scenario.model)
    mounts = mounts_from_specs(model, scenario.sensors if scenario.sensors is not None else model.sensor_specs)
    task = scenario.task
    track = scenario.tracking
    R_des = np.asarray(scenario.orientation, dtype=float)

    force_rng = np.random.default_rng([seed, 0])
    sensor_rng = np.random.default_rng([seed, 1]) if scenario.sensor_noise else None

    p0, _ = task.reference(0.0)
    T0 = np.eye(4)
    T0[:3, :3], T0[:3, 3] = R_des, p0
    q = kin.inverse_kinematics(model, T0, model.home)
    q_dot = np.zeros(model.n)

    use_restrictions = restrictions and scenario.restrictions and proximity
    ctrl = Controller(model, gains, restrictions=use_restrictions, proximity=proximity)
    monitor = ContactMonitor(params, capacity=window, alpha=alpha, lam=lam, compliance=compliance,
                             l_max=reaction_cycles or gains.l_max)
    snapshot = EstimateBuffer()

    steps = int(round(scenario.duration / DT))
    ids = [m.id for m in mounts]
    rows: dict[str, list] = {}

    def put(name, value):
        rows.setdefault(name, []).append(value)

    s = 0.0
    ee_speed = 0.0
    factor = 1.0
    for k in range(steps):
        t = k * DT
        frames = kin.forward_kinematics(model, q)
        T_ee = frames[-1]
        ee = T_ee[:3, 3]
        scene = [o for o in (ob.at(t, ee) for ob in scenario.obstacles) if o is not None]

        if k % SENSOR_DIVIDER == 0:
            poses = [m.pose(frames) for m in mounts]
            snapshot.publish(read_sensors(poses, scene, t, sensor_rng))
        estimates = snapshot.latest()
        kept, d_lowest = gate_obstacles(estimates, ee, gains.d_max)

        F_raw, touching = synth_external_force(ee, ee_speed, scene, scenario.pushes, t, force_rng, scenario.plant)
        informed = [e.h for e in kept] if proximity else []
        c = monitor.update(F_raw, t, informed, ee)
        reacting = c["reaction"] is not None

        p_ref, tangent = task.reference(s)
        # the correction bypasses distance scaling, so its cap follows the
        # previous cycle's factor to keep re-approaches slow near obstacles
        corr = track.kp * (p_ref - ee)
        cap = max(track.max_correction * factor, track.min_correction)
        norm = np.linalg.norm(corr)
        if norm > cap:
            corr *= cap / norm
        task_xd = np.concatenate([task.speed * tangent, np.zeros(3)])
        feedback = np.concatenate([corr, track.ko * kin.orientation_error(R_des, T_ee[:3, :3])])

        cmd = ctrl.step(kin.JointState(q, q_dot), task_xd, kept, d_lowest,
                        reaction=c["reaction"], frames=frames, feedback=feedback)
        q_dot = cmd.q_dot
        factor = cmd.scale_factor
        J = kin.jacobian(model, q, frames=frames)
        ee_speed = float(np.linalg.norm(J[:3] @ q_dot))
        if not reacting:
            s += cmd.scale_factor * task.speed * DT

        # row
        put("t", t)
        for i in range(model.n):
            put(f"q_{i}", q[i])
        for i in range(model.n):
            put(f"q_dot_cmd_{i}", q_dot[i])
        for a, v in zip("xyz", ee):
            put(f"ee_{a}", v)
        for a, v in zip("xyz", p_ref):
            put(f"ref_{a}", v)
        put("path_error", task.distance(ee))
        put("scale_factor", cmd.scale_factor)
        put("n_constraints", cmd.active_constraints)
        put("mode", cmd.mode.value)
        put("slack_used", int(cmd.slack_used))
        put("n_obstacles", len(kept) if proximity else 0)
        put("d_lowest", np.nan if d_lowest is None else d_lowest)
        put("min_obstacle_distance", robot_obstacle_distance(model, frames, scene))
        put("in_contact", int(touching))
        put("window_ready", int(c["ready"]))
        for prefix, vec in (("F_raw", F_raw), ("F_appended", c["appended"]), ("mu", c["mean"]),
                            ("sigma", c["std"]), ("T_u", c["upper"]), ("T_l", c["lower"])):
            for a, v in zip("xyz", vec):
                put(f"{prefix}_{a}", v)
        put("contact_flag", int(c["event"] is not None))
        F_ext = c["event"].F_ext if c["event"] is not None else np.zeros(3)
        react = c["reaction"] if reacting else np.zeros(3)
        for a, v in zip("xyz", F_ext):
            put(f"F_ext_{a}", v)
        for a, v in zip("xyz", react):
            put(f"reaction_{a}", v)
        by_id = {e.source_id: e for e in estimates}
        put("sensor_stamp", estimates[0].stamp if estimates else np.nan)
        for sid in ids:
            e = by_id.get(sid)
            put(f"su{sid}_d_obs", e.d_obs if e else np.nan)
            for a, v in zip("xyz", e.h if e else (np.nan,) * 3):
                put(f"su{sid}_h{a}", v)

        q = q + q_dot * DT

    columns = {}
    for name, vals in rows.items():
        columns[name] = np.array(vals) if name != "mode" else np.array(vals, dtype="U8")
    metadata = {
        "scenario": scenario.name,
        "seed": seed,
        "proximity": proximity,
        "restrictions": use_restrictions,
        "code_version": __version__,
        "dt": DT,
        "sensor_period": DT * SENSOR_DIVIDER,
        "gains": asdict(gains),
        "thresholds": asdict(params),
        "contact": {"compliance": compliance, "window": window, "alpha": alpha, "lambda": lam,
                    "reaction_cycles": reaction_cycles or gains.l_max},
        "plant": asdict(scenario.plant),
        "tracking": asdict(scenario.tracking),
        "scenario_definition": scenario.to_dict(),
    }
    return Trace(columns, metadata)


__all__ = [
    "CircleTask", "LineTask", "PlantParams", "Push", "Scenario", "ScenarioError", "ScriptedObstacle",
    "Trace", "Tracking", "bundled_scenarios", "load_scenario", "robot_obstacle_distance", "run_scenario",
    "scenario_from_dict", "summarize", "synth_external_force",
]
