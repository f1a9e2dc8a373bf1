"""Dynamic contact thresholds over a noisy external-force estimate.

A per-axis sliding window tracks the force signal with outlier-damped
insertion. Its mean anchors a contact band that widens with the window's
standard deviation and narrows on the side where an obstacle is close to
the end effector. A reading outside the band is a contact; the reaction is a
compliance-scaled velocity along the contact force, decayed linearly to
zero.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

SIGMA_FLOOR = 0.05


@dataclass(frozen=True)
class ThresholdParams:
    F_b: float = 10.0
    F_std: float = 3.0
    sigma_max: float = 3.0
    F_d: float = 4.0
    d_max: float = 0.8
    d_min: float = 0.05

    def __post_init__(self):
        if not self.F_b > self.F_d >= 0:
            raise ValueError("need F_b > F_d >= 0")
        if self.F_std < 0 or self.sigma_max <= 0 or self.d_min >= self.d_max:
            raise ValueError("need F_std >= 0, sigma_max > 0 and d_min < d_max")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def weighted_sample(x_raw, prev, mean, std, alpha: float, lam: float):
    """Value to append for raw sample ``x_raw``.

    Outliers (further than ``lam * std`` from ``mean``) are blended with the
    previously appended value ``prev``; everything else passes unchanged.
    """
    x_raw = np.asarray(x_raw, dtype=float)
    outlier = np.abs(x_raw - mean) > lam * std
    return np.where(outlier, alpha * x_raw + (1.0 - alpha) * prev, x_raw)


class ForceWindow:
    """Ring buffer of appended force samples, one column per axis.

    The first ``capacity`` samples are appended unweighted (bootstrap).
    """

    def __init__(self, capacity: int = 100, alpha: float = 0.1, lam: float = 0.75, axes: int = 3,
                 sigma_floor: float = SIGMA_FLOOR):
        if capacity < 1 or not 0 < alpha <= 1 or lam <= 0:
            raise ValueError("need capacity >= 1, 0 < alpha <= 1, lam > 0")
        self.capacity = capacity
        self.alpha = alpha
        self.lam = lam
        self.sigma_floor = sigma_floor
        self._buf = np.zeros((capacity, axes))
        self._count = 0
        self._head = 0
        self._last = np.zeros(axes)

    @property
    def full(self) -> bool:
        return self._count >= self.capacity

    @property
    def samples(self) -> np.ndarray:
        if self.full:
            return np.roll(self._buf, -self._head, axis=0)
        return self._buf[: self._count]

    @property
    def mean(self) -> np.ndarray:
        if self._count == 0:
            return np.zeros(self._buf.shape[1])
        return self.samples.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        if self._count == 0:
            return np.zeros(self._buf.shape[1])
        return self.samples.std(axis=0)

    @property
    def last(self) -> np.ndarray:
        return self._last.copy()

    def push(self, x_raw) -> np.ndarray:
        """Append one sample (weighted once bootstrapped); returns the appended value."""
        x_raw = np.asarray(x_raw, dtype=float).reshape(self._buf.shape[1])
        if self.full:
            gate = np.maximum(self.std, self.sigma_floor)
            value = weighted_sample(x_raw, self._last, self.mean, gate, self.alpha, self.lam)
        else:
            value = x_raw.copy()
        self._buf[self._head] = value
        self._head = (self._head + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)
        self._last = value
        return value


def f_sigma(sigma, params: ThresholdParams):
    """Band widening from signal spread, saturating at ``F_std``."""
    return np.minimum(np.asarray(sigma, dtype=float) / params.sigma_max * params.F_std, params.F_std)


def f_obs(d, params: ThresholdParams) -> float:
    """Band tightening for an obstacle ``d`` metres from the end effector (0 if absent)."""
    if d is None:
        return 0.0
    d = float(np.clip(d, params.d_min, params.d_max))
    return float(np.clip((params.d_max - d) / (params.d_max - params.d_min) * params.F_d, 0.0, params.F_d))


def side_distances(obstacles, ee_position, axes: int = 3):
    """Nearest obstacle distance on the positive and negative side of each axis.

    An obstacle counts for the positive side of axis ``k`` when its ``k``
    coordinate exceeds the end effector's. Returns two lists holding a
    distance or ``None``.
    """
    ee = np.asarray(ee_position, dtype=float)
    pos: list = [None] * axes
    neg: list = [None] * axes
    for h in obstacles:
        h = np.asarray(h, dtype=float)
        d = float(np.linalg.norm(h - ee))
        for k in range(axes):
            if h[k] > ee[k]:
                pos[k] = d if pos[k] is None else min(pos[k], d)
            elif h[k] < ee[k]:
                neg[k] = d if neg[k] is None else min(neg[k], d)
    return pos, neg


def thresholds(mean, std, params: ThresholdParams, obstacles=(), ee_position=None):
    """Upper and lower contact thresholds per axis.

    The upper limit drops for obstacles on the negative side of an axis and
    the lower limit rises for obstacles on the positive side.
    """
    mean = np.asarray(mean, dtype=float)
    spread = params.F_b + f_sigma(std, params)
    upper = mean + spread
    lower = mean - spread
    if len(obstacles):
        pos, neg = side_distances(obstacles, ee_position, mean.shape[0])
        upper = upper - np.array([f_obs(d, params) for d in neg])
        lower = lower + np.array([f_obs(d, params) for d in pos])
    return upper, lower


@dataclass(frozen=True)
class ContactEvent:
    axes: tuple  # (axis, +1 | -1) per breached axis
    F_ext: np.ndarray
    stamp: float


def detect(reading, upper, lower, mean, stamp: float = 0.0) -> ContactEvent | None:
    reading = np.asarray(reading, dtype=float)
    axes = []
    for k in range(reading.shape[0]):
        if reading[k] > upper[k]:
            axes.append((k, 1))
        elif reading[k] < lower[k]:
            axes.append((k, -1))
    if not axes:
        return None
    return ContactEvent(tuple(axes), reading - np.asarray(mean, dtype=float), stamp)


@dataclass
class ReactionState:
    """Reaction velocity and its decay counter ``l`` in ``[0, l_max]``."""

    x_dot_des: np.ndarray
    C: np.ndarray
    l_max: int = 200
    l: int = 0

    @property
    def done(self) -> bool:
        return self.l > self.l_max


def reaction(event: ContactEvent, C, l_max: int = 200) -> ReactionState:
    C = np.asarray(C, dtype=float)
    if C.ndim == 0:
        C = C * np.eye(3)
    return ReactionState(C @ event.F_ext, C, l_max)


def step_decay(state: ReactionState) -> np.ndarray:
    """Current reaction velocity; advances the counter. Exactly zero at ``l == l_max``."""
    if state.l >= state.l_max:
        out = np.zeros_like(state.x_dot_des)
    else:
        out = state.x_dot_des * (1.0 - state.l / state.l_max)
    state.l += 1
    return out


class ContactMonitor:
    """Window, thresholds, detection and reaction bundled for one control loop."""

    def __init__(self, params: ThresholdParams | None = None, capacity: int = 100, alpha: float = 0.1,
                 lam: float = 0.75, compliance=0.01, l_max: int = 200):
        self.params = params or ThresholdParams()
        self.window = ForceWindow(capacity, alpha, lam)
        self.compliance = compliance
        self.l_max = l_max
        self.active: ReactionState | None = None

    def update(self, reading, stamp: float, obstacles=(), ee_position=None):
        """Process one force sample.

        Returns a dict with the appended value, window stats, thresholds, the
        event (or ``None``) and the reaction velocity (or ``None`` when the
        main task is in charge).
        """
        mean, std = self.window.mean, self.window.std
        upper, lower = thresholds(mean, std, self.params, obstacles, ee_position)
        ready = self.window.full
        event = detect(reading, upper, lower, mean, stamp) if ready else None
        appended = self.window.push(reading)
        if event is not None:
            self.active = reaction(event, self.compliance, self.l_max)
        velocity = None
        if self.active is not None:
            velocity = step_decay(self.active)
            if self.active.done:
                self.active = None
        return {
            "appended": appended, "mean": mean, "std": std, "upper": upper, "lower": lower,
            "event": event, "reaction": velocity, "ready": ready,
        }
