import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from proxcontact import kinematics as kin
from proxcontact.sensing import (MAX_RANGE, Box, EstimateBuffer, ObstacleEstimate, SensingError,
                                 SensorUnitPose, Sphere, gate_obstacles, mounts_from_specs,
                                 obstacle_position, read_sensors, simulate_proximity)

coords = st.floats(-2, 2, allow_nan=False)
unit_quats = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1)


def pose(rotation=np.eye(3), position=(0, 0, 0), sid=0):
    return SensorUnitPose(sid, 0, np.asarray(position, float), np.asarray(rotation, float))


def est(h, sid=0, d=0.1):
    return ObstacleEstimate(np.asarray(h, float), sid, d, 0.0)


# --- obstacle position ------------------------------------------------------------


def test_axis_aligned_reading():
    np.testing.assert_allclose(obstacle_position(pose(), 0.5), [0, 0, 0.5], atol=0)


def test_zero_reading_is_sensor_origin():
    p = pose(Rotation.from_euler("xyz", [0.3, -0.2, 1.0]).as_matrix(), (0.1, 0.2, 0.3))
    assert np.array_equal(obstacle_position(p, 0.0), p.position)


def test_rotated_reading():
    # 90 degrees about x maps local z onto world -y
    R = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]], float)
    np.testing.assert_allclose(obstacle_position(pose(R, (0.1, 0.2, 0.3)), 0.4), [0.1, -0.2, 0.3], atol=1e-15)


def test_out_of_range_reading():
    with pytest.raises(SensingError):
        obstacle_position(pose(), -0.01)
    with pytest.raises(SensingError):
        obstacle_position(pose(), MAX_RANGE + 0.01)


@given(unit_quats, st.lists(coords, min_size=3, max_size=3), st.floats(0, MAX_RANGE))
def test_round_trip_distance(quat, position, d):
    p = pose(Rotation.from_quat(quat).as_matrix(), position)
    assert abs(np.linalg.norm(obstacle_position(p, d) - p.position) - d) < 1e-12


# --- ray casting --------------------------------------------------------------------


def test_empty_scene_saturates():
    assert simulate_proximity(pose(), []) == MAX_RANGE


def test_sphere_on_axis():
    assert simulate_proximity(pose(), [Sphere(np.array([0, 0, 2.0]), 0.5)]) == pytest.approx(1.5, abs=1e-12)


def test_sphere_behind_sensor():
    assert simulate_proximity(pose(), [Sphere(np.array([0, 0, -2.0]), 0.5)]) == MAX_RANGE


def test_box_hit_and_nearest_primitive():
    box = Box(np.array([-1, -1, 1.0]), np.array([1, 1, 2.0]))
    assert simulate_proximity(pose(), [box]) == pytest.approx(1.0)
    assert simulate_proximity(pose(), [box, Sphere(np.array([0, 0, 0.8]), 0.2)]) == pytest.approx(0.6)


def test_sensor_inside_primitive_reads_zero():
    assert simulate_proximity(pose(), [Sphere(np.zeros(3), 0.5)]) == 0.0


def test_beyond_range_saturates():
    assert simulate_proximity(pose(), [Sphere(np.array([0, 0, 5.0]), 0.5)]) == MAX_RANGE


@given(st.lists(coords, min_size=3, max_size=3), st.floats(0.05, 1.0), st.floats(0.0, 1.0))
def test_shrinking_never_decreases_reading(center, radius, shrink):
    c = np.array(center)
    big = simulate_proximity(pose(), [Sphere(c, radius)])
    small = simulate_proximity(pose(), [Sphere(c, radius * shrink)])
    assert small >= big - 1e-12


@given(st.lists(coords, min_size=3, max_size=3), st.lists(st.floats(0.05, 1), min_size=3, max_size=3),
       st.floats(0.0, 1.0))
def test_shrinking_box_never_decreases_reading(center, half, shrink):
    c, h = np.array(center), np.array(half)
    big = simulate_proximity(pose(), [Box(c - h, c + h)])
    small = simulate_proximity(pose(), [Box(c - shrink * h, c + shrink * h)])
    assert small >= big - 1e-12


def test_noisy_readings_are_seeded_and_bounded():
    poses = [pose(sid=i) for i in range(3)]
    scene = [Sphere(np.array([0, 0, 1.0]), 0.2)]
    a = read_sensors(poses, scene, 0.0, np.random.default_rng(3))
    b = read_sensors(poses, scene, 0.0, np.random.default_rng(3))
    assert [e.d_obs for e in a] == [e.d_obs for e in b]
    assert all(abs(e.d_obs - 0.8) <= 0.005 for e in a)
    assert read_sensors(poses, [], 0.0, np.random.default_rng(3))[0].d_obs == MAX_RANGE


# --- gating ----------------------------------------------------------------------------


def test_gate_keeps_near():
    kept, d = gate_obstacles([est([0.4, 0, 0])], np.zeros(3), 0.8)
    assert len(kept) == 1 and d == pytest.approx(0.4)


def test_gate_drops_far():
    kept, d = gate_obstacles([est([0.81, 0, 0])], np.zeros(3), 0.8)
    assert kept == [] and d is None


def test_gate_minimum():
    kept, d = gate_obstacles([est([0, 0.6, 0], 0), est([0.3, 0, 0], 1)], np.zeros(3), 0.8)
    assert len(kept) == 2 and d == pytest.approx(0.3)


def test_gate_skips_saturated_readings():
    kept, d = gate_obstacles([est([0.1, 0, 0], d=MAX_RANGE)], np.zeros(3), 0.8)
    assert kept == [] and d is None


@given(st.lists(st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3), max_size=12),
       st.floats(0.05, 2.0))
def test_gate_subset_and_brute_force_minimum(points, d_max):
    ests = [est(p, i) for i, p in enumerate(points)]
    kept, d = gate_obstacles(ests, np.zeros(3), d_max)
    assert all(any(k is e for e in ests) for k in kept)
    dists = [np.linalg.norm(p) for p in points if np.linalg.norm(p) <= d_max]
    if dists:
        assert d == min(dists)
    else:
        assert d is None


# --- mounts and snapshot -------------------------------------------------------------------


def test_bundled_mounts(arm):
    mounts = mounts_from_specs(arm, arm.sensor_specs)
    assert len({m.id for m in mounts}) == len(mounts)
    frames = kin.forward_kinematics(arm, arm.home)
    for m in mounts:
        R = m.pose(frames).rotation
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9


def test_duplicate_and_unknown_mounts(arm):
    with pytest.raises(SensingError):
        mounts_from_specs(arm, [{"id": 0, "link": 1}, {"id": 0, "link": 2}])
    with pytest.raises(SensingError):
        mounts_from_specs(arm, [{"id": 0, "link": 9}])


def test_snapshot_is_complete_and_immutable():
    buf = EstimateBuffer()
    assert buf.latest() == ()
    tick = [est([0, 0, 1], 0), est([0, 0, 2], 1)]
    buf.publish(tick)
    snap = buf.latest()
    tick.append(est([0, 0, 3], 2))
    assert len(snap) == 2 and len(buf.latest()) == 2
