import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import kkt_enumeration
from proxcontact import kinematics as kin
from proxcontact.controller import (ControllerGains, DirectionMemory, Mode, RecoveryState, Controller,
                                    approach_limit, assemble_qp, build_restrictions, compute_command,
                                    mid_joint_velocity, recovery_factor, velocity_scale)
from proxcontact.sensing import ObstacleEstimate

G = ControllerGains()


def state(model, q=None):
    q = model.home.copy() if q is None else np.asarray(q, float)
    return kin.JointState(q, np.zeros(model.n))


def obstacle(h, sid=0):
    return ObstacleEstimate(np.asarray(h, float), sid, 0.1, 0.0)


# --- scaling and recovery ------------------------------------------------------------


@pytest.mark.parametrize("d, expected", [(0.4, 0.5), (0.8, 1.0), (0.0, 0.0), (1.5, 1.0)])
def test_velocity_scale(d, expected):
    assert velocity_scale(d, 0.8) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("scale, l_obs, expected", [(0.3, 200, 1.0), (0.3, 0, 0.3), (0.5, 100, 0.75)])
def test_recovery_factor(scale, l_obs, expected):
    assert recovery_factor(scale, l_obs, 200) == pytest.approx(expected, abs=1e-15)


@given(st.floats(0, 1), st.integers(0, 250))
def test_recovery_factor_bounds(scale, l_obs):
    f = recovery_factor(scale, l_obs, 200)
    assert scale - 1e-15 <= f <= 1.0


def test_recovery_state_restores_in_exactly_l_max_cycles():
    rec = RecoveryState()
    assert rec.update(0.4, 0.8) == 0.5
    factors = [rec.update(None, 0.8) for _ in range(201)]
    assert all(f < 1.0 for f in factors[:199])
    assert factors[199] == 1.0 and factors[200] == 1.0
    assert np.all(np.diff(factors) >= 0)


def test_new_obstacle_resets_recovery():
    rec = RecoveryState()
    rec.update(0.4, 0.8)
    for _ in range(50):
        rec.update(None, 0.8)
    assert rec.update(0.6, 0.8) == pytest.approx(0.75)
    assert rec.l_obs == 0


# --- approach limits --------------------------------------------------------------------


def test_approach_limit_midpoint():
    assert approach_limit(0.35, G) == pytest.approx(0.02, abs=1e-5)


def test_approach_limit_contact():
    v = approach_limit(0.0, G)
    assert -0.04 <= v <= -0.0399
    assert v == pytest.approx(-0.04, abs=1e-5)


@pytest.mark.parametrize("d", [0.6, 0.7, 3.0])
def test_approach_limit_dropped(d):
    assert approach_limit(d, G) is None


@given(st.floats(0, 0.6, exclude_max=True), st.floats(0, 0.6, exclude_max=True))
def test_approach_limit_monotone_within_branch(a, b):
    a, b = sorted((a, b))
    if (a < G.d_repulse) == (b < G.d_repulse):
        assert approach_limit(a, G) <= approach_limit(b, G) + 1e-15


@given(st.floats(0, 0.6, exclude_max=True))
def test_approach_limit_continuous_off_branch_point(d):
    eps = 1e-7
    if abs(d - G.d_repulse) > 2 * eps and d + eps < G.d_notice:
        assert abs(approach_limit(d + eps, G) - approach_limit(d, G)) < 1e-6


def test_approach_limit_bounds():
    ds = np.linspace(0, 0.599, 500)
    v = np.array([approach_limit(d, G) for d in ds])
    assert np.all(v >= -G.V_max) and np.all(v <= G.V_max)


# --- mid-joint term ----------------------------------------------------------------------


def test_mid_joint_examples():
    limits = np.array([[-1.0, 1.0], [0.0, 2.0]])
    np.testing.assert_array_equal(mid_joint_velocity([0.0, 1.0], limits, 2.0), [0.0, 0.0])
    np.testing.assert_allclose(mid_joint_velocity([1.0, 1.0], limits, 2.0), [-0.5, 0.0])
    assert mid_joint_velocity([-0.5, 1.0], limits, 2.0)[0] > 0


# --- gains -----------------------------------------------------------------------------------


def test_gain_invariants():
    with pytest.raises(ValueError):
        ControllerGains(mu=0.0, k=0.0)
    with pytest.raises(ValueError):
        ControllerGains(d_crit=0.2, d_repulse=0.1)
    with pytest.raises(ValueError):
        ControllerGains(l_max=0)
    ControllerGains(mu=0.0, k=0.1)


# --- command -----------------------------------------------------------------------------------


def test_damped_least_squares_limit(arm):
    gains = ControllerGains(k=0.0, mu=0.01)
    xd = np.array([0.05, -0.02, 0.03])
    cmd = compute_command(arm, state(arm), xd, [], gains, RecoveryState())
    J = kin.jacobian(arm, arm.home)[:3]
    expected = np.linalg.solve(J.T @ J + 0.01 * np.eye(7), J.T @ xd)
    assert not cmd.clamped
    np.testing.assert_allclose(cmd.q_dot, expected, atol=1e-9)
    assert cmd.mode is Mode.NOMINAL


def test_obstacle_on_path_constraint_holds(arm):
    ee = kin.ee_pose(arm, arm.home)[:3, 3]
    xd = np.array([0.0, 0.1, 0.0])
    obs = [obstacle(ee + np.array([0.0, 0.08, 0.0]))]
    cmd = compute_command(arm, state(arm), xd, obs, G, RecoveryState())
    assert cmd.active_constraints == 1
    row = cmd.constraint_rows[0]
    assert row.distance < G.d_crit
    assert not cmd.slack_used and not cmd.clamped
    assert row.row @ cmd.q_dot <= row.limit + 1e-8
    # the task asks to move into the obstacle; the command backs away instead
    assert row.limit < 0 and row.row @ cmd.q_dot < 0


@given(st.integers(0, 2**32 - 1))
def test_restrictions_hold_for_random_obstacles(seed):
    model = kin.load_model("redundant7")
    rng = np.random.default_rng(seed)
    q = np.clip(model.home + rng.normal(0, 0.3, 7), model.joint_limits[:, 0], model.joint_limits[:, 1])
    ee = kin.ee_pose(model, q)[:3, 3]
    obs = [obstacle(ee + rng.uniform(-0.4, 0.4, 3), i) for i in range(3)]
    cmd = compute_command(model, state(model, q), rng.normal(0, 0.1, 3), obs, G, RecoveryState())
    if cmd.slack_used:
        return
    for r in cmd.constraint_rows:
        # clamping shrinks the solution uniformly, which keeps rows with a
        # non-negative limit satisfied but can weaken a demanded retreat
        if cmd.clamped and r.limit < 0:
            continue
        assert r.row @ cmd.q_dot <= r.limit + 1e-8


def test_two_obstacle_qp_matches_oracle(arm):
    ee = kin.ee_pose(arm, arm.home)[:3, 3]
    obs = [obstacle(ee + [0.0, 0.12, 0.0], 0), obstacle(ee + [0.0, 0.0, -0.15], 1)]
    q = arm.home
    rows = build_restrictions(arm, q, obs, G)
    assert len(rows) == 2
    J = kin.jacobian(arm, q)[:3]
    xd = np.array([0.0, 0.2, -0.2])
    prob = assemble_qp(J, xd, mid_joint_velocity(q, arm.joint_limits, G.t_mid), G, rows)
    cmd = compute_command(arm, state(arm), xd, obs, G, RecoveryState(), d_lowest=1.0)
    f_ref, x_ref = kkt_enumeration(prob.H, prob.g, prob.A, prob.b)
    assert prob.objective(cmd.q_dot) == pytest.approx(f_ref, abs=1e-9)
    np.testing.assert_allclose(cmd.q_dot, x_ref, atol=1e-8)


@given(st.floats(0, 2.0), st.lists(st.floats(-0.3, 0.3), min_size=6, max_size=6))
def test_scaled_task_norm(d_lowest, xd):
    model = kin.load_model("redundant7")
    xd = np.array(xd)
    cmd = compute_command(model, state(model), xd, [], G, RecoveryState(), d_lowest=d_lowest)
    factor = velocity_scale(d_lowest, G.d_max)
    assert cmd.scale_factor == factor
    assert np.linalg.norm(cmd.scaled_task) == pytest.approx(factor * np.linalg.norm(xd), rel=1e-12, abs=1e-15)
    assert cmd.mode is (Mode.SCALED if factor < 1 else Mode.NOMINAL)


def test_feedback_is_not_scaled(arm):
    xd, fb = np.array([0.1, 0, 0]), np.array([0, 0.01, 0])
    cmd = compute_command(arm, state(arm), xd, [], G, RecoveryState(), d_lowest=0.4, feedback=fb)
    np.testing.assert_allclose(cmd.scaled_task, 0.5 * xd + fb, atol=1e-15)


def test_reaction_replaces_linear_task(arm):
    xd = np.array([0.1, 0.0, 0.0, 0.0, 0.0, 0.1])
    cmd = compute_command(arm, state(arm), xd, [], G, RecoveryState(), d_lowest=0.4,
                          reaction=np.array([0.0, -0.1, 0.0]))
    assert cmd.mode is Mode.REACTING
    np.testing.assert_array_equal(cmd.scaled_task, [0, -0.1, 0, 0, 0, 0.1])


def test_stationary_without_obstacles(arm):
    ctrl = Controller(arm)
    xd = np.array([0.05, 0.0, -0.05])
    a = ctrl.step(state(arm), xd, [], None)
    b = ctrl.step(state(arm), xd, [], None)
    assert np.array_equal(a.q_dot, b.q_dot)


def test_proximity_off_ignores_obstacles(arm):
    ee = kin.ee_pose(arm, arm.home)[:3, 3]
    ctrl = Controller(arm, proximity=False)
    cmd = ctrl.step(state(arm), np.array([0.0, 0.1, 0.0]), [obstacle(ee + [0, 0.08, 0])], 0.08)
    assert cmd.scale_factor == 1.0 and cmd.active_constraints == 0


def test_velocity_limits_clamp(arm):
    cmd = compute_command(arm, state(arm), np.array([30.0, 0, 0]), [], G, RecoveryState())
    assert cmd.clamped
    assert np.max(np.abs(cmd.q_dot) / arm.velocity_limits) == pytest.approx(1.0)


def test_touching_obstacle_uses_remembered_direction(arm):
    q = arm.home
    frames = kin.forward_kinematics(arm, q)
    a, b = kin.capsule_points_world(arm, frames)[2]
    mid = 0.5 * (a + b)
    axis = (b - a) / np.linalg.norm(b - a)
    side = np.cross(axis, [0, 0, 1.0])
    side /= np.linalg.norm(side)
    memory = DirectionMemory()
    near = build_restrictions(arm, q, [obstacle(mid + 0.1 * side, 5)], G, frames, memory)
    assert near and not np.any(np.isnan(near[0].direction))
    inside = build_restrictions(arm, q, [obstacle(mid + 0.03 * side, 5)], G, frames, memory)
    assert inside[0].distance == 0.0
    np.testing.assert_allclose(inside[0].direction, memory.last[5])
    assert inside[0].limit == pytest.approx(approach_limit(0.0, G))
    # without history the direction comes from the capsule axis
    fresh = build_restrictions(arm, q, [obstacle(mid + 0.03 * side, 6)], G, frames, DirectionMemory())
    np.testing.assert_allclose(fresh[0].direction, side, atol=1e-9)


def test_constraint_cap(arm):
    ee = kin.ee_pose(arm, arm.home)[:3, 3]
    rng = np.random.default_rng(0)
    obs = [obstacle(ee + rng.uniform(-0.2, 0.2, 3), i) for i in range(12)]
    rows = build_restrictions(arm, arm.home, obs, G)
    assert len(rows) <= G.max_constraints
    assert [r.distance for r in rows] == sorted(r.distance for r in rows)
