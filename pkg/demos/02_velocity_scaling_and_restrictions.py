"""
Velocity scaling and movement restrictions
==========================================

How the controller slows the end effector as an obstacle approaches, how
the approach-velocity limit shapes up with distance, and what one control
cycle returns with an obstacle right in front of the tool.
"""

import numpy as np

from proxcontact import kinematics as kin
from proxcontact.controller import (ControllerGains, RecoveryState, approach_limit, compute_command,
                                    velocity_scale)
from proxcontact.sensing import ObstacleEstimate

np.set_printoptions(precision=4, suppress=True)
gains = ControllerGains()

# distance-proportional slowdown, and the sigmoid approach limit
print(" d [m]  scale  approach limit [m/s]")
for d in (0.0, 0.05, 0.1, 0.2, 0.35, 0.5, 0.6, 0.8):
    lim = approach_limit(d, gains)
    print(f"{d:6.2f}  {velocity_scale(d, gains.d_max):5.2f}  {'dropped' if lim is None else f'{lim:+.4f}'}")

# after the obstacle is gone the factor ramps back to 1 over l_max cycles
rec = RecoveryState(l_max=gains.l_max)
rec.update(0.2, gains.d_max)
ramp = [rec.update(None, gains.d_max) for _ in range(gains.l_max)]
print(f"recovery: {ramp[0]:.4f} after one cycle, {ramp[99]:.4f} after 100, {ramp[-1]:.4f} after {gains.l_max}")

# one cycle: the task pushes +y, an obstacle sits 8 cm away along +y
arm = kin.load_model("redundant7")
state = kin.JointState(arm.home, np.zeros(arm.n))
ee = kin.ee_pose(arm, arm.home)[:3, 3]
obstacle = ObstacleEstimate(ee + np.array([0.0, 0.08, 0.0]), source_id=0, d_obs=0.08, stamp=0.0)
task = np.array([0.0, 0.1, 0.0])
cmd = compute_command(arm, state, task, [obstacle], gains, RecoveryState())
J = kin.jacobian(arm, arm.home)[:3]
row = cmd.constraint_rows[0]
print(f"mode {cmd.mode.value}, factor {cmd.scale_factor:.2f}, {cmd.active_constraints} restriction(s)")
print("requested EE velocity:", task)
print("resulting EE velocity:", J @ cmd.q_dot)
print(f"approach velocity {row.row @ cmd.q_dot:+.4f} m/s against a limit of {row.limit:+.4f} m/s")
