"""
Kinematics and proximity sensing
================================

Load the bundled 7-joint arm, look at its end effector and Jacobian, then
let the sensor units look at a sphere held near the wrist.
"""

import numpy as np

from proxcontact import kinematics as kin
from proxcontact.sensing import Sphere, gate_obstacles, mounts_from_specs, read_sensors

np.set_printoptions(precision=4, suppress=True)

# the arm and its seed configuration
arm = kin.load_model("redundant7")
q = arm.home
frames = kin.forward_kinematics(arm, q)
ee = frames[-1][:3, 3]
print(f"{arm.name}: {arm.n} joints, {len(arm.capsules)} capsules")
print("end effector at", ee)

# 6 x n Jacobian: linear rows first, angular rows after
J = kin.jacobian(arm, q, frames=frames)
print("singular values of the linear part:", np.linalg.svd(J[:3], compute_uv=False))

# a 5 cm "hand" beside the wrist, and the closest point on the body
hand = Sphere(ee + np.array([0.0, 0.12, 0.05]), 0.05)
bp = kin.closest_point_on_robot(arm, q, hand.center, frames=frames)
print(f"closest body point on link {bp.link_index}, {bp.distance:.3f} m from the hand centre")

# each sensor unit casts one ray along its local z axis
poses = [m.pose(frames) for m in mounts_from_specs(arm, arm.sensor_specs)]
estimates = read_sensors(poses, [hand], stamp=0.0)
for e in estimates:
    seen = "nothing" if e.d_obs >= 4.0 else f"hit at {e.d_obs:.3f} m -> h = {e.h}"
    print(f"  sensor {e.source_id}: {seen}")

# gating keeps what is within d_max of the end effector
kept, d_lowest = gate_obstacles(estimates, ee, d_max=0.8)
print(f"{len(kept)} estimate(s) kept, nearest {d_lowest}")
