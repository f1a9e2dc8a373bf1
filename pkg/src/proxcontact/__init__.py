"""Proximity-informed velocity control and contact detection for a redundant arm."""

__version__ = "0.1.0"

from .contact import ContactMonitor, ThresholdParams, thresholds  # noqa: E402
from .controller import Controller, ControllerGains, Mode, approach_limit, compute_command  # noqa: E402
from .kinematics import JointState, RobotModel, forward_kinematics, jacobian, load_model  # noqa: E402
from .qp import ActiveSetSolver, QpProblem, solve  # noqa: E402
from .sensing import ObstacleEstimate, gate_obstacles, obstacle_position  # noqa: E402

__all__ = [
    "ActiveSetSolver", "ContactMonitor", "Controller", "ControllerGains", "JointState", "Mode",
    "ObstacleEstimate", "QpProblem", "RobotModel", "ThresholdParams", "approach_limit",
    "compute_command", "forward_kinematics", "gate_obstacles", "jacobian", "load_model",
    "obstacle_position", "solve", "thresholds",
]
