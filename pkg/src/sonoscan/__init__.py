"""Collaborative robotic ultrasound scanning: simulation and control stack."""

from .se3 import RigidTransform
from .kinematics import JointState, SerialChain, forward_kinematics, geometric_jacobian
from .hand_eye import solve_hand_eye
from .mesh import TriMesh, closest_point, load_ply, save_ply
from .chart import SurfaceChart, SurfacePose, build_chart, chart_to_surface, surface_pose, task_jacobian

__version__ = "0.1.0"

__all__ = [
    "RigidTransform",
    "JointState",
    "SerialChain",
    "forward_kinematics",
    "geometric_jacobian",
    "solve_hand_eye",
    "TriMesh",
    "closest_point",
    "load_ply",
    "save_ply",
    "SurfaceChart",
    "SurfacePose",
    "build_chart",
    "chart_to_surface",
    "surface_pose",
    "task_jacobian",
]
