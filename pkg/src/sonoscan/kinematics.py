"""Serial-chain forward kinematics and geometric Jacobian for a 7-DoF arm.

The chain is described URDF-style: each joint k carries a fixed offset
transform from the previous joint frame plus a unit rotation axis expressed
in its own frame.  Frame k (after applying the joint rotation) is the body
frame of link k; the flange coincides with frame 7, and fixed tool offsets
map the flange to the probe tip and the camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .se3 import RigidTransform, rotvec_to_matrix

N_JOINTS = 7

_FRAME_OFFSETS = ("flange", "probe", "camera")


@dataclass(frozen=True)
class SerialChain:
    """Fixed geometry of the arm: 7 revolute joints plus tool offsets."""

    joint_axes: np.ndarray              # (7, 3) unit vectors, local frames
    joint_origins: tuple                # 7 RigidTransform offsets
    flange_to_probe: RigidTransform
    flange_to_camera: RigidTransform
    joint_limits: np.ndarray = None     # (7, 2) rad, defaults to +/-170 deg

    def __post_init__(self):
        axes = np.asarray(self.joint_axes, dtype=float).reshape(N_JOINTS, 3)
        norms = np.linalg.norm(axes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("joint axes must be unit-norm within 1e-12")
        object.__setattr__(self, "joint_axes", axes)
        if len(self.joint_origins) != N_JOINTS:
            raise ValueError(f"chain needs exactly {N_JOINTS} joint offsets")
        object.__setattr__(self, "joint_origins", tuple(self.joint_origins))
        limits = self.joint_limits
        if limits is None:
            limit = np.deg2rad(170.0)
            limits = np.tile([-limit, limit], (N_JOINTS, 1))
        limits = np.asarray(limits, dtype=float).reshape(N_JOINTS, 2)
        if np.any(limits[:, 0] >= limits[:, 1]):
            raise ValueError("joint limits must satisfy lower < upper")
        object.__setattr__(self, "joint_limits", limits)

    def tool_offset(self, frame: str) -> RigidTransform:
        if frame == "flange":
            return RigidTransform.identity()
        if frame == "probe":
            return self.flange_to_probe
        if frame == "camera":
            return self.flange_to_camera
        raise ValueError(f"unknown frame {frame!r}, expected one of {_FRAME_OFFSETS}")


@dataclass
class JointState:
    """Joint positions (rad) and velocities (rad/s)."""

    q: np.ndarray
    dq: np.ndarray = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(N_JOINTS)
        self.dq = (np.zeros(N_JOINTS) if self.dq is None
                   else np.asarray(self.dq, dtype=float).reshape(N_JOINTS))

    def within_limits(self, chain: SerialChain) -> bool:
        lim = chain.joint_limits
        return bool(np.all(self.q >= lim[:, 0]) and np.all(self.q <= lim[:, 1]))


def joint_frames(chain: SerialChain, q: np.ndarray):
    """Per-joint world quantities needed by FK, Jacobians and dynamics.

    Returns (rotations, origins, axes_world): rotations[k] and origins[k]
    give the pose of link-k frame in the base; axes_world[k] is joint k's
    rotation axis in base coordinates.
    """
    q = np.asarray(q, dtype=float).reshape(N_JOINTS)
    rotations = np.empty((N_JOINTS, 3, 3))
    origins = np.empty((N_JOINTS, 3))
    axes_world = np.empty((N_JOINTS, 3))
    r = np.eye(3)
    p = np.zeros(3)
    for k in range(N_JOINTS):
        off = chain.joint_origins[k]
        p = r @ off.translation + p
        r = r @ off.rotation
        axis = chain.joint_axes[k]
        axes_world[k] = r @ axis
        r = r @ rotvec_to_matrix(axis * q[k])
        rotations[k] = r
        origins[k] = p
    return rotations, origins, axes_world


def forward_kinematics(chain: SerialChain, q: np.ndarray, frame: str = "probe",
                       frames=None) -> RigidTransform:
    """Pose of the probe (default), camera, or flange frame in the base frame.

    `frames` may carry the output of joint_frames(chain, q) to share work
    across the kinematics/dynamics calls of one control tick.
    """
    rotations, origins, _ = joint_frames(chain, q) if frames is None else frames
    flange = RigidTransform(rotations[-1], origins[-1], check=False)
    return flange.compose(chain.tool_offset(frame))


def geometric_jacobian(chain: SerialChain, q: np.ndarray, frame: str = "probe",
                       frames=None) -> np.ndarray:
    """6x7 geometric Jacobian of the given frame's origin.

    Rows are stacked (linear velocity; angular velocity) in base coordinates,
    so ``J @ dq`` gives (v, omega) of the frame origin for joint rates dq.
    """
    rotations, origins, axes_world = joint_frames(chain, q) if frames is None else frames
    flange = RigidTransform(rotations[-1], origins[-1], check=False)
    tip = flange.compose(chain.tool_offset(frame)).translation
    jac = np.zeros((6, N_JOINTS))
    jac[:3] = np.cross(axes_world, tip - origins).T
    jac[3:] = axes_world.T
    return jac
