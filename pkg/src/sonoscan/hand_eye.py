"""Hand-eye calibration: recover the fixed camera mount X from A X = X B.

A_i are relative flange motions, B_i the matching relative camera motions.
The rotation is solved first as a homogeneous quaternion least-squares
problem, then the translation follows from a linear system; both steps are
closed-form, which keeps the solver deterministic and easy to validate.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateMotions
from .se3 import (
    RigidTransform,
    matrix_to_quat,
    matrix_to_rotvec,
    quat_left_matrix,
    quat_right_matrix,
    quat_to_matrix,
)

PARALLEL_AXIS_TOL = 1e-6
MIN_ROTATION_ANGLE = 1e-8


def _check_axis_spread(motions) -> None:
    axes = []
    for t in motions:
        rotvec = matrix_to_rotvec(t.rotation)
        angle = np.linalg.norm(rotvec)
        if angle > MIN_ROTATION_ANGLE:
            axes.append(rotvec / angle)
    if len(axes) < 2:
        raise DegenerateMotions("need at least two non-trivial rotations")
    ref = axes[0]
    spread = max(float(np.linalg.norm(np.cross(ref, a))) for a in axes[1:])
    if spread < PARALLEL_AXIS_TOL:
        raise DegenerateMotions(
            "all rotation axes are parallel; translation along the axis is unobservable")


def solve_hand_eye(motion_pairs) -> RigidTransform:
    """Least-squares X from pairs (A_i, B_i) with A_i X = X B_i.

    Needs >= 3 pairs whose rotation axes are not all parallel; raises
    DegenerateMotions otherwise.
    """
    if len(motion_pairs) < 3:
        raise ValueError("need at least 3 motion pairs")
    a_list = [a for a, _ in motion_pairs]
    b_list = [b for _, b in motion_pairs]
    _check_axis_spread(a_list)

    # rotation: stack [L(q_Ai) - R(q_Bi)] q_X = 0, take the smallest singular vector
    rows = np.vstack([
        quat_left_matrix(matrix_to_quat(a.rotation)) - quat_right_matrix(matrix_to_quat(b.rotation))
        for a, b in zip(a_list, b_list)
    ])
    _, _, vt = np.linalg.svd(rows)
    q_x = vt[-1]
    if q_x[0] < 0.0:
        q_x = -q_x
    r_x = quat_to_matrix(q_x)

    # translation: (R_Ai - I) t_X = R_X t_Bi - t_Ai
    lhs = np.vstack([a.rotation - np.eye(3) for a in a_list])
    rhs = np.concatenate([r_x @ b.translation - a.translation for a, b in zip(a_list, b_list)])
    t_x, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return RigidTransform(r_x, t_x)
