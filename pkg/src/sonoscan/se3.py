"""Rigid transforms and small rotation utilities.

Conventions: a transform T_AB maps coordinates of frame {B} into frame {A},
``p_A = R_AB @ p_B + t_AB``.  Rotations are 3x3 orthonormal matrices with
determinant +1; quaternions are (w, x, y, z) and only used where a linear
formulation needs them (hand-eye, orientation errors).
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field

import numpy as np

ORTHONORMAL_TOL = 1e-9


def _as_rotation(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    return r


@dataclass(frozen=True)
class RigidTransform:
    """Element of SE(3): rotation (unitless) plus translation (metres)."""

    rotation: np.ndarray
    translation: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check):
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "translation", t)
        if check:
            r = self.rotation
            if not np.allclose(r.T @ r, np.eye(3), atol=ORTHONORMAL_TOL):
                raise ValueError("rotation is not orthonormal")
            if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
                raise ValueError("rotation determinant is not +1")
            if not np.all(np.isfinite(t)):
                raise ValueError("translation has non-finite entries")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), check=False)

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError("expected a 4x4 homogeneous matrix")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError("last row is not (0, 0, 0, 1)")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(rotvec_to_matrix(np.asarray(rotvec, dtype=float)),
                   np.asarray(translation, dtype=float), check=False)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Chain transforms: (self @ other) maps other's source frame into self's target frame."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            check=False,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def invert(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation, check=False)

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or a stack of points (n, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def rotate(self, vectors) -> np.ndarray:
        """Rotate free vectors (no translation)."""
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def isclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
        )


def rotvec_to_matrix(rotvec) -> np.ndarray:
    """Rodrigues' formula; safe at zero angle."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = float(np.linalg.norm(rotvec))
    if angle < 1e-12:
        k = skew(rotvec)
        return np.eye(3) + k + 0.5 * (k @ k)
    axis = rotvec / angle
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def matrix_to_rotvec(r: np.ndarray) -> np.ndarray:
    """Log map of SO(3); inverse of rotvec_to_matrix.  Robust near 0 and pi
    by going through the quaternion form."""
    q = matrix_to_quat(r)
    vec_norm = float(np.linalg.norm(q[1:]))
    if vec_norm < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * float(np.arctan2(vec_norm, q[0]))
    return angle * q[1:] / vec_norm


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return rotvec_to_matrix(axis / np.linalg.norm(axis) * angle)


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    t = np.trace(r)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(r[i, i] - r[j, j] - r[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_left_matrix(q: np.ndarray) -> np.ndarray:
    """Matrix L(q) with L(q) @ p == quat_mul(q, p)."""
    w, x, y, z = q
    return np.array([
        [w, -x, -y, -z],
        [x, w, -z, y],
        [y, z, w, -x],
        [z, -y, x, w],
    ])


def quat_right_matrix(q: np.ndarray) -> np.ndarray:
    """Matrix R(q) with R(q) @ p == quat_mul(p, q)."""
    w, x, y, z = q
    return np.array([
        [w, -x, -y, -z],
        [x, w, z, -y],
        [y, -z, w, x],
        [z, y, -x, w],
    ])


def orthonormal_tangents(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic tangent basis (t1, t2) with t1 x t2 = normal."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(helper, n)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return t1, t2


def rotation_about_line(point: np.ndarray, axis: np.ndarray, angle: float) -> RigidTransform:
    """Rigid rotation about the line through `point` with direction `axis`."""
    point = np.asarray(point, dtype=float)
    r = axis_angle_matrix(axis, angle)
    return RigidTransform(r, point - r @ point, check=False)
