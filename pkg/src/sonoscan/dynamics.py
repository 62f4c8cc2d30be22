"""Rigid-body dynamics of the 7-DoF arm.

Per-link parameters (mass, centre of mass, inertia about the COM, both in
the link frame) come from the scene configuration.  The mass matrix is
assembled from link Jacobians; the velocity/gravity bias runs a world-frame
recursive Newton-Euler pass with the base-acceleration gravity trick.  A
finite-difference Christoffel construction is kept for the consistency
audits; the simulator itself never needs it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import N_JOINTS, SerialChain, joint_frames

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class ArmDynamics:
    """Link-level inertial model attached to a kinematic chain."""

    chain: SerialChain
    masses: np.ndarray            # (7,) kg
    com_local: np.ndarray         # (7, 3) m, in link frames
    inertia_local: np.ndarray     # (7, 3, 3) kg m^2, about the COM
    gravity: np.ndarray = None

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).reshape(N_JOINTS)
        if np.any(m <= 0.0):
            raise ValueError("link masses must be positive")
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "com_local",
                           np.asarray(self.com_local, dtype=float).reshape(N_JOINTS, 3))
        inertia = np.asarray(self.inertia_local, dtype=float).reshape(N_JOINTS, 3, 3)
        for k in range(N_JOINTS):
            if not np.allclose(inertia[k], inertia[k].T, atol=1e-12):
                raise ValueError(f"link {k} inertia tensor is not symmetric")
            if np.linalg.eigvalsh(inertia[k]).min() <= 0.0:
                raise ValueError(f"link {k} inertia tensor is not positive definite")
        object.__setattr__(self, "inertia_local", inertia)
        g = GRAVITY if self.gravity is None else np.asarray(self.gravity, dtype=float).reshape(3)
        object.__setattr__(self, "gravity", g)

    def _world_links(self, q, frames=None):
        rotations, origins, axes = joint_frames(self.chain, q) if frames is None else frames
        coms = origins + np.einsum("kij,kj->ki", rotations, self.com_local)
        inertias = np.einsum("kip,kpq,kjq->kij", rotations, self.inertia_local, rotations)
        return rotations, origins, axes, coms, inertias

    def mass_matrix(self, q, frames=None) -> np.ndarray:
        """Joint-space inertia M(q), symmetric positive definite."""
        _, origins, axes, coms, inertias = self._world_links(q, frames)
        m = np.zeros((N_JOINTS, N_JOINTS))
        jv = np.zeros((3, N_JOINTS))
        jw = np.zeros((3, N_JOINTS))
        for i in range(N_JOINTS):
            jv[:, : i + 1] = np.cross(axes[: i + 1], coms[i] - origins[: i + 1]).T
            jw[:, : i + 1] = axes[: i + 1].T
            jv[:, i + 1:] = 0.0
            jw[:, i + 1:] = 0.0
            m += self.masses[i] * (jv.T @ jv) + jw.T @ inertias[i] @ jw
        return 0.5 * (m + m.T)

    def bias(self, q, dq, frames=None) -> np.ndarray:
        """Velocity and gravity torques C(q, dq) dq + g(q) by Newton-Euler."""
        return self._rnea(q, dq, np.zeros(N_JOINTS), self.gravity, frames)

    def gravity_torque(self, q, frames=None) -> np.ndarray:
        return self._rnea(q, np.zeros(N_JOINTS), np.zeros(N_JOINTS), self.gravity, frames)

    def coriolis_vector(self, q, dq, frames=None) -> np.ndarray:
        return self.bias(q, dq, frames) - self.gravity_torque(q, frames)

    def _rnea(self, q, dq, ddq, gravity, frames=None) -> np.ndarray:
        dq = np.asarray(dq, dtype=float).reshape(N_JOINTS)
        ddq = np.asarray(ddq, dtype=float).reshape(N_JOINTS)
        _, origins, axes, coms, inertias = self._world_links(q, frames)

        omega = np.zeros((N_JOINTS + 1, 3))
        alpha = np.zeros((N_JOINTS + 1, 3))
        a_origin = np.zeros((N_JOINTS + 1, 3))
        a_origin[0] = -gravity  # base acceleration trick folds gravity in
        prev_o = np.zeros(3)
        for i in range(N_JOINTS):
            step = origins[i] - prev_o
            a_joint = (a_origin[i] + np.cross(alpha[i], step)
                       + np.cross(omega[i], np.cross(omega[i], step)))
            omega[i + 1] = omega[i] + axes[i] * dq[i]
            alpha[i + 1] = alpha[i] + axes[i] * ddq[i] + np.cross(omega[i], axes[i]) * dq[i]
            a_origin[i + 1] = a_joint
            prev_o = origins[i]

        force = np.zeros((N_JOINTS, 3))
        moment = np.zeros((N_JOINTS, 3))
        for i in range(N_JOINTS):
            arm = coms[i] - origins[i]
            a_com = (a_origin[i + 1] + np.cross(alpha[i + 1], arm)
                     + np.cross(omega[i + 1], np.cross(omega[i + 1], arm)))
            force[i] = self.masses[i] * a_com
            moment[i] = inertias[i] @ alpha[i + 1] + np.cross(
                omega[i + 1], inertias[i] @ omega[i + 1])

        tau = np.zeros(N_JOINTS)
        f_child = np.zeros(3)
        n_child = np.zeros(3)
        child_origin = origins[-1]
        for i in reversed(range(N_JOINTS)):
            n = (moment[i] + n_child
                 + np.cross(coms[i] - origins[i], force[i])
                 + np.cross(child_origin - origins[i], f_child))
            f = force[i] + f_child
            tau[i] = axes[i] @ n
            f_child, n_child = f, n
            child_origin = origins[i]
        return tau

    def coriolis_matrix_christoffel(self, q, dq, h: float = 1e-6) -> np.ndarray:
        """C(q, dq) from Christoffel symbols of the finite-differenced mass
        matrix; audit-only (O(n) mass matrix evaluations)."""
        q = np.asarray(q, dtype=float).reshape(N_JOINTS)
        dm = np.empty((N_JOINTS, N_JOINTS, N_JOINTS))
        for k in range(N_JOINTS):
            e = np.zeros(N_JOINTS)
            e[k] = h
            dm[k] = (self.mass_matrix(q + e) - self.mass_matrix(q - e)) / (2.0 * h)
        c = np.zeros((N_JOINTS, N_JOINTS))
        for i in range(N_JOINTS):
            for j in range(N_JOINTS):
                gamma = 0.5 * (dm[:, i, j] + dm[j, i, :] - dm[i, j, :])
                c[i, j] = gamma @ dq
        return c

    def mass_matrix_rate(self, q, dq, h: float = 1e-6) -> np.ndarray:
        """dM/dt along dq by finite differences; audit-only."""
        q = np.asarray(q, dtype=float).reshape(N_JOINTS)
        rate = np.zeros((N_JOINTS, N_JOINTS))
        for k in range(N_JOINTS):
            e = np.zeros(N_JOINTS)
            e[k] = h
            rate += (self.mass_matrix(q + e) - self.mass_matrix(q - e)) / (2.0 * h) * dq[k]
        return rate

    def kinetic_energy(self, q, dq, frames=None) -> float:
        dq = np.asarray(dq, dtype=float).reshape(N_JOINTS)
        return 0.5 * float(dq @ self.mass_matrix(q, frames) @ dq)

    def potential_energy(self, q, frames=None) -> float:
        _, _, _, coms, _ = self._world_links(q, frames)
        return -float(np.sum(self.masses[:, None] * self.gravity * coms))


def default_arm_dynamics(chain: SerialChain) -> ArmDynamics:
    """Plausible bench-arm inertial parameters (no published values exist
    for the target hardware): tapering link masses, COMs halfway along each
    link offset, rod-like inertia."""
    masses = np.array([3.5, 3.0, 2.5, 2.0, 1.5, 1.0, 0.8])
    com_local = np.zeros((N_JOINTS, 3))
    inertia = np.zeros((N_JOINTS, 3, 3))
    for k in range(N_JOINTS):
        # link k's body spans from joint k toward the next offset (or the probe)
        if k + 1 < N_JOINTS:
            ahead = chain.joint_origins[k + 1].translation
        else:
            ahead = chain.flange_to_probe.translation
        com_local[k] = 0.5 * ahead
        length = max(float(np.linalg.norm(ahead)), 0.05)
        rod = masses[k] * length ** 2 / 12.0
        inertia[k] = np.diag([rod + 0.002, rod + 0.002, 0.002])
    return ArmDynamics(chain=chain, masses=masses, com_local=com_local,
                       inertia_local=inertia)
