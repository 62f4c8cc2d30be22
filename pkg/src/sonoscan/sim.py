"""Fixed-step simulation: arm dynamics, probe-tissue contact, F/T sensing
and synthetic ultrasound slices.

Contact is a Kelvin-Voigt point model at the probe tip against the phantom
mesh: clamped spring-damper along the surface normal plus viscous drag on
the tangential tip velocity.  Integration is semi-implicit Euler at the
control rate (3 kHz by default), which keeps the free dynamics
energy-stable at trivial cost.  The ultrasound renderer is deliberately
non-physical: slice sampling with depth attenuation and speckle, enough to
show coupling stages and embedded features.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalDivergence
from .dynamics import ArmDynamics
from .kinematics import JointState, N_JOINTS, SerialChain, forward_kinematics, \
    geometric_jacobian, joint_frames
from .mesh import TriMesh, closest_point
from .se3 import RigidTransform

DEFAULT_DT = 1.0 / 3000.0
VELOCITY_LIMIT = 100.0  # rad/s, divergence guard
COUPLING_DISTANCE = 5e-4  # m, beyond this the US image goes dark
DECOUPLED_GAIN = 0.02


@dataclass(frozen=True)
class PhantomModel:
    """Soft-tissue contact analog: ground-truth surface plus a point-contact
    spring-damper law."""

    surface: TriMesh
    stiffness: float = 500.0            # N/m
    damping: float = 5.0                # N s/m
    tangential_viscosity: float = 2.0   # N s/m

    def __post_init__(self):
        if self.stiffness <= 0.0 or self.damping < 0.0 or self.tangential_viscosity < 0.0:
            raise ValueError("phantom parameters out of range")


@dataclass(frozen=True)
class SimState:
    joints: JointState
    time: float = 0.0
    contact_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))
    diverged: bool = False

    def __post_init__(self):
        w = np.asarray(self.contact_wrench, dtype=float).reshape(6)
        object.__setattr__(self, "contact_wrench", w)
        if self.time < 0.0:
            raise ValueError("time must be non-negative")


def contact_wrench(phantom: PhantomModel, probe: RigidTransform,
                   probe_vel, hint_face: int | None = None) -> np.ndarray:
    """Base-frame (force, torque) on the probe tip; zero out of contact.

    Normal force (clamped non-negative) is stiffness times penetration plus
    damping on the approach rate only; tangential force is viscous drag.
    The law is continuous across first touch.
    """
    v = np.asarray(probe_vel, dtype=float).reshape(6)[:3]
    cp = closest_point(phantom.surface, probe.translation, hint_face)
    if cp.signed_distance >= 0.0:
        return np.zeros(6)
    normal = phantom.surface.interpolated_normal(cp.face, cp.barycentric)
    approach = normal @ v  # = d_dot
    magnitude = phantom.stiffness * (-cp.signed_distance) \
        + phantom.damping * max(0.0, -approach)
    magnitude = max(0.0, magnitude)
    v_tan = v - approach * normal
    force = magnitude * normal - phantom.tangential_viscosity * v_tan
    return np.concatenate([force, np.zeros(3)])


class SimWorld:
    """Arm plus (optional) phantom; owns the integrator."""

    def __init__(self, chain: SerialChain, dynamics: ArmDynamics,
                 phantom: PhantomModel | None = None):
        self.chain = chain
        self.dynamics = dynamics
        self.phantom = phantom
        self._contact_hint = None

    def probe_state(self, state: SimState):
        """Probe pose and 6-velocity at the current joints."""
        frames = joint_frames(self.chain, state.joints.q)
        probe = forward_kinematics(self.chain, state.joints.q, frames=frames)
        jac = geometric_jacobian(self.chain, state.joints.q, frames=frames)
        return probe, jac @ state.joints.dq

    def _wrench(self, q, dq, frames) -> np.ndarray:
        if self.phantom is None:
            return np.zeros(6)
        probe = forward_kinematics(self.chain, q, frames=frames)
        jac = geometric_jacobian(self.chain, q, frames=frames)
        w = contact_wrench(self.phantom, probe, jac @ dq, self._contact_hint)
        self._contact_hint = closest_point(
            self.phantom.surface, probe.translation, self._contact_hint).face
        return w

    def step(self, state: SimState, tau, dt: float = DEFAULT_DT,
             extra_tip_wrench=None) -> SimState:
        """Semi-implicit Euler step under joint torques tau.

        `extra_tip_wrench` injects a disturbance wrench at the probe tip
        (base frame), e.g. an operator pushing the probe sideways.  Raises
        NumericalDivergence (with the offending state attached) if the
        velocity leaves the trusted envelope.
        """
        if not 0.0 < dt <= 1e-2:
            raise ValueError("dt must be in (0, 1e-2] s")
        tau = np.asarray(tau, dtype=float).reshape(N_JOINTS)
        if not np.all(np.isfinite(tau)):
            raise ValueError("torque must be finite")
        q = state.joints.q
        dq = state.joints.dq

        frames = joint_frames(self.chain, q)
        mass = self.dynamics.mass_matrix(q, frames)
        bias = self.dynamics.bias(q, dq, frames)
        wrench = self._wrench(q, dq, frames)
        if extra_tip_wrench is not None:
            wrench = wrench + np.asarray(extra_tip_wrench, dtype=float).reshape(6)
        jac = geometric_jacobian(self.chain, q, frames=frames)
        ddq = np.linalg.solve(mass, tau + jac.T @ wrench - bias)

        dq_new = dq + dt * ddq
        q_new = q + dt * dq_new
        time_new = state.time + dt

        frames_new = joint_frames(self.chain, q_new)
        wrench_new = self._wrench(q_new, dq_new, frames_new)
        new_state = SimState(joints=JointState(q_new, dq_new), time=time_new,
                             contact_wrench=wrench_new)
        speed = float(np.linalg.norm(dq_new))
        if speed > VELOCITY_LIMIT:
            new_state = replace(new_state, diverged=True)
            raise NumericalDivergence(
                f"joint speed {speed:.1f} rad/s exceeded {VELOCITY_LIMIT}", new_state)
        return new_state

    def ft_sensor_read(self, state: SimState, noise_sigma: float = 0.0,
                       rng=None) -> np.ndarray:
        """Contact wrench expressed in the probe frame, optionally noisy."""
        probe = forward_kinematics(self.chain, state.joints.q)
        r_t = probe.rotation.T
        reading = np.concatenate([r_t @ state.contact_wrench[:3],
                                  r_t @ state.contact_wrench[3:]])
        if noise_sigma > 0.0:
            rng = np.random.default_rng() if rng is None else rng
            reading = reading + rng.normal(0.0, noise_sigma, 6)
        return reading


@dataclass(frozen=True)
class VoxelPhantom:
    """Axis-aligned echogenicity volume with embedded inclusions."""

    values: np.ndarray   # (nz, ny, nx) in [0, 1]
    pitch: float         # m per voxel
    origin: np.ndarray   # base-frame position of voxel (0, 0, 0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ValueError("voxel grid must be 3D")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("echogenicity must stay in [0, 1]")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        if self.pitch <= 0.0:
            raise ValueError("voxel pitch must be positive")

    @classmethod
    def build(cls, extent, pitch: float, origin, surface_height=None,
              background: float = 0.45, inclusions=()) -> "VoxelPhantom":
        """Rasterise a tissue block: `surface_height(x, y)` bounds the tissue
        from above (air = 0); spherical/ellipsoidal inclusions override the
        background echogenicity and must lie fully inside the volume."""
        origin = np.asarray(origin, dtype=float)
        nx, ny, nz = (max(2, int(round(e / pitch)) + 1) for e in extent)
        xs = origin[0] + np.arange(nx) * pitch
        ys = origin[1] + np.arange(ny) * pitch
        zs = origin[2] + np.arange(nz) * pitch
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        values = np.full((nx, ny, nz), background)
        if surface_height is not None:
            values[gz > surface_height(gx, gy)] = 0.0
        for inc in inclusions:
            center = np.asarray(inc["center"], dtype=float)
            radii = np.broadcast_to(np.asarray(inc["radii"], dtype=float), (3,))
            lo, hi = center - radii, center + radii
            if np.any(lo < [xs[0], ys[0], zs[0]]) or np.any(hi > [xs[-1], ys[-1], zs[-1]]):
                raise ValueError("inclusion does not fit inside the volume")
            mask = (((gx - center[0]) / radii[0]) ** 2
                    + ((gy - center[1]) / radii[1]) ** 2
                    + ((gz - center[2]) / radii[2]) ** 2) <= 1.0
            values[mask] = inc["echogenicity"]
        return cls(values=values.transpose(2, 1, 0), pitch=pitch, origin=origin)

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear echogenicity at base-frame points; 0 outside the volume."""
        p = (np.atleast_2d(points) - self.origin) / self.pitch
        nz, ny, nx = self.values.shape
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        inside = (x >= 0) & (x <= nx - 1) & (y >= 0) & (y <= ny - 1) & (z >= 0) & (z <= nz - 1)
        out = np.zeros(len(p))
        if not np.any(inside):
            return out
        x, y, z = x[inside], y[inside], z[inside]
        x0 = np.clip(np.floor(x).astype(int), 0, nx - 2)
        y0 = np.clip(np.floor(y).astype(int), 0, ny - 2)
        z0 = np.clip(np.floor(z).astype(int), 0, nz - 2)
        fx, fy, fz = x - x0, y - y0, z - z0
        v = self.values
        acc = np.zeros(len(x))
        for dz, wz in ((0, 1 - fz), (1, fz)):
            for dy, wy in ((0, 1 - fy), (1, fy)):
                for dx, wx in ((0, 1 - fx), (1, fx)):
                    acc += wz * wy * wx * v[z0 + dz, y0 + dy, x0 + dx]
        out[inside] = acc
        return out


def us_slice(phantom: VoxelPhantom, probe: RigidTransform, width: float,
             depth: float, resolution, attenuation: float = 50.0,
             surface_distance: float | None = None,
             speckle_rng=None) -> np.ndarray:
    """Synthetic B-mode-like slice in the probe's x-z plane.

    Rows run with depth (probe z), columns across the footprint (probe x).
    Echogenicity is attenuated exponentially with depth and multiplied by
    Rayleigh speckle when a generator is supplied.  With the probe more
    than half a millimetre off the surface the image collapses to near
    black, mimicking lost acoustic coupling.
    """
    cols, rows = resolution
    lateral = np.linspace(-width / 2.0, width / 2.0, cols)
    depths = np.linspace(0.0, depth, rows)
    gl, gd = np.meshgrid(lateral, depths)
    points = (probe.translation
              + gl.reshape(-1, 1) * probe.rotation[:, 0]
              + gd.reshape(-1, 1) * probe.rotation[:, 2])
    image = phantom.sample(points).reshape(rows, cols)
    image = image * np.exp(-attenuation * gd)
    if speckle_rng is not None:
        sigma = np.sqrt(2.0 / np.pi)  # unit-mean Rayleigh
        image = image * speckle_rng.rayleigh(scale=sigma, size=image.shape)
    if surface_distance is not None and surface_distance > COUPLING_DISTANCE:
        image = image * DECOUPLED_GAIN
    return np.clip(image, 0.0, 1.0)
