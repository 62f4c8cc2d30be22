"""Impedance control in surface coordinates, gain design and setpoints.

The control law renders a spring-damper between the current surface
coordinates (s1, s2, d, eps) and their setpoint, mapped to joint torques
through the surface-coordinate Jacobian, with pure damping on the
redundant null-space direction.  Damping follows the double-diagonalisation
design, so the closed loop stays uniformly damped as the task inertia
changes with configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .chart import SurfaceChart, chart_jacobian, surface_pose
from .errors import IndefiniteInertia
from .kinematics import N_JOINTS, SerialChain, forward_kinematics, geometric_jacobian

MODES = ("autonomous", "teleop", "hands_on")
DEFAULT_STIFFNESS = (300.0, 300.0, 500.0, 5.0, 5.0, 5.0)
DEFAULT_DAMPING_RATIO = 0.7
DEFAULT_NULLSPACE_DAMPING = 2.0
DEFAULT_MAX_CHART_SPEED = 0.2   # chart units per second
DAMPING_MODE_FLOOR = 1.0        # stand-in stiffness for zero-stiffness modes


@dataclass(frozen=True)
class ImpedanceGains:
    """Stiffness matrix, per-mode damping ratio and null-space damping."""

    k_rho: np.ndarray
    damping_ratio: np.ndarray = DEFAULT_DAMPING_RATIO
    nullspace_damping: float = DEFAULT_NULLSPACE_DAMPING

    def __post_init__(self):
        k = np.asarray(self.k_rho, dtype=float)
        if k.ndim == 1:
            k = np.diag(k)
        if k.shape != (6, 6):
            raise ValueError("stiffness must be a 6-vector or 6x6 matrix")
        if not np.allclose(k, k.T, atol=1e-9):
            raise ValueError("stiffness must be symmetric")
        if np.linalg.eigvalsh(k).min() < -1e-9:
            raise ValueError("stiffness must be positive semi-definite")
        object.__setattr__(self, "k_rho", k)
        zeta = np.broadcast_to(np.asarray(self.damping_ratio, dtype=float), (6,)).copy()
        if np.any(zeta <= 0.0):
            raise ValueError("damping ratios must be positive")
        object.__setattr__(self, "damping_ratio", zeta)

    @classmethod
    def default(cls) -> "ImpedanceGains":
        return cls(np.array(DEFAULT_STIFFNESS))


def hands_on_gains(base: ImpedanceGains) -> ImpedanceGains:
    """Zero tangential stiffness so the operator can slide the probe; the
    distance and orientation blocks stay untouched.  Idempotent."""
    k = base.k_rho.copy()
    k[:2, :] = 0.0
    k[:, :2] = 0.0
    return replace(base, k_rho=k)


def design_damping(gains: ImpedanceGains, task_inertia: np.ndarray,
                   mode_floor: float = DAMPING_MODE_FLOOR) -> np.ndarray:
    """Configuration-dependent damping by double diagonalisation.

    With task inertia L and stiffness K, whiten K in the metric of L,
    diagonalise, and damp every eigenmode at its damping ratio:
    D = L^(1/2) Q diag(2 zeta sqrt(k)) Q^T L^(1/2).  Modes with (near) zero
    stiffness - the tangential block in hands-on mode - are damped as if
    they had `mode_floor` stiffness, so free directions stay lightly damped
    instead of drifting forever.
    """
    lam = 0.5 * (np.asarray(task_inertia, dtype=float) +
                 np.asarray(task_inertia, dtype=float).T)
    evals, evecs = np.linalg.eigh(lam)
    if evals.min() < -1e-9:
        raise IndefiniteInertia(f"task inertia eigenvalue {evals.min():.3e} < 0")
    evals = np.maximum(evals, 1e-9)
    sqrt_lam = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
    inv_sqrt_lam = evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T

    k_white = inv_sqrt_lam @ gains.k_rho @ inv_sqrt_lam
    k_white = 0.5 * (k_white + k_white.T)
    k_evals, q = np.linalg.eigh(k_white)
    k_evals = np.maximum(k_evals, mode_floor)
    d_modes = 2.0 * gains.damping_ratio * np.sqrt(k_evals)
    d = sqrt_lam @ q @ np.diag(d_modes) @ q.T @ sqrt_lam
    return 0.5 * (d + d.T)


@dataclass(frozen=True)
class SetpointState:
    """Desired surface coordinates, their feedforward rate, and the mode."""

    rho_d: np.ndarray
    drho_d: np.ndarray = field(default_factory=lambda: np.zeros(6))
    mode: str = "autonomous"

    def __post_init__(self):
        object.__setattr__(self, "rho_d", np.asarray(self.rho_d, dtype=float).reshape(6))
        object.__setattr__(self, "drho_d", np.asarray(self.drho_d, dtype=float).reshape(6))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass(frozen=True)
class LandingProfile:
    """Linear ramp of the distance setpoint from a clearance to a target
    (possibly negative: penetration), holding the chart point and alignment."""

    d_start: float
    d_end: float
    rate: float
    s_d: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))

    def __post_init__(self):
        if self.d_start <= self.d_end:
            raise ValueError("d_start must exceed d_end")
        if self.rate <= 0.0:
            raise ValueError("rate must be positive")
        object.__setattr__(self, "s_d", np.asarray(self.s_d, dtype=float).reshape(2))

    def duration(self) -> float:
        return (self.d_start - self.d_end) / self.rate


def landing_setpoint(t: float, profile: LandingProfile) -> SetpointState:
    """Distance setpoint at time t along the landing ramp; alignment target
    is zero orientation error throughout."""
    ramp = profile.d_start - profile.rate * t
    d_d = max(profile.d_end, ramp)
    rate = -profile.rate if ramp > profile.d_end else 0.0
    rho_d = np.concatenate([profile.s_d, [d_d], np.zeros(3)])
    drho_d = np.array([0.0, 0.0, rate, 0.0, 0.0, 0.0])
    return SetpointState(rho_d=rho_d, drho_d=drho_d, mode="autonomous")


def safety_margin_setpoint(margin: float, s_d=(0.5, 0.5)) -> SetpointState:
    """Hold a positive clearance above the surface (contact-free scanning)."""
    if margin < 0.0:
        raise ValueError("margin must be non-negative")
    rho_d = np.concatenate([np.asarray(s_d, dtype=float).reshape(2), [margin], np.zeros(3)])
    return SetpointState(rho_d=rho_d)


@dataclass(frozen=True)
class ScanPath:
    """Polyline in the chart domain, walked at constant chart speed."""

    waypoints: np.ndarray
    speed: float

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        if len(w) < 1:
            raise ValueError("path needs at least one waypoint")
        if np.any(w < 0.0) or np.any(w > 1.0):
            raise ValueError("waypoints must stay inside the unit square")
        if len(w) > 1 and np.any(np.linalg.norm(np.diff(w, axis=0), axis=1) < 1e-12):
            raise ValueError("consecutive waypoints must be distinct")
        if self.speed <= 0.0:
            raise ValueError("speed must be positive")
        object.__setattr__(self, "waypoints", w)

    def duration(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1))) / self.speed

    def sample(self, t: float):
        """Chart position and velocity at time t (clamped to the ends)."""
        w = self.waypoints
        if len(w) < 2:
            return w[0].copy(), np.zeros(2)
        lengths = np.linalg.norm(np.diff(w, axis=0), axis=1)
        arc = float(np.clip(t, 0.0, self.duration())) * self.speed
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        seg = int(np.searchsorted(cum[1:], arc, side="right"))
        seg = min(seg, len(lengths) - 1)
        frac = (arc - cum[seg]) / lengths[seg]
        pos = w[seg] + frac * (w[seg + 1] - w[seg])
        vel = (w[seg + 1] - w[seg]) / lengths[seg] * self.speed
        if t < 0.0 or t > self.duration():
            vel = np.zeros(2)
        return pos, vel


def raster_path(region, line_spacing: float, speed: float = 0.05) -> ScanPath:
    """Serpentine coverage of a chart rectangle (u0, v0, u1, v1)."""
    u0, v0, u1, v1 = region
    if not (0.0 <= u0 < u1 <= 1.0 and 0.0 <= v0 < v1 <= 1.0):
        raise ValueError("region must be a rectangle inside the unit square")
    if line_spacing <= 0.0:
        raise ValueError("line spacing must be positive")
    vs = [v0]
    while vs[-1] + line_spacing <= v1 + 1e-12:
        vs.append(vs[-1] + line_spacing)
    waypoints = []
    for k, v in enumerate(vs):
        line = [(u0, v), (u1, v)] if k % 2 == 0 else [(u1, v), (u0, v)]
        waypoints.extend(line)
    return ScanPath(np.asarray(waypoints), speed)


def teleop_update(current: SetpointState, delta, dt: float,
                  max_chart_speed: float = DEFAULT_MAX_CHART_SPEED) -> SetpointState:
    """Move the tangential setpoint by an operator delta, rate-limited and
    clamped to the chart; distance and orientation targets are untouched."""
    if current.mode != "teleop":
        raise ValueError("teleop updates require teleop mode")
    delta = np.asarray(delta, dtype=float).reshape(2)
    step = np.linalg.norm(delta)
    limit = max_chart_speed * dt
    if step > limit > 0.0:
        delta = delta * (limit / step)
    rho_d = current.rho_d.copy()
    rho_d[:2] = np.clip(rho_d[:2] + delta, 0.0, 1.0)
    return replace(current, rho_d=rho_d)


class ControllerCache:
    """Mutable scratch state for the high-rate loop: warm-start face hint
    plus a task Jacobian / damping matrix refreshed every `refresh` ticks."""

    def __init__(self, refresh: int = 10):
        self.refresh = max(1, int(refresh))
        self.hint_face = None
        self.jacobian = None
        self.damping = None
        self._age = 0

    def stale(self) -> bool:
        return self.jacobian is None or self._age >= self.refresh

    def touch(self):
        self._age += 1


def control_torque(q, dq, chart: SurfaceChart, chain: SerialChain,
                   setpoint: SetpointState, gains: ImpedanceGains,
                   dynamics=None, cache: ControllerCache | None = None) -> np.ndarray:
    """Joint torques of the surface-coordinate impedance law.

    tau = J_rho^T [K (rho_d - rho) + D (drho_d - drho)] - k_n N dq, where N
    projects onto the null space of J_rho.  `dynamics` (an object with
    mass_matrix(q)) makes the damping design configuration-dependent;
    without it the task inertia is taken as identity.  Passing a
    ControllerCache reuses the Jacobian and damping for a few ticks, which
    is how the 3 kHz loop stays cheap; omit it for the exact per-call path.
    """
    q = np.asarray(q, dtype=float).reshape(N_JOINTS)
    dq = np.asarray(dq, dtype=float).reshape(N_JOINTS)
    gains = hands_on_gains(gains) if setpoint.mode == "hands_on" else gains

    hint = cache.hint_face if cache is not None else None
    probe = forward_kinematics(chain, q)
    pose = surface_pose(chart, probe, hint_face=hint)
    if cache is not None:
        cache.hint_face = pose.face

    if cache is None or cache.stale():
        j_rho = chart_jacobian(chart, probe, pose.face) @ geometric_jacobian(chain, q)
        if dynamics is not None:
            m_inv = np.linalg.inv(dynamics.mass_matrix(q))
            mobility = j_rho @ m_inv @ j_rho.T
            task_inertia = np.linalg.pinv(mobility, hermitian=True)
        else:
            task_inertia = np.eye(6)
        damping = design_damping(gains, task_inertia)
        if cache is not None:
            cache.jacobian = j_rho
            cache.damping = damping
            cache._age = 0
    else:
        j_rho = cache.jacobian
        damping = cache.damping
    if cache is not None:
        cache.touch()

    rho = pose.rho()
    drho = j_rho @ dq
    err = setpoint.rho_d - rho
    derr = setpoint.drho_d - drho
    tau = j_rho.T @ (gains.k_rho @ err + damping @ derr)

    if gains.nullspace_damping > 0.0:
        nullspace = np.eye(N_JOINTS) - np.linalg.pinv(j_rho) @ j_rho
        tau = tau - gains.nullspace_damping * (nullspace @ dq)
    return tau
