import numpy as np
import pytest

from sonoscan.chart import build_chart, chart_jacobian, surface_pose
from sonoscan.control import (
    ControllerCache,
    ImpedanceGains,
    LandingProfile,
    ScanPath,
    SetpointState,
    control_torque,
    design_damping,
    hands_on_gains,
    landing_setpoint,
    raster_path,
    safety_margin_setpoint,
    teleop_update,
)
from sonoscan.errors import IndefiniteInertia
from sonoscan.kinematics import forward_kinematics, geometric_jacobian
from sonoscan.mesh import grid_mesh

from conftest import make_test_chain


@pytest.fixture(scope="module")
def rig():
    """Test chain bent over a flat chart, probe pointing down."""
    chain = make_test_chain()
    q0 = np.array([0.0, np.pi / 3, 0.0, np.pi / 3, 0.0, np.pi / 3, 0.0])
    tip = forward_kinematics(chain, q0).translation
    xs = np.linspace(tip[0] - 0.1, tip[0] + 0.1, 11)
    ys = np.linspace(tip[1] - 0.1, tip[1] + 0.1, 11)
    mesh = grid_mesh(xs, ys, lambda x, y: np.full_like(x, tip[2] - 0.02))
    return build_chart(mesh), chain, q0


def test_design_damping_decoupled():
    gains = ImpedanceGains(np.array([100.0, 200.0, 300.0, 4.0, 5.0, 6.0]),
                           damping_ratio=0.5)
    d = design_damping(gains, np.eye(6))
    expect = np.diag(2.0 * 0.5 * np.sqrt([100.0, 200.0, 300.0, 4.0, 5.0, 6.0]))
    assert np.allclose(d, expect, atol=1e-10)


def test_design_damping_scaled_inertia():
    gains = ImpedanceGains(np.eye(6), damping_ratio=0.7)
    d = design_damping(gains, np.diag([2.0, 2.0, 2.0, 2.0, 2.0, 2.0]),
                       mode_floor=0.0)
    assert np.allclose(np.diag(d), 2.0 * 0.7 * np.sqrt(2.0), atol=1e-10)
    assert np.allclose(d, np.diag(np.diag(d)), atol=1e-10)


def test_design_damping_random_spd(rng):
    gains_k = None
    for _ in range(100):
        a = rng.normal(size=(6, 6))
        k = a @ a.T + 0.5 * np.eye(6)
        b = rng.normal(size=(6, 6))
        lam = b @ b.T + 0.1 * np.eye(6)
        d = design_damping(ImpedanceGains(k), lam)
        assert np.linalg.norm(d - d.T) < 1e-10
        assert np.linalg.eigvalsh(d).min() > 0.0


def test_design_damping_rejects_indefinite():
    gains = ImpedanceGains.default()
    bad = np.diag([1.0, 1.0, -0.5, 1.0, 1.0, 1.0])
    with pytest.raises(IndefiniteInertia):
        design_damping(gains, bad)


def test_hands_on_gains_idempotent_and_psd():
    base = ImpedanceGains.default()
    ho = hands_on_gains(base)
    again = hands_on_gains(ho)
    assert np.allclose(ho.k_rho, again.k_rho)
    assert np.allclose(ho.k_rho[:2, :], 0.0)
    assert np.allclose(ho.k_rho[:, :2], 0.0)
    assert np.allclose(ho.k_rho[2:, 2:], base.k_rho[2:, 2:])
    assert np.linalg.eigvalsh(ho.k_rho).min() >= -1e-12


def test_equilibrium_torque_is_exactly_zero(rig):
    chart, chain, q0 = rig
    pose = surface_pose(chart, forward_kinematics(chain, q0))
    setpoint = SetpointState(rho_d=pose.rho())
    tau = control_torque(q0, np.zeros(7), chart, chain, setpoint,
                         ImpedanceGains.default())
    assert np.all(tau == 0.0)


def test_pure_distance_error_torque(rig):
    chart, chain, q0 = rig
    probe = forward_kinematics(chain, q0)
    pose = surface_pose(chart, probe)
    gains = ImpedanceGains.default()
    e_d = 0.004
    rho_d = pose.rho()
    rho_d[2] += e_d
    tau = control_torque(q0, np.zeros(7), chart, chain, SetpointState(rho_d), gains)
    j_rho = chart_jacobian(chart, probe, pose.face) @ geometric_jacobian(chain, q0)
    expect = j_rho.T @ np.array([0.0, 0.0, gains.k_rho[2, 2] * e_d, 0.0, 0.0, 0.0])
    assert np.allclose(tau, expect, atol=1e-9)


def test_torque_matches_standalone_formula(rig, rng):
    # independent transcription of the law, assembled step by step
    chart, chain, q0 = rig
    gains = ImpedanceGains.default()
    for _ in range(10):
        q = q0 + rng.uniform(-0.03, 0.03, 7)
        dq = rng.uniform(-0.1, 0.1, 7)
        rho_d = surface_pose(chart, forward_kinematics(chain, q)).rho() \
            + rng.uniform(-0.01, 0.01, 6)
        drho_d = rng.uniform(-0.01, 0.01, 6)
        setpoint = SetpointState(rho_d, drho_d)
        tau = control_torque(q, dq, chart, chain, setpoint, gains)

        probe = forward_kinematics(chain, q)
        pose = surface_pose(chart, probe)
        j = chart_jacobian(chart, probe, pose.face) @ geometric_jacobian(chain, q)
        err = rho_d - pose.rho()
        derr = drho_d - j @ dq
        ref = j.T @ (gains.k_rho @ err + design_damping(gains, np.eye(6)) @ derr)
        ref -= gains.nullspace_damping * ((np.eye(7) - np.linalg.pinv(j) @ j) @ dq)
        assert np.allclose(tau, ref, atol=1e-9)


def test_torque_linear_in_error(rig):
    chart, chain, q0 = rig
    gains = ImpedanceGains.default()
    pose = surface_pose(chart, forward_kinematics(chain, q0))
    e = np.array([0.01, -0.02, 0.005, 0.02, -0.01, 0.015])
    tau1 = control_torque(q0, np.zeros(7), chart, chain,
                          SetpointState(pose.rho() + e), gains)
    tau2 = control_torque(q0, np.zeros(7), chart, chain,
                          SetpointState(pose.rho() + 2.0 * e), gains)
    assert np.allclose(tau2, 2.0 * tau1, atol=1e-8)


def test_cache_returns_same_torque(rig):
    chart, chain, q0 = rig
    gains = ImpedanceGains.default()
    pose = surface_pose(chart, forward_kinematics(chain, q0))
    setpoint = SetpointState(pose.rho() + [0.0, 0.0, 0.003, 0.0, 0.0, 0.0])
    dq = np.full(7, 0.01)
    fresh = control_torque(q0, dq, chart, chain, setpoint, gains)
    cache = ControllerCache(refresh=10)
    cached_first = control_torque(q0, dq, chart, chain, setpoint, gains, cache=cache)
    cached_second = control_torque(q0, dq, chart, chain, setpoint, gains, cache=cache)
    assert np.allclose(fresh, cached_first, atol=1e-12)
    assert np.allclose(fresh, cached_second, atol=1e-12)


def test_landing_setpoint_schedule():
    profile = LandingProfile(d_start=0.02, d_end=-0.003, rate=0.002)
    assert landing_setpoint(0.0, profile).rho_d[2] == 0.02
    sp = landing_setpoint(5.0, profile)
    assert np.isclose(sp.rho_d[2], 0.010)
    assert np.isclose(sp.drho_d[2], -0.002)
    assert np.allclose(sp.rho_d[3:], 0.0)
    late = landing_setpoint(1e9, profile)
    assert late.rho_d[2] == -0.003
    assert late.drho_d[2] == 0.0
    assert np.isclose(profile.duration(), 11.5)


def test_safety_margin_setpoint():
    sp = safety_margin_setpoint(0.005)
    assert sp.rho_d[2] == 0.005
    assert np.allclose(sp.drho_d, 0.0)
    zero = safety_margin_setpoint(0.0)  # boundary case: contact establishment
    assert zero.rho_d[2] == 0.0


def test_raster_unit_square():
    path = raster_path((0.0, 0.0, 1.0, 1.0), 0.5)
    assert len(path.waypoints) == 6
    assert np.allclose(path.waypoints[:, 1], [0.0, 0.0, 0.5, 0.5, 1.0, 1.0])
    assert np.allclose(path.waypoints[:2, 0], [0.0, 1.0])
    assert np.allclose(path.waypoints[2:4, 0], [1.0, 0.0])  # serpentine turn


def test_raster_single_line():
    path = raster_path((0.1, 0.4, 0.9, 0.5), line_spacing=0.2)
    assert len(path.waypoints) == 2
    assert np.allclose(path.waypoints[:, 1], 0.4)


def test_raster_waypoints_inside_region(rng):
    for _ in range(50):
        u0, v0 = rng.uniform(0.0, 0.4, 2)
        u1, v1 = rng.uniform(0.6, 1.0, 2)
        spacing = rng.uniform(0.02, 0.5)
        path = raster_path((u0, v0, u1, v1), spacing)
        w = path.waypoints
        assert np.all(w[:, 0] >= u0 - 1e-12) and np.all(w[:, 0] <= u1 + 1e-12)
        assert np.all(w[:, 1] >= v0 - 1e-12) and np.all(w[:, 1] <= v1 + 1e-12)


def test_scan_path_sampling():
    path = ScanPath(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.5]]), speed=0.5)
    assert np.isclose(path.duration(), 3.0)
    pos, vel = path.sample(1.0)
    assert np.allclose(pos, [0.5, 0.0])
    assert np.allclose(vel, [0.5, 0.0])
    pos, vel = path.sample(2.5)
    assert np.allclose(pos, [1.0, 0.25])
    assert np.allclose(vel, [0.0, 0.5])
    pos, vel = path.sample(99.0)
    assert np.allclose(pos, [1.0, 0.5])
    assert np.allclose(vel, 0.0)


def test_teleop_zero_input_noop():
    sp = SetpointState(np.array([0.5, 0.5, 0.005, 0, 0, 0]), mode="teleop")
    out = teleop_update(sp, [0.0, 0.0], dt=0.01)
    assert np.allclose(out.rho_d, sp.rho_d)


def test_teleop_clamps_at_boundary():
    sp = SetpointState(np.array([1.0, 0.5, 0.005, 0, 0, 0]), mode="teleop")
    out = teleop_update(sp, [0.001, 0.0], dt=0.01)
    assert out.rho_d[0] == 1.0


def test_teleop_accumulates_within_rate_limit():
    sp = SetpointState(np.array([0.2, 0.2, 0.005, 0, 0, 0]), mode="teleop")
    dt = 0.01
    total = np.zeros(2)
    for _ in range(100):
        delta = np.array([0.001, 0.0005])  # well under 0.2 * dt
        sp = teleop_update(sp, delta, dt=dt)
        total += delta
    assert np.allclose(sp.rho_d[:2], np.array([0.2, 0.2]) + total, atol=1e-12)


def test_teleop_rate_limit_applies():
    sp = SetpointState(np.array([0.2, 0.2, 0.005, 0, 0, 0]), mode="teleop")
    out = teleop_update(sp, [1.0, 0.0], dt=0.01, max_chart_speed=0.2)
    assert np.isclose(out.rho_d[0] - 0.2, 0.002)


def test_teleop_requires_teleop_mode():
    sp = SetpointState(np.zeros(6), mode="autonomous")
    with pytest.raises(ValueError):
        teleop_update(sp, [0.01, 0.0], dt=0.01)


def test_teleop_preserves_distance_and_orientation():
    sp = SetpointState(np.array([0.4, 0.4, 0.007, 0.1, -0.1, 0.0]), mode="teleop")
    out = teleop_update(sp, [0.05, -0.02], dt=1.0)
    assert np.allclose(out.rho_d[2:], sp.rho_d[2:])
