import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from sonoscan.kinematics import JointState, SerialChain, forward_kinematics, geometric_jacobian
from sonoscan.se3 import RigidTransform

from conftest import make_test_chain, trans


def naive_fk_matrix(chain, q, frame="probe"):
    """Straight-line oracle: chain the elementary 4x4 matrices by hand."""
    m = np.eye(4)
    for k in range(7):
        off = np.eye(4)
        off[:3, :3] = chain.joint_origins[k].rotation
        off[:3, 3] = chain.joint_origins[k].translation
        rot = np.eye(4)
        rot[:3, :3] = Rotation.from_rotvec(chain.joint_axes[k] * q[k]).as_matrix()
        m = m @ off @ rot
    tool = np.eye(4)
    tool[:3, :3] = chain.tool_offset(frame).rotation
    tool[:3, 3] = chain.tool_offset(frame).translation
    return m @ tool


def test_zero_config_stacks_offsets(chain):
    pose = forward_kinematics(chain, np.zeros(7), frame="flange")
    total = sum(o.translation[2] for o in chain.joint_origins)
    assert np.allclose(pose.translation, [0.0, 0.0, total], atol=1e-12)
    assert np.allclose(pose.rotation, np.eye(3), atol=1e-12)


def test_final_offset_only():
    origins = tuple(trans(0, 0, 0) for _ in range(6)) + (trans(0, 0, 0.3),)
    chain = SerialChain(
        joint_axes=np.tile([0.0, 0.0, 1.0], (7, 1)),
        joint_origins=origins,
        flange_to_probe=RigidTransform.identity(),
        flange_to_camera=RigidTransform.identity(),
    )
    pose = forward_kinematics(chain, np.zeros(7))
    assert np.allclose(pose.translation, [0.0, 0.0, 0.3], atol=1e-15)


def test_planar_two_link():
    # joints 1-2 about z in the xy-plane, all others locked at identity
    l1, l2 = 0.3, 0.2
    origins = (trans(0, 0, 0), trans(l1, 0, 0)) + tuple(trans(0, 0, 0) for _ in range(5))
    chain = SerialChain(
        joint_axes=np.tile([0.0, 0.0, 1.0], (7, 1)),
        joint_origins=origins,
        flange_to_probe=trans(l2, 0, 0),
        flange_to_camera=RigidTransform.identity(),
    )
    q = np.zeros(7)
    q[0] = np.pi / 2
    tip = forward_kinematics(chain, q).translation
    assert np.allclose(tip, [0.0, l1 + l2, 0.0], atol=1e-12)
    q[1] = np.pi / 2
    tip = forward_kinematics(chain, q).translation
    assert np.allclose(tip, [-l2, l1, 0.0], atol=1e-12)


def test_random_configs_match_naive_chaining(chain, rng):
    for _ in range(50):
        q = rng.uniform(-2.0, 2.0, 7)
        for frame in ("probe", "camera", "flange"):
            ours = forward_kinematics(chain, q, frame).as_matrix()
            assert np.allclose(ours, naive_fk_matrix(chain, q, frame), atol=1e-10)


def test_fk_inverse_closes(chain, rng):
    for _ in range(20):
        q = rng.uniform(-2.0, 2.0, 7)
        pose = forward_kinematics(chain, q)
        assert pose.compose(pose.invert()).isclose(RigidTransform.identity(), atol=1e-9)


def test_single_joint_column():
    # tip at radius r on the x-axis of a z-joint: column is (0, r, 0, 0, 0, 1)
    r = 0.25
    origins = tuple(trans(0, 0, 0) for _ in range(7))
    chain = SerialChain(
        joint_axes=np.tile([0.0, 0.0, 1.0], (7, 1)),
        joint_origins=origins,
        flange_to_probe=trans(r, 0, 0),
        flange_to_camera=RigidTransform.identity(),
    )
    jac = geometric_jacobian(chain, np.zeros(7))
    assert np.allclose(jac[:, 0], [0.0, r, 0.0, 0.0, 0.0, 1.0], atol=1e-12)


def test_angular_rows_are_axes_at_zero(chain):
    jac = geometric_jacobian(chain, np.zeros(7))
    # at q = 0 no offset rotates, so world axes equal the declared local axes
    assert np.allclose(jac[3:, :].T, chain.joint_axes, atol=1e-12)


def test_jacobian_matches_finite_differences(chain, rng):
    h = 1e-6
    for _ in range(100):
        q = rng.uniform(-2.0, 2.0, 7)
        jac = geometric_jacobian(chain, q)
        fd = np.zeros((6, 7))
        for k in range(7):
            dq = np.zeros(7)
            dq[k] = h
            hi = forward_kinematics(chain, q + dq)
            lo = forward_kinematics(chain, q - dq)
            fd[:3, k] = (hi.translation - lo.translation) / (2 * h)
            rel = hi.rotation @ lo.rotation.T
            fd[3:, k] = Rotation.from_matrix(rel).as_rotvec() / (2 * h)
        assert np.allclose(jac, fd, atol=1e-5)


def test_joint_limits_default_and_check(chain):
    assert np.allclose(chain.joint_limits[:, 1], np.deg2rad(170.0))
    ok = JointState(np.zeros(7))
    assert ok.within_limits(chain)
    bad = JointState(np.full(7, 3.1))
    assert not bad.within_limits(chain)


def test_axes_must_be_unit():
    with pytest.raises(ValueError):
        SerialChain(
            joint_axes=np.tile([0.0, 0.0, 1.1], (7, 1)),
            joint_origins=tuple(trans(0, 0, 0.1) for _ in range(7)),
            flange_to_probe=RigidTransform.identity(),
            flange_to_camera=RigidTransform.identity(),
        )


def test_chain_requires_seven_joints():
    with pytest.raises(ValueError):
        SerialChain(
            joint_axes=np.tile([0.0, 0.0, 1.0], (7, 1)),
            joint_origins=tuple(trans(0, 0, 0.1) for _ in range(6)),
            flange_to_probe=RigidTransform.identity(),
            flange_to_camera=RigidTransform.identity(),
        )
