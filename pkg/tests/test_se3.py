import numpy as np
import pytest

from sonoscan.se3 import (
    RigidTransform,
    matrix_to_quat,
    matrix_to_rotvec,
    quat_left_matrix,
    quat_mul,
    quat_right_matrix,
    quat_to_matrix,
    rotation_about_line,
    rotvec_to_matrix,
)

from conftest import random_transform


def test_identity_compose_is_neutral(rng):
    t = random_transform(rng)
    eye = RigidTransform.identity()
    assert eye.compose(t).isclose(t, atol=1e-15)
    assert t.compose(eye).isclose(t, atol=1e-15)


def test_pure_translations_add():
    a = RigidTransform(np.eye(3), [0.0, 0.0, 0.1])
    b = RigidTransform(np.eye(3), [0.0, 0.2, 0.0])
    assert np.allclose(a.compose(b).translation, [0.0, 0.2, 0.1])


def test_compose_matches_homogeneous_matmul(rng):
    # oracle: plain 4x4 homogeneous matrix products
    for _ in range(100):
        t_bp = random_transform(rng)
        t_bc = random_transform(rng)
        t_co = random_transform(rng)
        t_po = t_bp.invert().compose(t_bc).compose(t_co)
        lhs = t_bp.as_matrix() @ t_po.as_matrix()
        rhs = t_bc.as_matrix() @ t_co.as_matrix()
        assert np.allclose(lhs, rhs, atol=1e-9)


def test_invert_roundtrip(rng):
    for _ in range(100):
        t = random_transform(rng)
        assert t.invert().invert().isclose(t, atol=1e-12)
        np.testing.assert_allclose(
            t.invert().as_matrix(), np.linalg.inv(t.as_matrix()), atol=1e-12)


def test_invert_trivia():
    eye = RigidTransform.identity()
    assert eye.invert().isclose(eye)
    up = RigidTransform(np.eye(3), [0.0, 0.0, 0.3])
    assert np.allclose(up.invert().translation, [0.0, 0.0, -0.3])


def test_compose_invert_is_identity(rng):
    for _ in range(50):
        t = random_transform(rng)
        assert t.compose(t.invert()).isclose(RigidTransform.identity(), atol=1e-9)


def test_compose_associative(rng):
    for _ in range(50):
        a, b, c = (random_transform(rng) for _ in range(3))
        left = a.compose(b).compose(c)
        right = a.compose(b.compose(c))
        assert left.isclose(right, atol=1e-9)


def test_rejects_non_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 2.0, np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))  # det = -1


def test_rotvec_roundtrip(rng):
    for _ in range(200):
        rv = rng.normal(size=3) * rng.uniform(0.0, 3.0)
        r = rotvec_to_matrix(rv)
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
        back = matrix_to_rotvec(r)
        angle = np.linalg.norm(rv)
        if angle > np.pi:  # log map returns the short representative
            rv = rv * (1.0 - 2.0 * np.pi / angle)
        assert np.allclose(back, rv, atol=1e-8)


def test_rotvec_near_pi():
    rv = np.array([np.pi - 1e-9, 0.0, 0.0])
    back = matrix_to_rotvec(rotvec_to_matrix(rv))
    assert np.allclose(np.abs(back), rv, atol=1e-6)


def test_quat_matrix_roundtrip(rng):
    for _ in range(200):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        if q[0] < 0:
            q = -q
        r = quat_to_matrix(q)
        assert np.allclose(matrix_to_quat(r), q, atol=1e-10)


def test_quat_product_matrices(rng):
    for _ in range(50):
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert np.allclose(quat_left_matrix(a) @ b, quat_mul(a, b), atol=1e-12)
        assert np.allclose(quat_right_matrix(b) @ a, quat_mul(a, b), atol=1e-12)


def test_rotation_about_line_fixes_the_line():
    pivot = np.array([0.1, -0.2, 0.3])
    axis = np.array([0.0, 0.0, 1.0])
    t = rotation_about_line(pivot, axis, 1.2)
    assert np.allclose(t.apply(pivot), pivot, atol=1e-12)
    assert np.allclose(t.apply(pivot + axis), pivot + axis, atol=1e-12)
