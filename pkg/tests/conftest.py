import numpy as np
import pytest

from sonoscan.kinematics import SerialChain
from sonoscan.se3 import RigidTransform, rotvec_to_matrix


def random_rotation(rng):
    return rotvec_to_matrix(rng.normal(size=3))


def random_transform(rng, span=0.5):
    return RigidTransform(random_rotation(rng), rng.uniform(-span, span, 3))


def trans(x, y, z):
    return RigidTransform(np.eye(3), [x, y, z], check=False)


def make_test_chain(flange_probe=None, flange_camera=None):
    """Bench arm used throughout the tests: alternating z/y axes, link
    offsets stacked along z, probe hanging 12 cm off the flange."""
    axes = np.array([
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    lengths = [0.15, 0.10, 0.15, 0.12, 0.13, 0.08, 0.06]
    origins = tuple(trans(0.0, 0.0, l) for l in lengths)
    if flange_probe is None:
        flange_probe = trans(0.0, 0.0, 0.12)
    if flange_camera is None:
        flange_camera = RigidTransform(
            rotvec_to_matrix([0.0, np.deg2rad(12.0), 0.0]), [0.06, 0.0, 0.03])
    return SerialChain(
        joint_axes=axes,
        joint_origins=origins,
        flange_to_probe=flange_probe,
        flange_to_camera=flange_camera,
    )


@pytest.fixture
def chain():
    return make_test_chain()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
