import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from spacearm import rotations as rot
from spacearm.dynamics import kernels as K


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def random_quats(rng, n=200):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def test_quat_to_matrix_matches_scipy(rng):
    for q in random_quats(rng):
        R = rot.quat_to_matrix(q)
        # scipy uses (x, y, z, w) ordering
        Rs = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
        assert np.allclose(R, Rs, atol=1e-12)


def test_matrix_to_quat_round_trip(rng):
    for q in random_quats(rng):
        R = rot.quat_to_matrix(q)
        q2 = rot.matrix_to_quat(R)
        # q and -q are the same rotation; matrix_to_quat fixes w >= 0
        if q[0] < 0:
            q = -q
        assert np.allclose(q, q2, atol=1e-9)


def test_quat_mul_matches_matrix_product(rng):
    qs = random_quats(rng, 40)
    for a, b in zip(qs[:20], qs[20:]):
        Rab = rot.quat_to_matrix(rot.quat_mul(a, b))
        assert np.allclose(Rab, rot.quat_to_matrix(a) @ rot.quat_to_matrix(b),
                           atol=1e-12)


def test_quat_from_rotvec_matches_scipy(rng):
    for v in rng.uniform(-3, 3, (100, 3)):
        q = rot.quat_from_rotvec(v)
        qs = Rotation.from_rotvec(v).as_quat()  # (x, y, z, w)
        qs = np.array([qs[3], qs[0], qs[1], qs[2]])
        if qs[0] * q[0] < 0:
            qs = -qs
        assert np.allclose(q, qs, atol=1e-12)
    # tiny-angle branch
    v = np.array([1e-14, -2e-14, 5e-15])
    q = rot.quat_from_rotvec(v)
    assert np.isclose(np.linalg.norm(q), 1.0)


def test_rotvec_round_trip(rng):
    for v in rng.uniform(-0.99 * np.pi, 0.99 * np.pi, (100, 3)):
        # keep |v| < pi so the log is unique
        if np.linalg.norm(v) >= np.pi:
            continue
        q = rot.quat_from_rotvec(v)
        assert np.allclose(rot.quat_to_rotvec(q), v, atol=1e-9)


def test_euler_xyz_matches_scipy(rng):
    for e in rng.uniform(-np.pi, np.pi, (200, 3)):
        R = rot.euler_xyz_to_matrix(e)
        Rs = Rotation.from_euler("XYZ", e).as_matrix()
        assert np.allclose(R, Rs, atol=1e-12)


def test_matrix_to_euler_round_trip(rng):
    for _ in range(200):
        q = rng.standard_normal(4)
        R = rot.quat_to_matrix(q / np.linalg.norm(q))
        e = rot.matrix_to_euler_xyz(R)
        assert np.allclose(rot.euler_xyz_to_matrix(e), R, atol=1e-9)
        assert np.all(e > -np.pi - 1e-12) and np.all(e <= np.pi + 1e-12)


def test_matrix_to_euler_gimbal():
    e = np.array([0.3, np.pi / 2, 0.0])
    R = rot.euler_xyz_to_matrix(e)
    e2 = rot.matrix_to_euler_xyz(R)
    assert np.allclose(rot.euler_xyz_to_matrix(e2), R, atol=1e-8)


def test_wrap_angle():
    assert rot.wrap_angle(np.pi) == pytest.approx(np.pi)
    assert rot.wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert rot.wrap_angle(3 * np.pi) == pytest.approx(np.pi)
    assert rot.wrap_angle(2 * np.pi) == pytest.approx(0.0)
    assert rot.wrap_angle(np.pi + 0.1) == pytest.approx(-np.pi + 0.1)
    x = np.array([0.5, -0.5, 7.0, -7.0])
    w = rot.wrap_angle(x)
    assert np.allclose(np.sin(w), np.sin(x)) and np.allclose(np.cos(w), np.cos(x))
    assert np.all(w > -np.pi) and np.all(w <= np.pi)


def test_axis_angle_matrix_matches_scipy(rng):
    for _ in range(50):
        ax = rng.standard_normal(3)
        ax /= np.linalg.norm(ax)
        ang = rng.uniform(-np.pi, np.pi)
        R = rot.axis_angle_matrix(ax, ang)
        assert np.allclose(R, Rotation.from_rotvec(ang * ax).as_matrix(),
                           atol=1e-12)


def test_kernel_helpers_match_python(rng):
    """The jit copies of the quaternion helpers agree with the numpy ones."""
    for q in random_quats(rng, 50):
        assert np.allclose(K._quat_to_mat(q), rot.quat_to_matrix(q), atol=1e-14)
    for v in rng.uniform(-2, 2, (50, 3)):
        assert np.allclose(K._rotvec_to_quat(v[0], v[1], v[2]),
                           rot.quat_from_rotvec(v), atol=1e-12)
    qs = random_quats(rng, 20)
    for a, b in zip(qs[:10], qs[10:]):
        assert np.allclose(K._quat_mul(a, b), rot.quat_mul(a, b), atol=1e-14)
