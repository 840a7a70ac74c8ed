import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightsq.superquadric import (
    Superquadric,
    euler_xyz_from_quat,
    quat_from_euler_xyz,
    quat_from_rotvec,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    _signed_pow,
)


def random_superquadric(rng):
    eps = rng.uniform(0.3, 1.7, 2)
    a = rng.uniform(0.1, 0.6, 3)
    v = rng.normal(size=3)
    v = v / np.linalg.norm(v) * rng.uniform(0, np.pi)
    t = rng.uniform(-0.3, 0.3, 3)
    return Superquadric(eps[0], eps[1], a, quat_from_rotvec(v), t)


unit_quats = st.tuples(
    *[st.floats(-1, 1, allow_nan=False) for _ in range(4)]
).filter(lambda q: np.linalg.norm(q) > 1e-3).map(
    lambda q: quat_normalize(np.array(q))
)


class TestQuaternions:
    def test_normalize_canonical_sign(self):
        q = quat_normalize(np.array([-1.0, 0.0, 1.0, 0.0]))
        assert q[0] >= 0
        assert np.isclose(np.linalg.norm(q), 1.0)

    def test_normalize_rejects_zero(self):
        with pytest.raises(ValueError):
            quat_normalize(np.zeros(4))

    def test_identity_matrix(self):
        assert np.allclose(quat_to_matrix(np.array([1.0, 0, 0, 0])), np.eye(3))

    def test_ninety_degree_z(self):
        q = quat_from_rotvec(np.array([0.0, 0.0, np.pi / 2]))
        r = quat_to_matrix(q)
        assert np.allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-12)

    @given(unit_quats, unit_quats)
    @settings(max_examples=50, deadline=None)
    def test_multiply_composes_rotations(self, q1, q2):
        r = quat_to_matrix(quat_multiply(q1, q2))
        assert np.allclose(r, quat_to_matrix(q1) @ quat_to_matrix(q2), atol=1e-9)

    @given(unit_quats)
    @settings(max_examples=50, deadline=None)
    def test_matrix_is_rotation(self, q):
        r = quat_to_matrix(q)
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-9)
        assert np.isclose(np.linalg.det(r), 1.0)

    @given(unit_quats)
    @settings(max_examples=50, deadline=None)
    def test_euler_round_trip(self, q):
        e = euler_xyz_from_quat(q)
        q2 = quat_from_euler_xyz(e)
        # arcsin loses precision near gimbal lock, hence the looser tolerance
        assert np.allclose(quat_to_matrix(q), quat_to_matrix(q2), atol=1e-6)

    def test_euler_convention(self):
        # R = Rx @ Ry @ Rz by construction
        e = np.array([0.3, -0.7, 1.1])
        def rx(a):
            c, s = np.cos(a), np.sin(a)
            return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
        def ry(a):
            c, s = np.cos(a), np.sin(a)
            return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
        def rz(a):
            c, s = np.cos(a), np.sin(a)
            return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        expected = rx(e[0]) @ ry(e[1]) @ rz(e[2])
        assert np.allclose(quat_to_matrix(quat_from_euler_xyz(e)), expected, atol=1e-12)


class TestSignedPow:
    def test_preserves_sign(self):
        assert _signed_pow(np.array([-8.0]), 1 / 3)[0] == pytest.approx(-2.0)
        assert _signed_pow(np.array([8.0]), 1 / 3)[0] == pytest.approx(2.0)

    def test_zero(self):
        assert _signed_pow(np.array([0.0]), 0.5)[0] == 0.0


class TestValidation:
    def test_eps_bounds(self):
        with pytest.raises(ValueError):
            Superquadric(0.05, 1.0, np.ones(3))
        with pytest.raises(ValueError):
            Superquadric(1.0, 2.5, np.ones(3))

    def test_positive_scales(self):
        with pytest.raises(ValueError):
            Superquadric(1.0, 1.0, np.array([0.1, -0.2, 0.3]))


class TestImplicit:
    def test_ellipsoid_formula(self):
        # at eps1 = eps2 = 1 the implicit reduces to the ellipsoid quadric
        rng = np.random.default_rng(5)
        a = np.array([0.4, 0.3, 0.5])
        sq = Superquadric(1.0, 1.0, a)
        pts = rng.uniform(-0.8, 0.8, (200, 3))
        expected = np.sum((pts / a) ** 2, axis=1)
        assert np.allclose(sq.implicit(pts), expected, atol=1e-12)

    def test_surface_value_one(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            sq = random_superquadric(rng)
            verts, _ = sq.tessellate(12)
            assert np.allclose(sq.implicit(verts), 1.0, atol=1e-9)

    def test_contains_matches_implicit(self):
        rng = np.random.default_rng(7)
        sq = random_superquadric(rng)
        pts = rng.uniform(-1, 1, (500, 3))
        assert np.array_equal(sq.contains(pts), sq.implicit(pts) < 1.0)


class TestSrdf:
    def test_sphere_exact(self):
        rng = np.random.default_rng(8)
        c = np.array([0.1, -0.2, 0.05])
        sq = Superquadric.sphere(0.4, c)
        pts = rng.uniform(-1, 1, (5000, 3))
        expected = np.linalg.norm(pts - c, axis=1) - 0.4
        assert np.max(np.abs(sq.srdf(pts) - expected)) < 1e-9

    def test_origin_limit(self):
        sq = Superquadric(0.7, 1.3, np.array([0.5, 0.2, 0.4]))
        assert sq.srdf(np.zeros(3)) == pytest.approx(-0.2)

    def test_radial_identity(self):
        # along any ray from the center, srdf differences equal the travelled
        # distance: srdf(c + r*d) = r - r_surface(d)
        rng = np.random.default_rng(9)
        sq = random_superquadric(rng)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        radii = rng.uniform(0.05, 1.5, 50)
        pts = sq.translation + np.outer(radii, d)
        vals = sq.srdf(pts)
        assert np.allclose(vals - radii, vals[0] - radii[0], atol=1e-9)

    def test_sign_matches_implicit(self):
        rng = np.random.default_rng(10)
        sq = random_superquadric(rng)
        pts = rng.uniform(-1, 1, (1000, 3))
        inside = sq.implicit(pts) < 1
        vals = sq.srdf(pts)
        assert np.all((vals < 0) == inside)

    def test_truncation(self):
        sq = Superquadric.sphere(0.3)
        pts = np.array([[0.9, 0, 0], [0.0, 0, 0], [0.31, 0, 0]])
        out = sq.srdf_truncated(pts, 0.05)
        assert np.allclose(out, [0.05, -0.05, 0.01], atol=1e-9)


class TestTessellation:
    def test_watertight(self):
        from lightsq.mesh import is_watertight

        sq = Superquadric(0.5, 1.4, np.array([0.3, 0.25, 0.5]))
        verts, tris = sq.tessellate(10)
        assert is_watertight(tris)

    def test_counts(self):
        sq = Superquadric.sphere(1.0)
        verts, tris = sq.tessellate(8)
        m, n = 8, 16
        assert len(verts) == (m - 1) * n + 2
        # Euler characteristic of a sphere: V - E + F = 2 with E = 3F/2
        assert len(verts) - 1.5 * len(tris) + len(tris) == 2

    def test_min_subdivisions(self):
        with pytest.raises(ValueError):
            Superquadric.sphere(1.0).tessellate(1)


class TestGeometryHelpers:
    def test_aabb_contains_surface(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            sq = random_superquadric(rng)
            lo, hi = sq.world_aabb()
            verts, _ = sq.tessellate(14)
            assert np.all(verts >= lo - 1e-9) and np.all(verts <= hi + 1e-9)

    def test_aabb_margin(self):
        sq = Superquadric.sphere(0.2)
        lo, hi = sq.world_aabb(margin=0.1)
        assert np.allclose(hi - lo, 0.6)

    def test_to_local_world_inverse(self):
        rng = np.random.default_rng(12)
        sq = random_superquadric(rng)
        pts = rng.uniform(-1, 1, (100, 3))
        assert np.allclose(sq.to_world(sq.to_local(pts)), pts, atol=1e-12)

    def test_volume_against_voxel_count(self):
        sq = Superquadric(0.5, 1.3, np.array([0.35, 0.25, 0.45]))
        n = 128
        axis = np.linspace(-1 + 1 / n, 1 - 1 / n, n)
        xs, ys, zs = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)
        approx = np.count_nonzero(sq.contains(pts)) * (2 / n) ** 3
        assert sq.volume() == pytest.approx(approx, rel=0.02)

    def test_sphere_volume(self):
        sq = Superquadric.sphere(0.5)
        assert sq.volume() == pytest.approx(4 / 3 * np.pi * 0.125, rel=1e-9)
