import itertools

import numpy as np
import pytest

from lightsq.errors import EmptyUnion
from lightsq.grid import TsdfGrid
from lightsq.metrics import (
    MetricReport,
    _ray_hits,
    chamfer,
    emd,
    evaluate,
    overlap_rate,
    scan_points,
    voxel_iou,
)
from lightsq.pipeline import Abstraction, LabeledSuperquadric
from lightsq.superquadric import Superquadric

from shapes import sphere


def make_abstraction(sqs, resolution=32):
    prims = [
        LabeledSuperquadric(sq, id=i, stage="Main") for i, sq in enumerate(sqs)
    ]
    g = TsdfGrid.empty(resolution)
    return Abstraction(prims, resolution, g.tau, 1.0, np.zeros(3), {})


class TestChamfer:
    def test_against_quadratic_oracle(self):
        rng = np.random.default_rng(17)
        p = rng.uniform(-1, 1, (100, 3))
        q = rng.uniform(-1, 1, (100, 3))
        d = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2)
        expected = 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())
        assert abs(chamfer(p, q) - expected) < 1e-12

    def test_identical_sets(self):
        p = np.random.default_rng(0).uniform(size=(50, 3))
        assert chamfer(p, p.copy()) == 0.0

    def test_hand_case(self):
        p = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        q = np.array([[0.0, 0, 0], [2.0, 0, 0]])
        # p->q means (0 + 1), q->p means (0 + 1); total / 2 sides / 2 points
        assert chamfer(p, q) == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            chamfer(np.zeros((0, 3)), np.zeros((3, 3)))


class TestEmd:
    def test_eight_points_is_permutation_minimum(self):
        rng = np.random.default_rng(23)
        p = rng.uniform(-1, 1, (8, 3))
        q = rng.uniform(-1, 1, (8, 3))
        d = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2)
        best = min(
            sum(d[i, perm[i]] for i in range(8))
            for perm in itertools.permutations(range(8))
        )
        assert emd(p, q) == pytest.approx(best / 8, abs=1e-12)

    def test_identical_sets_zero(self):
        p = np.random.default_rng(1).uniform(size=(2000, 3))
        assert emd(p, p.copy(), n=256) == 0.0

    def test_translation_lower_bound(self):
        # moving a cloud by t costs at least |t| per point under any matching
        rng = np.random.default_rng(2)
        p = rng.uniform(-1, 1, (64, 3))
        q = p + np.array([0.5, 0.0, 0.0])
        assert emd(p, q) >= 0.5 - 1e-9

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            emd(np.zeros((3, 3)), np.zeros((0, 3)))


class TestOverlapRate:
    def test_single_primitive_is_one(self):
        a = make_abstraction([Superquadric.sphere(0.4)])
        assert overlap_rate(a, TsdfGrid.empty(32)) == pytest.approx(1.0)

    def test_duplicate_primitives_is_two(self):
        a = make_abstraction([Superquadric.sphere(0.4), Superquadric.sphere(0.4)])
        assert overlap_rate(a, TsdfGrid.empty(32)) == pytest.approx(2.0)

    def test_half_overlap_is_four_thirds(self):
        # on a 4-voxel-per-axis lattice the slabs cover whole voxel layers:
        # each box covers 2 layers, they share 1, so 64/48 = 4/3
        b1 = Superquadric(0.1, 0.1, np.array([0.5, 2.0, 2.0]), translation=np.array([-0.5, 0, 0]))
        b2 = Superquadric(0.1, 0.1, np.array([0.5, 2.0, 2.0]), translation=np.array([0.0, 0, 0]))
        a = make_abstraction([b1, b2], resolution=4)
        assert overlap_rate(a, TsdfGrid.empty(4)) == pytest.approx(4.0 / 3.0)

    def test_empty_union_raises(self):
        a = make_abstraction([Superquadric.sphere(0.01, (10, 10, 10))])
        with pytest.raises(EmptyUnion):
            overlap_rate(a, TsdfGrid.empty(8))


class TestVoxelIou:
    def test_matching_sphere(self):
        g = TsdfGrid.from_sdf(lambda p: sphere(p, radius=0.4), 48)
        a = make_abstraction([Superquadric.sphere(0.4)], 48)
        assert voxel_iou(g, a) > 0.99

    def test_disjoint(self):
        g = TsdfGrid.from_sdf(lambda p: sphere(p, (-0.5, 0, 0), 0.2), 32)
        a = make_abstraction([Superquadric.sphere(0.2, (0.5, 0, 0))], 32)
        assert voxel_iou(g, a) == 0.0

    def test_empty_abstraction(self):
        g = TsdfGrid.from_sdf(lambda p: sphere(p, radius=0.4), 16)
        a = make_abstraction([], 16)
        assert voxel_iou(g, a) == 0.0

    def test_half_volume_sphere(self):
        g = TsdfGrid.from_sdf(lambda p: sphere(p, radius=0.4), 64)
        a = make_abstraction([Superquadric.sphere(0.4 / 2 ** (1 / 3))], 64)
        assert voxel_iou(g, a) == pytest.approx(0.5, abs=0.03)


class TestScan:
    def test_first_crossing_only(self):
        values = np.ones((5, 2, 2), dtype=np.float32)
        values[1] = -1.0
        values[3] = -1.0
        coords = np.arange(5, dtype=np.float64)
        hits = _ray_hits(values, coords, axis=0, reverse=False)
        assert np.allclose(hits[:, 0], 0.5)
        hits_r = _ray_hits(values, coords, axis=0, reverse=True)
        assert np.allclose(hits_r[:, 0], 3.5)

    def test_sphere_scan_radius(self):
        g = TsdfGrid.from_sdf(lambda p: sphere(p, radius=0.4), 64)
        pts = scan_points(g, 2048)
        radii = np.linalg.norm(pts, axis=1)
        assert len(pts) == 2048
        assert np.all(np.abs(radii - 0.4) < 2 * g.voxel_size)

    def test_abstraction_scan_matches_grid_scan(self):
        g = TsdfGrid.from_sdf(lambda p: sphere(p, radius=0.4), 48)
        a = make_abstraction([Superquadric.sphere(0.4)], 48)
        cd = chamfer(scan_points(g, 2048), scan_points(a, 2048, like=g))
        assert cd < g.voxel_size

    def test_empty_field(self):
        assert len(scan_points(TsdfGrid.empty(16))) == 0

    def test_deterministic(self):
        g = TsdfGrid.from_sdf(lambda p: sphere(p, radius=0.4), 32)
        assert np.array_equal(scan_points(g, 512, seed=3), scan_points(g, 512, seed=3))


class TestEvaluate:
    def test_self_abstraction(self):
        g = TsdfGrid.from_sdf(lambda p: sphere(p, radius=0.4), 48)
        a = make_abstraction([Superquadric.sphere(0.4)], 48)
        r = evaluate(a, g)
        assert r.cd < g.voxel_size
        assert r.emd < 3 * g.voxel_size
        assert r.voxel_iou > 0.99
        assert r.overlap_rate == pytest.approx(1.0)
        assert r.n_primitives == 1

    def test_undefined_overlap(self):
        g = TsdfGrid.from_sdf(lambda p: sphere(p, radius=0.3), 24)
        a = make_abstraction([Superquadric.sphere(0.01, (5, 5, 5))], 24)
        r = evaluate(a, g)
        assert not r.overlap_defined
        assert np.isnan(r.overlap_rate)
        assert r.to_dict()["overlap_rate"] is None

    def test_report_serializes(self):
        r = MetricReport(0.1, 0.2, 0.9, 1.1, 3)
        d = r.to_dict()
        assert d["overlap_rate"] == 1.1
        assert d["n_primitives"] == 3
