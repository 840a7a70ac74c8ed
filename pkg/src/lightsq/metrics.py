"""Evaluation suite: Chamfer Distance, Earth Mover's Distance, Voxel-IoU,
Overlap Rate, and primitive count against a reference TSDF grid.

Surface points come from a six-axis orthographic scan of the field, so
occluded internal structure is excluded symmetrically for both the
reference and the abstraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import EmptyUnion
from .grid import TsdfGrid
from .pipeline import Abstraction

DEFAULT_SCAN_POINTS = 8192
DEFAULT_EMD_POINTS = 1024


@dataclass
class MetricReport:
    cd: float
    emd: float
    voxel_iou: float
    overlap_rate: float  # NaN when no primitive covers a voxel
    n_primitives: int
    overlap_defined: bool = True
    sample_counts: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "cd": self.cd,
            "emd": self.emd,
            "voxel_iou": self.voxel_iou,
            "overlap_rate": None if not self.overlap_defined else self.overlap_rate,
            "n_primitives": self.n_primitives,
            "overlap_defined": self.overlap_defined,
            "sample_counts": self.sample_counts,
            "seed": self.seed,
        }


def _union_srdf_field(abstraction: Abstraction, like: TsdfGrid) -> np.ndarray:
    """Min-over-primitives signed radial distance on the reference lattice."""
    pts = like.voxel_centers()
    r = like.resolution
    out = np.full(r**3, np.inf)
    for p in abstraction.primitives:
        np.minimum(out, p.sq.srdf(pts), out=out)
    return out.reshape((r,) * 3)


def _ray_hits(values: np.ndarray, coords: np.ndarray, axis: int, reverse: bool):
    """First outside-to-inside zero crossings along one scan direction.

    ``values`` is sampled on the cubic lattice; rays run along ``axis`` in
    increasing coordinate order (decreasing when ``reverse``). Returns hit
    points (N, 3) with the crossing position linearly interpolated.
    """
    v = np.moveaxis(values, axis, 0)
    if reverse:
        v = v[::-1]
    r = v.shape[0]
    ahead = v[:-1]
    nxt = v[1:]
    crossing = (ahead >= 0) & (nxt < 0)
    # first crossing per column only
    first = np.argmax(crossing, axis=0)
    has = crossing.any(axis=0)
    jj, kk = np.nonzero(has)
    i0 = first[jj, kk]
    va = ahead[i0, jj, kk].astype(np.float64)
    vb = nxt[i0, jj, kk].astype(np.float64)
    t = va / (va - vb)
    pos = i0 + t
    if reverse:
        pos = (r - 1) - pos
    step = coords[1] - coords[0] if len(coords) > 1 else 1.0
    along = coords[0] + pos * step
    hits = np.empty((len(jj), 3))
    other = [a for a in range(3) if a != axis]
    hits[:, axis] = along
    hits[:, other[0]] = coords[jj]
    hits[:, other[1]] = coords[kk]
    return hits


def scan_points(
    shape: TsdfGrid | Abstraction,
    n: int = DEFAULT_SCAN_POINTS,
    seed: int = 0,
    like: TsdfGrid | None = None,
) -> np.ndarray:
    """Orthographic surface scan: cast rays along all six axis directions,
    keep first-hit zero crossings, subsample to n points."""
    if isinstance(shape, Abstraction):
        if like is None:
            like = TsdfGrid.empty(shape.resolution)
        values = _union_srdf_field(shape, like)
        grid = like
    else:
        grid = shape
        values = grid.values
    coords = grid.axis_coords()
    hits = []
    for axis in range(3):
        for reverse in (False, True):
            h = _ray_hits(values, coords, axis, reverse)
            if len(h):
                hits.append(h)
    if not hits:
        return np.zeros((0, 3))
    pts = np.concatenate(hits)
    rng = np.random.default_rng(seed)
    if len(pts) > n:
        pts = pts[rng.choice(len(pts), size=n, replace=False)]
    return pts


def chamfer(p: np.ndarray, q: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance between two point sets."""
    if len(p) == 0 or len(q) == 0:
        raise ValueError("chamfer needs non-empty point sets")
    d_pq, _ = cKDTree(q).query(p)
    d_qp, _ = cKDTree(p).query(q)
    return 0.5 * (float(np.mean(d_pq)) + float(np.mean(d_qp)))


def emd(
    p: np.ndarray, q: np.ndarray, n: int = DEFAULT_EMD_POINTS, seed: int = 0
) -> float:
    """Exact-assignment transport distance on seeded subsamples."""
    if len(p) == 0 or len(q) == 0:
        raise ValueError("emd needs non-empty point sets")
    # identically seeded draws per side, so equal inputs stay equal
    m = min(n, len(p), len(q))
    rng_p = np.random.default_rng(seed)
    rng_q = np.random.default_rng(seed)
    ps = p[rng_p.choice(len(p), size=m, replace=False)] if len(p) > m else p
    qs = q[rng_q.choice(len(q), size=m, replace=False)] if len(q) > m else q
    cost = np.linalg.norm(ps[:, None, :] - qs[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(np.mean(cost[rows, cols]))


def voxel_iou(reference: TsdfGrid, abstraction: Abstraction) -> float:
    """Interior-voxel intersection over union on the reference lattice."""
    ref = reference.interior_mask
    if not abstraction.primitives:
        return 0.0
    pred = _union_srdf_field(abstraction, reference) < 0
    union = np.count_nonzero(ref | pred)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(ref & pred) / union)


def overlap_rate(abstraction: Abstraction, lattice: TsdfGrid) -> float:
    """Average number of primitives covering each covered voxel."""
    pts = lattice.voxel_centers()
    covered = np.zeros(len(pts), dtype=np.int64)
    for p in abstraction.primitives:
        covered += p.sq.srdf(pts) < 0
    union = np.count_nonzero(covered)
    if union == 0:
        raise EmptyUnion("no primitive covers any lattice voxel")
    return float(covered.sum() / union)


def evaluate(
    abstraction: Abstraction,
    reference: TsdfGrid,
    n_scan: int = DEFAULT_SCAN_POINTS,
    n_emd: int = DEFAULT_EMD_POINTS,
    seed: int = 0,
) -> MetricReport:
    ref_pts = scan_points(reference, n_scan, seed)
    abs_pts = scan_points(abstraction, n_scan, seed, like=reference)
    if len(ref_pts) and len(abs_pts):
        cd = chamfer(ref_pts, abs_pts)
        e = emd(ref_pts, abs_pts, n_emd, seed)
    else:
        cd = float("nan")
        e = float("nan")
    iou = voxel_iou(reference, abstraction)
    try:
        orate = overlap_rate(abstraction, reference)
        defined = True
    except EmptyUnion:
        orate = float("nan")
        defined = False
    return MetricReport(
        cd,
        e,
        iou,
        orate,
        len(abstraction.primitives),
        defined,
        {"scan": n_scan, "emd": n_emd},
        seed,
    )
