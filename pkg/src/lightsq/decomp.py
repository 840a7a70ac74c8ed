"""Structure-aware volumetric convex decomposition.

Axis-aligned candidate cut planes are scored by cross-section saliency
(second-order area differences + connected-component count jumps), the
interior is split by the selected planes, and adjacent fragments are merged
back while curvature continuity and volumetric IoU stay high.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .errors import NotAdjacent
from .grid import TsdfGrid, _SIX_CONN

_AXES = ("x", "y", "z")
_FOUR_CONN = ndimage.generate_binary_structure(2, 1)


@dataclass
class SlicePlane:
    axis: int  # 0=x, 1=y, 2=z
    index: int  # cuts between slices index-1 and index
    score: float


@dataclass
class DecompConfig:
    alpha: float = 0.7  # area-change vs connectivity-jump balance
    K: int = 6  # planes kept per axis
    delta_plane: float = 0.1  # min world-space spacing between planes
    beta: float = 0.4  # curvature weight in the merge score
    gamma: float = 0.6  # volumetric-IoU weight in the merge score
    tau_m: float = 0.7  # merge threshold
    h_max: float | None = None  # curvature normalization; 1/voxel_size if None
    planes_global: bool = False  # top-K over all axes instead of per axis

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0.0 < self.tau_m <= 1.0:
            raise ValueError("tau_m must be in (0, 1]")


@dataclass
class Partition:
    id: int
    voxel_indices: np.ndarray  # (N, 3) int
    hull_points: np.ndarray | None = None  # hull vertices (padded voxel corners)
    hull_volume: float = 0.0
    # neighbor id -> (P, 2, 3) interface voxel pairs (ours, theirs)
    neighbors: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.voxel_indices)

    def mask(self, resolution: int) -> np.ndarray:
        m = np.zeros((resolution,) * 3, dtype=bool)
        i, j, k = self.voxel_indices.T
        m[i, j, k] = True
        return m


def slice_area_profile(grid: TsdfGrid, axis: int) -> np.ndarray:
    return np.count_nonzero(
        grid.interior_mask, axis=tuple(a for a in range(3) if a != axis)
    ).astype(np.float64)


def second_order_difference(areas: np.ndarray, i: int) -> float:
    if i < 3 or i >= len(areas) - 3:
        return 0.0
    window = sum(areas[i - j] + areas[i + j] for j in (1, 2, 3))
    return float(window - 2.0 * (areas[i - 1] + areas[i] + areas[i + 1]))


def _slice_component_counts(grid: TsdfGrid, axis: int) -> np.ndarray:
    mask = np.moveaxis(grid.interior_mask, axis, 0)
    counts = np.empty(grid.resolution, dtype=np.int64)
    for i in range(grid.resolution):
        _, n = ndimage.label(mask[i], structure=_FOUR_CONN)
        counts[i] = n
    return counts


def component_variation(grid: TsdfGrid, axis: int, i: int) -> int:
    if i == 0:
        return 0
    counts = _slice_component_counts(grid, axis)
    return int(abs(counts[i] - counts[i - 1]))


def _normalize(v: np.ndarray) -> np.ndarray:
    m = np.max(np.abs(v))
    return np.abs(v) / m if m > 0 else np.zeros_like(v)


def axis_saliency(grid: TsdfGrid, axis: int, config: DecompConfig) -> np.ndarray:
    """Per-slice structural saliency scores for one axis."""
    areas = slice_area_profile(grid, axis)
    m = np.array([second_order_difference(areas, i) for i in range(len(areas))])
    counts = _slice_component_counts(grid, axis)
    dn = np.abs(np.diff(counts, prepend=counts[:1])).astype(np.float64)
    return config.alpha * _normalize(m) + (1.0 - config.alpha) * _normalize(dn)


def select_planes(grid: TsdfGrid, config: DecompConfig | None = None) -> list[SlicePlane]:
    """Greedy top-K saliency slices per axis with a minimum spacing."""
    config = config or DecompConfig()
    min_gap = max(int(np.ceil(config.delta_plane / grid.voxel_size)), 1)
    per_axis: list[list[SlicePlane]] = []
    for axis in range(3):
        scores = axis_saliency(grid, axis, config)
        order = sorted(range(1, grid.resolution), key=lambda i: (-scores[i], i))
        chosen: list[int] = []
        for i in order:
            if len(chosen) >= config.K and not config.planes_global:
                break
            if all(abs(i - c) >= min_gap for c in chosen):
                chosen.append(i)
        per_axis.append([SlicePlane(axis, i, float(scores[i])) for i in chosen])
    if config.planes_global:
        flat = sorted(
            (p for planes in per_axis for p in planes),
            key=lambda p: (-p.score, p.axis, p.index),
        )
        return flat[: config.K]
    return [p for planes in per_axis for p in planes]


def split(grid: TsdfGrid, planes: list[SlicePlane]) -> list[Partition]:
    """Bin interior voxels by the plane-induced cells, re-split each cell
    into 6-connected components, and record cut-plane interfaces."""
    res = grid.resolution
    interior = grid.interior_mask
    cuts = [sorted({p.index for p in planes if p.axis == a}) for a in range(3)]
    cell = np.zeros((res,) * 3, dtype=np.int64)
    mult = 1
    for a in range(3):
        bins = np.digitize(np.arange(res), cuts[a])
        shape = [1, 1, 1]
        shape[a] = res
        cell += bins.reshape(shape) * mult
        mult *= len(cuts[a]) + 1

    label = np.zeros((res,) * 3, dtype=np.int64)
    next_id = 1
    for cid in np.unique(cell[interior]):
        m = interior & (cell == cid)
        lab, n = ndimage.label(m, structure=_SIX_CONN)
        label[m] = lab[m] + (next_id - 1)
        next_id += n

    parts = {
        pid: Partition(int(pid), np.argwhere(label == pid))
        for pid in range(1, next_id)
    }
    for p in parts.values():
        _build_hull(p, grid)

    # interfaces: voxel pairs straddling each cut plane
    for a in range(3):
        for idx in cuts[a]:
            if idx <= 0 or idx >= res:
                continue
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[a] = slice(idx - 1, idx)
            hi[a] = slice(idx, idx + 1)
            both = interior[tuple(lo)] & interior[tuple(hi)]
            coords = np.argwhere(both)
            if len(coords) == 0:
                continue
            v1 = coords.copy()
            v1[:, a] = idx - 1
            v2 = coords.copy()
            v2[:, a] = idx
            l1 = label[v1[:, 0], v1[:, 1], v1[:, 2]]
            l2 = label[v2[:, 0], v2[:, 1], v2[:, 2]]
            for pa, pb in {(int(x), int(y)) for x, y in zip(l1, l2) if x != y}:
                sel = (l1 == pa) & (l2 == pb)
                pairs = np.stack([v1[sel], v2[sel]], axis=1)
                _add_interface(parts[pa], pb, pairs)
                _add_interface(parts[pb], pa, pairs[:, ::-1, :])
    return sorted(parts.values(), key=lambda p: p.id)


def _add_interface(part: Partition, other: int, pairs: np.ndarray) -> None:
    if other in part.neighbors:
        part.neighbors[other] = np.concatenate([part.neighbors[other], pairs])
    else:
        part.neighbors[other] = pairs


def _build_hull(part: Partition, grid: TsdfGrid) -> None:
    """Convex hull over the corners of boundary voxels (half-voxel padding)."""
    idx = part.voxel_indices
    if len(idx) == 0:
        part.hull_points, part.hull_volume = np.zeros((0, 3)), 0.0
        return
    centers = grid.index_to_world(idx)
    if len(idx) > 8:
        # boundary voxels suffice for the hull
        m = part.mask(grid.resolution)
        eroded = ndimage.binary_erosion(m, structure=_SIX_CONN)
        bidx = np.argwhere(m & ~eroded)
        centers = grid.index_to_world(bidx)
    h = 0.5 * grid.voxel_size
    offs = np.array(
        [[sx, sy, sz] for sx in (-h, h) for sy in (-h, h) for sz in (-h, h)]
    )
    corners = (centers[:, None, :] + offs[None, :, :]).reshape(-1, 3)
    hull = ConvexHull(corners)
    part.hull_points = corners[hull.vertices]
    part.hull_volume = float(hull.volume)


def mean_curvature_field(grid: TsdfGrid) -> np.ndarray:
    """Mean curvature of the TSDF: half the divergence of the unit gradient."""
    g = np.gradient(grid.values.astype(np.float64), grid.voxel_size)
    norm = np.sqrt(g[0] ** 2 + g[1] ** 2 + g[2] ** 2)
    safe = np.where(norm > 1e-12, norm, 1.0)
    n = [gi / safe for gi in g]
    div = sum(
        np.gradient(n[a], grid.voxel_size, axis=a) for a in range(3)
    )
    return 0.5 * div


def curvature_continuity(
    grid: TsdfGrid,
    p1: Partition,
    p2: Partition,
    config: DecompConfig | None = None,
    h_field: np.ndarray | None = None,
) -> float:
    config = config or DecompConfig()
    if p2.id not in p1.neighbors or len(p1.neighbors[p2.id]) == 0:
        raise NotAdjacent(f"partitions {p1.id} and {p2.id} share no interface")
    if h_field is None:
        h_field = mean_curvature_field(grid)
    h_max = config.h_max if config.h_max is not None else 1.0 / grid.voxel_size
    pairs = p1.neighbors[p2.id]
    v1, v2 = pairs[:, 0, :], pairs[:, 1, :]
    h1 = h_field[v1[:, 0], v1[:, 1], v1[:, 2]]
    h2 = h_field[v2[:, 0], v2[:, 1], v2[:, 2]]
    score = 1.0 - float(np.mean(np.abs(h1 - h2))) / h_max
    return float(np.clip(score, 0.0, 1.0))


def volumetric_iou(p1: Partition, p2: Partition, voxel_volume: float) -> float:
    vol = (p1.size + p2.size) * voxel_volume
    pts = np.vstack([p1.hull_points, p2.hull_points])
    try:
        ch = ConvexHull(pts)
    except QhullError:
        return 0.0
    if ch.volume <= 0:
        return 1.0
    return float(min(vol / ch.volume, 1.0))


def merge_score(
    grid: TsdfGrid,
    p1: Partition,
    p2: Partition,
    config: DecompConfig,
    h_field: np.ndarray,
) -> float:
    s_curv = curvature_continuity(grid, p1, p2, config, h_field)
    s_vol = volumetric_iou(p1, p2, grid.voxel_size**3)
    return config.beta * s_curv + config.gamma * s_vol


def adaptive_merge(
    partitions: list[Partition], grid: TsdfGrid, config: DecompConfig | None = None
) -> list[Partition]:
    """Repeatedly merge the best-scoring adjacent pair above the threshold."""
    config = config or DecompConfig()
    parts = {p.id: p for p in partitions}
    h_field = mean_curvature_field(grid)

    scores: dict[tuple[int, int], float] = {}

    def key(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    def score_of(a: int, b: int) -> float:
        k = key(a, b)
        if k not in scores:
            scores[k] = merge_score(grid, parts[k[0]], parts[k[1]], config, h_field)
        return scores[k]

    while True:
        best_pair, best_s = None, config.tau_m
        for pid in sorted(parts):
            for nid in sorted(parts[pid].neighbors):
                if nid <= pid or nid not in parts:
                    continue
                s = score_of(pid, nid)
                if s > best_s:
                    best_pair, best_s = (pid, nid), s
        if best_pair is None:
            break
        a, b = best_pair
        keep, gone = parts[a], parts.pop(b)
        keep.voxel_indices = np.concatenate([keep.voxel_indices, gone.voxel_indices])
        _build_hull(keep, grid)
        # rewire neighbors
        keep.neighbors.pop(b, None)
        for nid, pairs in gone.neighbors.items():
            if nid == a:
                continue
            _add_interface(keep, nid, pairs)
            other = parts[nid]
            moved = other.neighbors.pop(b, None)
            if moved is not None:
                _add_interface(other, a, moved)
        scores = {k: v for k, v in scores.items() if a not in k and b not in k}
    return sorted(parts.values(), key=lambda p: p.id)


def decompose(
    grid: TsdfGrid, config: DecompConfig | None = None
) -> list[Partition]:
    config = config or DecompConfig()
    planes = select_planes(grid, config)
    parts = split(grid, planes)
    return adaptive_merge(parts, grid, config)


def partition_labels(partitions: list[Partition], resolution: int) -> np.ndarray:
    """Dense u16 label volume (0 = exterior) for inspection dumps."""
    labels = np.zeros((resolution,) * 3, dtype=np.uint16)
    for n, p in enumerate(partitions, start=1):
        i, j, k = p.voxel_indices.T
        labels[i, j, k] = n
    return labels
