"""Full abstraction run: block-regrow-fill with residual pruning, plus
user-steered multiscale refinement of individual primitives.

Block fits one primitive per decomposition partition on a standalone field.
Regrow re-optimizes each primitive against the input carved by all the
others, letting neighbors meet across cut planes. Fill walks the remaining
interior components largest-first, classifying each residual as Main,
Connector, or Offcut and either fitting another primitive or pruning it.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .decomp import DecompConfig, Partition, decompose, split, SlicePlane
from .errors import DegenerateRegion, EmptyNeighborhood, UnknownPrimitive
from .fitter import FitConfig, fit_one, pca_orientation
from .grid import (
    TsdfGrid,
    UpdateHistory,
    VoxelComponent,
    _SIX_CONN,
    carve,
    connected_components,
    max_inscribed_sphere,
    tsdf_from_mask,
)
from .superquadric import (
    Superquadric,
    euler_xyz_from_quat,
    quat_multiply,
    quat_to_matrix,
)

STAGES = ("Block", "Regrow", "Main", "Connector", "Offcut")


@dataclass
class LabeledSuperquadric:
    sq: Superquadric
    id: int
    stage: str
    parent: int | None = None

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass
class PruneConfig:
    p_main: float = 0.5  # untouched fraction above which a residual is Main
    p_connector: float = 0.5
    p_offcut: float = 0.5
    t_main: float = 0.02  # minimum init-sphere radii per category
    t_connector: float = 0.03
    t_offcut: float = 0.05

    def __post_init__(self):
        for p in (self.p_main, self.p_connector, self.p_offcut):
            if not 0.0 < p <= 1.0:
                raise ValueError("classification fractions must be in (0, 1]")
        if not self.t_main <= self.t_connector <= self.t_offcut:
            raise ValueError("pruning thresholds must be ascending")
        if min(self.t_main, self.t_connector, self.t_offcut) < 0:
            raise ValueError("pruning thresholds must be non-negative")

    def threshold(self, stage: str) -> float:
        return {
            "Main": self.t_main,
            "Connector": self.t_connector,
            "Offcut": self.t_offcut,
        }[stage]

    @classmethod
    def for_voxel_size(cls, voxel_size: float) -> "PruneConfig":
        """Thresholds tied to the grid: one, one-and-a-half, and two-and-a-half
        voxels. At the canonical 100-voxel resolution this reproduces the
        defaults exactly."""
        return cls(
            t_main=voxel_size,
            t_connector=1.5 * voxel_size,
            t_offcut=2.5 * voxel_size,
        )


@dataclass
class Abstraction:
    primitives: list[LabeledSuperquadric]
    resolution: int
    tau: float
    norm_scale: float = 1.0  # mesh -> grid frame: x_grid = (x - translate) * scale
    norm_translate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    config_snapshot: dict = field(default_factory=dict)

    def __post_init__(self):
        self.norm_translate = np.asarray(self.norm_translate, dtype=np.float64)
        ids = [p.id for p in self.primitives]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate primitive ids")

    def find(self, pid: int) -> LabeledSuperquadric:
        for p in self.primitives:
            if p.id == pid:
                return p
        raise UnknownPrimitive(f"no primitive with id {pid}")

    def next_id(self) -> int:
        return max((p.id for p in self.primitives), default=-1) + 1

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "normalization": {
                "scale": self.norm_scale,
                "translate": list(map(float, self.norm_translate)),
            },
            "grid": {"resolution": self.resolution, "tau": self.tau},
            "config": self.config_snapshot,
            "primitives": [
                {
                    "id": p.id,
                    "stage": p.stage,
                    "parent": p.parent,
                    "eps": [p.sq.eps1, p.sq.eps2],
                    "scale": list(map(float, p.sq.a)),
                    "rotation_quat": list(map(float, p.sq.quat)),
                    "rotation_euler_xyz": list(
                        map(float, euler_xyz_from_quat(p.sq.quat))
                    ),
                    "translation": list(map(float, p.sq.translation)),
                }
                for p in self.primitives
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Abstraction":
        prims = [
            LabeledSuperquadric(
                Superquadric(
                    rec["eps"][0],
                    rec["eps"][1],
                    np.asarray(rec["scale"], dtype=np.float64),
                    np.asarray(rec["rotation_quat"], dtype=np.float64),
                    np.asarray(rec["translation"], dtype=np.float64),
                ),
                rec["id"],
                rec["stage"],
                rec.get("parent"),
            )
            for rec in d["primitives"]
        ]
        return cls(
            prims,
            d["grid"]["resolution"],
            d["grid"]["tau"],
            d["normalization"]["scale"],
            np.asarray(d["normalization"]["translate"], dtype=np.float64),
            d.get("config", {}),
        )


def _component_inits(
    component: VoxelComponent, grid: TsdfGrid
) -> list[Superquadric]:
    """Candidate starting primitives for a component.

    The maximal inscribed sphere (oriented by the principal axes) is the
    primary start; a centroid-placed ellipsoid matching the principal
    half-extents is tried as well, since elongated residuals often trap the
    sphere start in a partial-coverage optimum.
    """
    center, radius = max_inscribed_sphere(component, grid)
    pts = grid.index_to_world(component.voxel_indices)
    quat = pca_orientation(pts)
    inits = []
    if component.size >= 4:
        centroid = pts.mean(axis=0)
        local = (pts - centroid) @ quat_to_matrix(quat)
        # uniform-density half-extent estimate from per-axis spread
        ext = np.maximum(np.std(local, axis=0) * np.sqrt(3.0), 0.5 * grid.voxel_size)
        inits.append(Superquadric(1.0, 1.0, ext, quat, centroid))
    inits.append(Superquadric(1.0, 1.0, np.full(3, radius), quat, center))
    return inits


def fit_component(
    grid: TsdfGrid, component: VoxelComponent, fit_config: FitConfig
) -> Superquadric | None:
    """Fit from every candidate init, keep the primitive that reclaims the
    most interior voxels. Returns None when nothing covers a single voxel.
    A fit that already matches the field to numerical noise short-circuits
    the remaining starts."""
    best_sq, best_key = None, None
    for init in _component_inits(component, grid):
        try:
            result = fit_one(grid, init, fit_config)
        except EmptyNeighborhood:
            continue
        cov = _coverage(grid, result.sq)
        if cov == 0:
            continue
        key = (-cov, result.mean_residual)
        if best_key is None or key < best_key:
            best_sq, best_key = result.sq, key
        if result.converged and result.mean_residual < 1e-12:
            break
    return best_sq


def _coverage(grid: TsdfGrid, sq: Superquadric) -> int:
    """Interior voxels of the current field that the primitive would flip."""
    lo, hi = sq.world_aabb()
    sl = grid.box_slices(lo, hi)
    sub = grid.values[sl]
    if sub.size == 0:
        return 0
    idx = np.argwhere(sub < 0) + np.array([s.start for s in sl])
    if len(idx) == 0:
        return 0
    return int(np.count_nonzero(sq.srdf(grid.index_to_world(idx)) < 0))


def block(
    grid: TsdfGrid,
    partitions: list[Partition],
    k_per_partition: int = 1,
    fit_config: FitConfig | None = None,
) -> list[LabeledSuperquadric]:
    """Fit up to K primitives per partition on standalone per-partition fields.

    The global field is not modified. Partitions of one voxel or fewer are
    skipped with a warning.
    """
    fit_config = fit_config or FitConfig()
    usable = []
    for part in partitions:
        if part.size <= 1:
            warnings.warn(f"partition {part.id} too small to fit, skipped")
        else:
            usable.append(part)

    def fit_partition(part: Partition) -> list[Superquadric]:
        local = tsdf_from_mask(part.mask(grid.resolution), grid)
        fits: list[Superquadric] = []
        for _ in range(k_per_partition):
            comps = connected_components(local)
            if not comps:
                break
            sq = fit_component(local, comps[0], fit_config)
            if sq is None:
                break
            fits.append(sq)
            carve(local, sq)
        return fits

    workers = min(_worker_count(), max(len(usable), 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_partition = list(pool.map(fit_partition, usable))
    else:
        per_partition = [fit_partition(p) for p in usable]

    out: list[LabeledSuperquadric] = []
    for fits in per_partition:
        for sq in fits:
            out.append(LabeledSuperquadric(sq, len(out), "Block"))
    return out


def _worker_count() -> int:
    raw = os.environ.get("LIGHTSQ_THREADS", "")
    if raw.strip():
        try:
            return max(int(raw), 1)
        except ValueError:
            pass
    return max(os.cpu_count() or 1, 1)


def regrow(
    grid: TsdfGrid,
    blocks: list[LabeledSuperquadric],
    fit_config: FitConfig | None = None,
    history: UpdateHistory | None = None,
) -> list[LabeledSuperquadric]:
    """Re-fit each block primitive against the input carved by all others.

    Primitive i sees the field carved by the already-regrown 1..i-1 and the
    still-initial i+1..N, so neighbors can expand into the slack left at cut
    planes. Afterwards the working grid is carved by every regrown primitive,
    recording provenance.
    """
    fit_config = fit_config or FitConfig()
    pristine = grid.copy()
    current = [b.sq for b in blocks]
    regrown: list[LabeledSuperquadric] = []
    for i, b in enumerate(blocks):
        target = pristine.copy()
        for j, sq in enumerate(current):
            if j != i:
                carve(target, sq)
        try:
            result = fit_one(target, current[i], fit_config)
            current[i] = result.sq
        except EmptyNeighborhood:
            pass  # fully occluded by the others; keep the block fit
        regrown.append(LabeledSuperquadric(current[i], b.id, "Regrow", b.parent))
    for r in regrown:
        # regrown primitives act as Main for residual classification
        carve(grid, r.sq, history, r.id, stage="Main")
    return regrown


def classify_component(
    component: VoxelComponent,
    grid: TsdfGrid,
    history: UpdateHistory,
    prune_config: PruneConfig | None = None,
    original_interior: np.ndarray | None = None,
) -> tuple[str, np.ndarray, float]:
    """Label a residual component Main, Connector, or Offcut.

    Evidence is gathered from the original (pre-carve) interior voxels inside
    the component's maximal inscribed sphere: mostly untouched means an
    unfitted region (Main); carved by several primitives means a bridge
    (Connector); carved by exactly one means leftover slack (Offcut).
    Returns (stage, sphere center, sphere radius).
    """
    prune_config = prune_config or PruneConfig()
    center, radius = max_inscribed_sphere(component, grid)
    interior = original_interior if original_interior is not None else grid.interior_mask
    idx = np.argwhere(interior)
    pts = grid.index_to_world(idx)
    # half-voxel slack so a one-voxel sphere still gathers its neighbors
    inside = np.linalg.norm(pts - center, axis=1) <= radius + 0.5 * grid.voxel_size
    sel = idx[inside]
    if len(sel) == 0:
        return "Offcut", center, radius
    updaters = history.last_updater[sel[:, 0], sel[:, 1], sel[:, 2]]
    untouched = float(np.mean(updaters < 0))
    if untouched > prune_config.p_main:
        return "Main", center, radius
    main_ids = {
        int(u)
        for u in np.unique(updaters[updaters >= 0])
        if history.stage_of.get(int(u)) == "Main"
    }
    updated = float(np.mean(updaters >= 0))
    if len(main_ids) >= 2 and updated > prune_config.p_connector:
        return "Connector", center, radius
    if len(main_ids) == 1 and updated > prune_config.p_offcut:
        return "Offcut", center, radius
    return "Offcut", center, radius


def fill(
    grid: TsdfGrid,
    history: UpdateHistory,
    fit_config: FitConfig | None = None,
    prune_config: PruneConfig | None = None,
    original_interior: np.ndarray | None = None,
    skipped: np.ndarray | None = None,
    start_id: int = 0,
) -> list[LabeledSuperquadric]:
    """Fit or prune remaining interior components until none are left.

    Each pass takes the largest unskipped component, classifies it, and
    either prunes it (init-sphere radius below the category threshold, voxels
    go to the ``skipped`` mask) or fits a primitive and carves it. A fit that
    would flip no interior voxel skips the component instead, so the loop
    always terminates.
    """
    fit_config = fit_config or FitConfig()
    prune_config = prune_config or PruneConfig()
    if original_interior is None:
        original_interior = grid.interior_mask.copy()
    if skipped is None:
        skipped = np.zeros(grid.values.shape, dtype=bool)
    out: list[LabeledSuperquadric] = []
    next_id = start_id
    while True:
        comps = connected_components(grid, exclude=skipped)
        if not comps:
            break
        comp = comps[0]
        stage, center, radius = classify_component(
            comp, grid, history, prune_config, original_interior
        )
        ii, jj, kk = comp.voxel_indices.T
        if radius < prune_config.threshold(stage):
            skipped[ii, jj, kk] = True
            continue
        sq = fit_component(grid, comp, fit_config)
        if sq is None:
            skipped[ii, jj, kk] = True
            continue
        out.append(LabeledSuperquadric(sq, next_id, stage))
        carve(grid, sq, history, next_id, stage=stage)
        next_id += 1
    return out


def run(
    grid: TsdfGrid,
    fit_config: FitConfig | None = None,
    decomp_config: DecompConfig | None = None,
    prune_config: PruneConfig | None = None,
    k_per_partition: int = 1,
    norm_scale: float = 1.0,
    norm_translate=(0.0, 0.0, 0.0),
) -> Abstraction:
    """Decompose, block, regrow, and fill: the whole abstraction pipeline."""
    fit_config = fit_config or FitConfig()
    decomp_config = decomp_config or DecompConfig()
    prune_config = prune_config or PruneConfig.for_voxel_size(grid.voxel_size)
    snapshot = _config_snapshot(fit_config, decomp_config, prune_config)
    base = Abstraction(
        [], grid.resolution, grid.tau, norm_scale, np.asarray(norm_translate, float),
        snapshot,
    )
    if not np.any(grid.interior_mask):
        return base
    working = grid.copy()
    original_interior = grid.interior_mask.copy()
    history = UpdateHistory.for_grid(working)
    partitions = decompose(grid, decomp_config)
    blocks = block(grid, partitions, k_per_partition, fit_config)
    regrown = regrow(working, blocks, fit_config, history)
    filled = fill(
        working,
        history,
        fit_config,
        prune_config,
        original_interior,
        start_id=len(regrown),
    )
    base.primitives = regrown + filled
    return base


def _config_snapshot(fc: FitConfig, dc: DecompConfig, pc: PruneConfig) -> dict:
    return {
        "fit": {"w": fc.w, "C": fc.C, "max_outer_iters": fc.max_outer_iters},
        "decomp": {
            "alpha": dc.alpha,
            "K": dc.K,
            "delta_plane": dc.delta_plane,
            "beta": dc.beta,
            "gamma": dc.gamma,
            "tau_m": dc.tau_m,
        },
        "prune": {
            "p_main": pc.p_main,
            "p_connector": pc.p_connector,
            "p_offcut": pc.p_offcut,
            "t_main": pc.t_main,
            "t_connector": pc.t_connector,
            "t_offcut": pc.t_offcut,
        },
    }


def replay_carves(
    abstraction: Abstraction, grid: TsdfGrid
) -> tuple[TsdfGrid, UpdateHistory]:
    """Re-run the carve sequence of an abstraction on a fresh copy of the
    input, reconstructing per-voxel provenance."""
    working = grid.copy()
    history = UpdateHistory.for_grid(working)
    for p in abstraction.primitives:
        stage = "Main" if p.stage in ("Block", "Regrow") else p.stage
        carve(working, p.sq, history, p.id, stage=stage)
    return working, history


def multiscale_refine(
    abstraction: Abstraction,
    grid: TsdfGrid,
    target_id: int,
    splits_per_axis: int = 2,
    dilation: float | None = None,
    local_resolution: int = 64,
    fit_config: FitConfig | None = None,
    prune_config: PruneConfig | None = None,
) -> Abstraction:
    """Replace one primitive with a finer local abstraction of its region.

    The region a primitive owns (the voxels it carved, plus pruned leftovers
    within the dilation radius) is resampled axis-aligned in the primitive's
    own frame at ``local_resolution``, evenly partitioned into
    ``splits_per_axis`` slabs per axis, and re-abstracted by
    block-regrow-fill. Children carry ``parent = target_id``; all other
    primitives pass through untouched.
    """
    if splits_per_axis < 1:
        raise ValueError("splits_per_axis must be >= 1")
    target = abstraction.find(target_id)
    if dilation is None:
        dilation = 2.0 * grid.voxel_size
    fit_config = fit_config or FitConfig()

    carved, history = replay_carves(abstraction, grid)
    owned = history.last_updater == target_id
    leftover = carved.interior_mask  # everything still interior was pruned
    dil_iters = max(int(np.ceil(dilation / grid.voxel_size)), 1)
    near = ndimage.binary_dilation(owned, structure=_SIX_CONN, iterations=dil_iters)
    region = owned | (leftover & near)
    if not np.any(region):
        raise DegenerateRegion(f"primitive {target_id} owns no voxels")

    # axis-aligned dilated frame: local coordinates are the primitive's own,
    # the shape inside is whatever the region mask says
    sq = target.sq
    half = float(np.max(sq.a)) + dilation
    local = TsdfGrid.empty(local_resolution)
    vs_local = 2.0 * half / local_resolution
    local.voxel_size = vs_local
    local.tau = vs_local
    local.origin = np.full(3, -half + 0.5 * vs_local)

    # interior test by trilinear resampling of the coarse field: a nearest
    # voxel lookup would turn the surface into a staircase of coarse cubes
    # and bias every re-fitted child inward by a fraction of a coarse voxel
    centers_local = local.voxel_centers()
    centers_world = sq.to_world(centers_local)
    idx_frac = (centers_world - grid.origin) / grid.voxel_size
    in_bounds = np.all(
        (idx_frac > -0.5) & (idx_frac < grid.resolution - 0.5), axis=1
    )
    phi = ndimage.map_coordinates(
        grid.values.astype(np.float64), idx_frac.T, order=1, mode="nearest"
    )
    idx_near = np.clip(
        np.rint(idx_frac).astype(np.int64), 0, grid.resolution - 1
    )
    in_region = ndimage.binary_dilation(region, structure=_SIX_CONN)[
        idx_near[:, 0], idx_near[:, 1], idx_near[:, 2]
    ]
    mask_flat = in_bounds & (phi < 0.0) & in_region
    mask = mask_flat.reshape((local_resolution,) * 3)
    if not np.any(mask):
        raise DegenerateRegion(f"primitive {target_id} region maps outside the grid")
    resampled = tsdf_from_mask(mask, local)
    if prune_config is None:
        prune_config = PruneConfig.for_voxel_size(resampled.voxel_size)

    planes = [
        SlicePlane(axis, round(local_resolution * k / splits_per_axis), 0.0)
        for axis in range(3)
        for k in range(1, splits_per_axis)
    ]
    partitions = split(resampled, planes)
    local_working = resampled.copy()
    local_history = UpdateHistory.for_grid(local_working)
    blocks = block(resampled, partitions, 1, fit_config)
    regrown = regrow(local_working, blocks, fit_config, local_history)
    filled = fill(
        local_working,
        local_history,
        fit_config,
        prune_config,
        resampled.interior_mask.copy(),
        start_id=len(regrown),
    )

    next_id = abstraction.next_id()
    children = []
    for p in regrown + filled:
        child_sq = Superquadric(
            p.sq.eps1,
            p.sq.eps2,
            p.sq.a,
            quat_multiply(sq.quat, p.sq.quat),
            quat_to_matrix(sq.quat) @ p.sq.translation + sq.translation,
        )
        stage = "Main" if p.stage == "Regrow" else p.stage
        children.append(LabeledSuperquadric(child_sq, next_id, stage, target_id))
        next_id += 1
    if not children:
        raise DegenerateRegion(f"refinement of {target_id} produced no primitives")

    prims: list[LabeledSuperquadric] = []
    for p in abstraction.primitives:
        if p.id == target_id:
            prims.extend(children)
        else:
            prims.append(p)
    return replace(abstraction, primitives=prims)
