"""Dense cubic TSDF grids: construction, carving, components, provenance, I/O.

Voxel (i, j, k) has world center ``origin + voxel_size * (i, j, k)``; axis 0
is x. On disk values are stored x-fastest (Fortran ravel of the array).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import MalformedFile, ResolutionMismatch
from .superquadric import Superquadric

_MAGIC = b"LSQG"
_LABEL_MAGIC = b"LSQL"
_SIX_CONN = ndimage.generate_binary_structure(3, 1)


@dataclass
class TsdfGrid:
    resolution: int
    origin: np.ndarray  # world position of voxel (0,0,0) center
    voxel_size: float
    tau: float
    values: np.ndarray  # (R, R, R) float32, clamped to [-tau, tau]
    raw_sdf: np.ndarray | None = None  # unclamped companion, same shape
    carved: bool = False  # raw_sdf is stale once any carve ran

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.shape != (self.resolution,) * 3:
            raise ValueError("values shape does not match resolution")

    @classmethod
    def empty(cls, resolution: int, tau_factor: float = 1.0) -> "TsdfGrid":
        """All-exterior grid over the canonical [-1, 1]^3 domain."""
        vs = 2.0 / resolution
        tau = tau_factor * vs
        origin = np.full(3, -1.0 + 0.5 * vs)
        values = np.full((resolution,) * 3, tau, dtype=np.float32)
        return cls(resolution, origin, vs, tau, values)

    @classmethod
    def from_sdf(cls, sdf, resolution: int, tau_factor: float = 1.0) -> "TsdfGrid":
        """Sample a callable SDF (points (N, 3) -> (N,)) over [-1, 1]^3."""
        g = cls.empty(resolution, tau_factor)
        pts = g.voxel_centers()
        raw = np.asarray(sdf(pts), dtype=np.float64).reshape((resolution,) * 3)
        g.raw_sdf = raw.astype(np.float32)
        g.values = np.clip(raw, -g.tau, g.tau).astype(np.float32)
        return g

    @classmethod
    def from_superquadrics(
        cls, sqs: list[Superquadric], resolution: int, tau_factor: float = 1.0
    ) -> "TsdfGrid":
        def sdf(pts):
            return np.min(np.stack([sq.srdf(pts) for sq in sqs]), axis=0)

        return cls.from_sdf(sdf, resolution, tau_factor)

    # ----- geometry helpers -------------------------------------------------

    def axis_coords(self) -> np.ndarray:
        return self.origin[0] + self.voxel_size * np.arange(self.resolution)

    def voxel_centers(self) -> np.ndarray:
        """All voxel centers, x-fastest, shape (R^3, 3)."""
        r = self.resolution
        idx = np.indices((r, r, r)).reshape(3, -1).T  # C order: z fastest
        return self.index_to_world(idx)

    def index_to_world(self, idx: np.ndarray) -> np.ndarray:
        return self.origin + self.voxel_size * np.asarray(idx, dtype=np.float64)

    def world_to_index(self, pts: np.ndarray) -> np.ndarray:
        return np.rint((np.asarray(pts) - self.origin) / self.voxel_size).astype(
            np.int64
        )

    @property
    def interior_mask(self) -> np.ndarray:
        return self.values < 0

    def clamp(self) -> None:
        np.clip(self.values, -self.tau, self.tau, out=self.values)

    def box_slices(self, lo: np.ndarray, hi: np.ndarray) -> tuple[slice, slice, slice]:
        """Index slices covering the world-space box [lo, hi]."""
        i0 = np.floor((lo - self.origin) / self.voxel_size).astype(int)
        i1 = np.ceil((hi - self.origin) / self.voxel_size).astype(int) + 1
        i0 = np.clip(i0, 0, self.resolution)
        i1 = np.clip(i1, 0, self.resolution)
        return tuple(slice(int(a), int(b)) for a, b in zip(i0, i1))

    def copy(self) -> "TsdfGrid":
        return TsdfGrid(
            self.resolution,
            self.origin.copy(),
            self.voxel_size,
            self.tau,
            self.values.copy(),
            None if self.raw_sdf is None else self.raw_sdf.copy(),
            self.carved,
        )

    def interpolate(self, pts: np.ndarray, fill: float | None = None) -> np.ndarray:
        """Trilinear interpolation of the clamped field at world points."""
        if fill is None:
            fill = self.tau
        coords = (np.atleast_2d(pts) - self.origin) / self.voxel_size
        return ndimage.map_coordinates(
            self.values.astype(np.float64),
            coords.T,
            order=1,
            mode="constant",
            cval=fill,
        )


@dataclass
class UpdateHistory:
    """Per-voxel provenance: which accepted primitive flipped each voxel
    from inside to outside."""

    last_updater: np.ndarray  # int32, -1 = untouched
    stage_of: dict[int, str] = field(default_factory=dict)

    @classmethod
    def for_grid(cls, grid: TsdfGrid) -> "UpdateHistory":
        return cls(np.full(grid.values.shape, -1, dtype=np.int32))

    def copy(self) -> "UpdateHistory":
        return UpdateHistory(self.last_updater.copy(), dict(self.stage_of))


@dataclass
class VoxelComponent:
    id: int
    voxel_indices: np.ndarray  # (N, 3) int

    @property
    def size(self) -> int:
        return len(self.voxel_indices)


def carve(
    grid: TsdfGrid,
    sq: Superquadric,
    history: UpdateHistory | None = None,
    primitive_id: int = -1,
    stage: str | None = None,
) -> None:
    """SDF carving: turn the primitive's interior into exterior, in place.

    For interior voxels (phi < 0): inside the primitive the value becomes
    -phi_theta (now positive); outside it becomes max(-phi_theta, phi).
    Exterior voxels never change. The field is re-clamped afterwards.
    """
    lo, hi = sq.world_aabb(margin=2.0 * grid.tau + grid.voxel_size)
    sl = grid.box_slices(lo, hi)
    sub = grid.values[sl]
    if sub.size == 0:
        return
    idx = np.indices(sub.shape).reshape(3, -1).T + np.array(
        [s.start for s in sl], dtype=np.int64
    )
    phi = sub.ravel()
    inside = phi < 0
    if not np.any(inside):
        return
    phi_theta = np.full(phi.shape, np.inf)
    phi_theta[inside] = sq.srdf(grid.index_to_world(idx[inside]))
    case1 = inside & (phi_theta < 0)
    case2 = inside & (phi_theta > 0)
    new = phi.copy()
    new[case1] = -phi_theta[case1]
    new[case2] = np.maximum(-phi_theta[case2], phi[case2])
    grid.values[sl] = new.reshape(sub.shape)
    grid.clamp()
    grid.carved = True
    if history is not None and np.any(case1):
        flipped = idx[case1]
        history.last_updater[flipped[:, 0], flipped[:, 1], flipped[:, 2]] = primitive_id
        if stage is not None:
            history.stage_of[primitive_id] = stage


def connected_components(
    grid: TsdfGrid, exclude: np.ndarray | None = None
) -> list[VoxelComponent]:
    """6-connected components of the interior voxels, largest first.

    ``exclude`` masks out voxels (e.g. pruned regions) before labeling.
    """
    mask = grid.interior_mask
    if exclude is not None:
        mask = mask & ~exclude
    labels, n = ndimage.label(mask, structure=_SIX_CONN)
    comps = []
    if n:
        objects = ndimage.find_objects(labels)
        for lab in range(1, n + 1):
            sl = objects[lab - 1]
            local = np.argwhere(labels[sl] == lab)
            local += np.array([s.start for s in sl])
            comps.append(VoxelComponent(lab, local))
    comps.sort(key=lambda c: (-c.size, c.id))
    return comps


def max_inscribed_sphere(
    component: VoxelComponent, grid: TsdfGrid
) -> tuple[np.ndarray, float]:
    """Center (world) and radius of the largest sphere inscribed in the
    component's interior region."""
    if component.size == 0:
        raise ValueError("empty component")
    ii, jj, kk = component.voxel_indices.T
    if grid.raw_sdf is not None and not grid.carved:
        depth = -grid.raw_sdf[ii, jj, kk].astype(np.float64)
    else:
        # distance transform of the current negative region; the half-voxel
        # offset measures to the region boundary, not the neighbor center
        dt = ndimage.distance_transform_edt(grid.interior_mask)
        depth = (dt[ii, jj, kk] - 0.5) * grid.voxel_size
    best = int(np.argmax(depth))
    center = grid.index_to_world(component.voxel_indices[best])
    radius = float(max(depth[best], 0.5 * grid.voxel_size))
    return center, radius


# ----- binary grid format ---------------------------------------------------


def save_grid(grid: TsdfGrid, path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", 1, grid.resolution))
        f.write(struct.pack("<3f", *grid.origin))
        f.write(struct.pack("<ff", grid.voxel_size, grid.tau))
        f.write(np.ascontiguousarray(grid.values.ravel(order="F"), dtype="<f4").tobytes())


def load_grid(path) -> TsdfGrid:
    with open(path, "rb") as f:
        header = f.read(4 + 8 + 12 + 8)
        if len(header) < 32 or header[:4] != _MAGIC:
            raise MalformedFile(f"{path}: not a grid file")
        version, res = struct.unpack_from("<II", header, 4)
        if version != 1:
            raise MalformedFile(f"{path}: unsupported version {version}")
        origin = np.array(struct.unpack_from("<3f", header, 12))
        voxel_size, tau = struct.unpack_from("<ff", header, 24)
        payload = np.frombuffer(f.read(), dtype="<f4")
    if payload.size != res**3:
        raise ResolutionMismatch(
            f"{path}: header says {res}^3 voxels, payload has {payload.size}"
        )
    values = payload.reshape((res, res, res), order="F").copy()
    return TsdfGrid(res, origin, float(voxel_size), float(tau), values)


def save_labels(labels: np.ndarray, grid: TsdfGrid, path) -> None:
    """Partition-label dump: same header layout, u16 payload."""
    with open(path, "wb") as f:
        f.write(_LABEL_MAGIC)
        f.write(struct.pack("<II", 1, grid.resolution))
        f.write(struct.pack("<3f", *grid.origin))
        f.write(struct.pack("<ff", grid.voxel_size, grid.tau))
        f.write(np.ascontiguousarray(labels.ravel(order="F"), dtype="<u2").tobytes())


def tsdf_from_mask(mask: np.ndarray, like: TsdfGrid) -> TsdfGrid:
    """Build a standalone TSDF whose interior is exactly ``mask``, with
    distances recomputed by a Euclidean distance transform."""
    vs = like.voxel_size
    d_in = ndimage.distance_transform_edt(mask)
    d_out = ndimage.distance_transform_edt(~mask)
    raw = np.where(mask, -(d_in - 0.5) * vs, (d_out - 0.5) * vs)
    g = TsdfGrid(
        like.resolution,
        like.origin.copy(),
        vs,
        like.tau,
        np.clip(raw, -like.tau, like.tau).astype(np.float32),
        raw_sdf=raw.astype(np.float32),
    )
    return g
