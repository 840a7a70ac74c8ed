"""Triangle mesh input: OBJ/STL loading, normalization, TSDF voxelization.

Signs come from parity ray casting along +x with a jittered ray lattice
(cheap symbolic perturbation); distances are exact point-triangle distances
inside the truncation band, an interior/exterior distance transform beyond.
"""

from __future__ import annotations

import struct

import numpy as np
from scipy import ndimage

from .errors import EmptyMesh, MalformedFile, NonWatertightMesh
from .grid import TsdfGrid

# jitter shifts the ray lattice off voxel centers so rays never pass exactly
# through mesh edges or vertices of axis-aligned geometry
_JITTER = (0.32471795724474602596, 0.13793103448275862419)


def load_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path, "r", errors="replace") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):  # fan-triangulate
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise EmptyMesh(f"{path}: no geometry")
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def load_stl(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        head = f.read(84)
        if len(head) < 84:
            raise MalformedFile(f"{path}: truncated STL")
        (n_tri,) = struct.unpack_from("<I", head, 80)
        data = np.frombuffer(f.read(), dtype=np.uint8)
    if data.size != n_tri * 50:
        raise MalformedFile(f"{path}: STL payload size mismatch")
    rec = data.reshape(n_tri, 50)
    tri_pts = (
        rec[:, 12:48].copy().view("<f4").reshape(n_tri, 3, 3).astype(np.float64)
    )
    flat = tri_pts.reshape(-1, 3)
    # weld duplicated vertices so edge-sharing is detectable
    rounded = np.round(flat, 6)
    uniq, inverse = np.unique(rounded, axis=0, return_inverse=True)
    faces = inverse.reshape(-1, 3)
    if len(uniq) == 0:
        raise EmptyMesh(f"{path}: no geometry")
    return uniq, faces


def load_mesh(path) -> tuple[np.ndarray, np.ndarray]:
    p = str(path).lower()
    if p.endswith(".obj"):
        return load_obj(path)
    if p.endswith(".stl"):
        return load_stl(path)
    raise MalformedFile(f"{path}: unsupported mesh format")


def is_watertight(faces: np.ndarray) -> bool:
    edges = np.concatenate(
        [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0
    )
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def normalize_mesh(
    verts: np.ndarray, fill: float = 0.9
) -> tuple[np.ndarray, float, np.ndarray]:
    """Scale/translate so the AABB fits inside [-1, 1]^3.

    Returns (normalized verts, scale, center): x_norm = (x - center) * scale.
    ``fill`` leaves headroom so the truncation band stays inside the grid.
    """
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    center = 0.5 * (lo + hi)
    extent = float(np.max(hi - lo))
    if extent == 0.0:
        raise EmptyMesh("degenerate mesh: zero extent")
    scale = 2.0 * fill / extent
    return (verts - center) * scale, scale, center


def _point_triangle_distance(pts: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Exact distances from points (N, 3) to one triangle (3, 3)."""
    a, b, c = tri
    ab, ac = b - a, c - a
    ap = pts - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = pts - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = pts - c
    d5 = cp @ ab
    d6 = cp @ ac

    closest = np.empty_like(pts)
    done = np.zeros(len(pts), dtype=bool)

    def settle(mask, value):
        m = mask & ~done
        closest[m] = value[m] if value.ndim == 2 else value
        done[m] = True

    settle((d1 <= 0) & (d2 <= 0), np.broadcast_to(a, pts.shape))
    settle((d3 >= 0) & (d4 <= d3), np.broadcast_to(b, pts.shape))
    settle((d6 >= 0) & (d5 <= d6), np.broadcast_to(c, pts.shape))

    vc = d1 * d4 - d3 * d2
    m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
    settle(m, a + np.outer(v, ab))

    vb = d5 * d2 - d1 * d6
    m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
    settle(m, a + np.outer(w, ac))

    va = d3 * d6 - d5 * d4
    m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = (d4 - d3) + (d5 - d6)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(denom != 0, (d4 - d3) / denom, 0.0)
    settle(m, b + np.outer(w, c - b))

    denom = va + vb + vc
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
    settle(np.ones(len(pts), dtype=bool), a + np.outer(v, ab) + np.outer(w, ac))
    return np.linalg.norm(pts - closest, axis=1)


def parity_inside(
    verts: np.ndarray, faces: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Inside test by counting +x ray-triangle crossings per query point."""
    points = np.atleast_2d(points)
    inside = np.zeros(len(points), dtype=bool)
    tris = verts[faces]
    for p in range(len(points)):
        y, z = points[p, 1], points[p, 2]
        crossings = 0
        for t in tris:
            x = _ray_x_crossing(t, y, z)
            if x is not None and x > points[p, 0]:
                crossings += 1
        inside[p] = crossings % 2 == 1
    return inside


def _ray_x_crossing(tri: np.ndarray, y: float, z: float):
    (y0, z0), (y1, z1), (y2, z2) = tri[:, 1:][0], tri[:, 1:][1], tri[:, 1:][2]
    d = (y1 - y0) * (z2 - z0) - (y2 - y0) * (z1 - z0)
    if d == 0:
        return None
    l1 = ((y - y0) * (z2 - z0) - (y2 - y0) * (z - z0)) / d
    l2 = ((y1 - y0) * (z - z0) - (y - y0) * (z1 - z0)) / d
    l0 = 1.0 - l1 - l2
    if l0 < 0 or l1 < 0 or l2 < 0:
        return None
    return l0 * tri[0, 0] + l1 * tri[1, 0] + l2 * tri[2, 0]


def _column_signs(
    verts: np.ndarray, faces: np.ndarray, grid: TsdfGrid
) -> np.ndarray:
    """Parity signs for every voxel: -1 inside, +1 outside."""
    r = grid.resolution
    vs = grid.voxel_size
    coords = grid.axis_coords()
    ray_y = coords + _JITTER[0] * vs * 1e-3
    ray_z = coords + _JITTER[1] * vs * 1e-3
    crossings: list[list[float]] = [[] for _ in range(r * r)]
    tris = verts[faces]
    for t in tris:
        ymin, ymax = t[:, 1].min(), t[:, 1].max()
        zmin, zmax = t[:, 2].min(), t[:, 2].max()
        j0 = np.searchsorted(ray_y, ymin)
        j1 = np.searchsorted(ray_y, ymax, side="right")
        k0 = np.searchsorted(ray_z, zmin)
        k1 = np.searchsorted(ray_z, zmax, side="right")
        if j0 >= j1 or k0 >= k1:
            continue
        yy, zz = np.meshgrid(ray_y[j0:j1], ray_z[k0:k1], indexing="ij")
        (y0, z0), (y1, z1), (y2, z2) = t[0, 1:], t[1, 1:], t[2, 1:]
        d = (y1 - y0) * (z2 - z0) - (y2 - y0) * (z1 - z0)
        if d == 0:
            continue
        l1 = ((yy - y0) * (z2 - z0) - (y2 - y0) * (zz - z0)) / d
        l2 = ((y1 - y0) * (zz - z0) - (yy - y0) * (z1 - z0)) / d
        l0 = 1.0 - l1 - l2
        hit = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
        if not np.any(hit):
            continue
        xs = l0 * t[0, 0] + l1 * t[1, 0] + l2 * t[2, 0]
        jj, kk = np.nonzero(hit)
        for j, k, x in zip(jj + j0, kk + k0, xs[hit]):
            crossings[j * r + k].append(x)
    signs = np.ones((r, r, r), dtype=np.int8)
    xc = coords
    for j in range(r):
        for k in range(r):
            cs = crossings[j * r + k]
            if not cs:
                continue
            cs = np.sort(np.asarray(cs))
            n_after = len(cs) - np.searchsorted(cs, xc, side="right")
            signs[:, j, k] = np.where(n_after % 2 == 1, -1, 1)
    return signs


def voxelize_mesh(
    verts: np.ndarray,
    faces: np.ndarray,
    resolution: int,
    tau_factor: float = 1.0,
    force_parity: bool = False,
) -> TsdfGrid:
    """Voxelize a normalized watertight mesh into a TSDF over [-1, 1]^3."""
    if len(verts) == 0 or len(faces) == 0:
        raise EmptyMesh("no geometry")
    if not force_parity and not is_watertight(faces):
        raise NonWatertightMesh(
            "mesh has open edges; pass force_parity to sign anyway"
        )
    grid = TsdfGrid.empty(resolution, tau_factor)
    vs = grid.voxel_size
    band = grid.tau + vs * np.sqrt(3.0) + 0.5 * vs

    signs = _column_signs(verts, faces, grid)

    dist = np.full((resolution,) * 3, np.inf)
    coords = grid.axis_coords()
    tris = verts[faces]
    for t in tris:
        lo = t.min(axis=0) - band
        hi = t.max(axis=0) + band
        sl = grid.box_slices(lo, hi)
        shape = tuple(s.stop - s.start for s in sl)
        if 0 in shape:
            continue
        xs, ys, zs = np.meshgrid(
            coords[sl[0]], coords[sl[1]], coords[sl[2]], indexing="ij"
        )
        pts = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)
        d = _point_triangle_distance(pts, t).reshape(shape)
        np.minimum(dist[sl], d, out=dist[sl])

    inside = signs < 0
    # beyond the exact band, approximate |SDF| with a distance transform
    d_in = (ndimage.distance_transform_edt(inside) - 0.5) * vs
    d_out = (ndimage.distance_transform_edt(~inside) - 0.5) * vs
    approx = np.where(inside, d_in, d_out)
    mag = np.where(np.isfinite(dist), dist, np.maximum(approx, grid.tau))
    raw = np.where(inside, -mag, mag)
    grid.raw_sdf = raw.astype(np.float32)
    grid.values = np.clip(raw, -grid.tau, grid.tau).astype(np.float32)
    return grid
