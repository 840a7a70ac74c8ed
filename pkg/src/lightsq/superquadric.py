"""Superquadric primitive: implicit surface, signed radial distance, tessellation.

The primitive is parameterized by two shape exponents, three semi-axis
scales, and a rigid transform (unit quaternion + translation). All point
queries are vectorized over (N, 3) arrays of world-space points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_MIN = 0.1
EPS_MAX = 1.9

_ORIGIN_TOL = 1e-9


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    # canonical sign: w >= 0
    if q[0] < 0:
        q = -q
    return q


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_from_rotvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        return np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]]) / np.sqrt(
            1.0 + 0.25 * angle * angle
        )
    axis = v / angle
    s = np.sin(0.5 * angle)
    return np.array([np.cos(0.5 * angle), s * axis[0], s * axis[1], s * axis[2]])


def quat_from_euler_xyz(e: np.ndarray) -> np.ndarray:
    """Intrinsic x-y-z Euler angles to quaternion."""
    qx = quat_from_rotvec(np.array([e[0], 0.0, 0.0]))
    qy = quat_from_rotvec(np.array([0.0, e[1], 0.0]))
    qz = quat_from_rotvec(np.array([0.0, 0.0, e[2]]))
    return quat_multiply(quat_multiply(qx, qy), qz)


def euler_xyz_from_quat(q: np.ndarray) -> np.ndarray:
    """Inverse of :func:`quat_from_euler_xyz` (R = Rx @ Ry @ Rz)."""
    m = quat_to_matrix(q)
    sy = np.clip(m[0, 2], -1.0, 1.0)
    ry = np.arcsin(sy)
    if abs(sy) < 1.0 - 1e-9:
        rx = np.arctan2(-m[1, 2], m[2, 2])
        rz = np.arctan2(-m[0, 1], m[0, 0])
    else:  # gimbal lock; fold everything into rx
        rx = np.arctan2(m[2, 1], m[1, 1])
        rz = 0.0
    return np.array([rx, ry, rz])


def _signed_pow(u: np.ndarray, p: float) -> np.ndarray:
    return np.sign(u) * np.abs(u) ** p


@dataclass(frozen=True)
class Superquadric:
    """Immutable 11-parameter superquadric primitive."""

    eps1: float
    eps2: float
    a: np.ndarray  # (3,) positive semi-axis scales
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64).copy())
        object.__setattr__(self, "quat", quat_normalize(self.quat))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).copy()
        )
        if not (EPS_MIN <= self.eps1 <= EPS_MAX and EPS_MIN <= self.eps2 <= EPS_MAX):
            raise ValueError(f"shape exponents out of [{EPS_MIN}, {EPS_MAX}]")
        if not np.all(self.a > 0):
            raise ValueError("scales must be positive")

    @classmethod
    def sphere(cls, radius: float, center=(0.0, 0.0, 0.0)) -> "Superquadric":
        return cls(1.0, 1.0, np.full(3, radius), translation=np.asarray(center, float))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def to_local(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (p - self.translation) @ self.rotation_matrix

    def to_world(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return p @ self.rotation_matrix.T + self.translation

    def implicit_local(self, p: np.ndarray) -> np.ndarray:
        ax, ay, az = self.a
        e1, e2 = self.eps1, self.eps2
        u = np.abs(p[:, 0] / ax) ** (2.0 / e2) + np.abs(p[:, 1] / ay) ** (2.0 / e2)
        return u ** (e2 / e1) + np.abs(p[:, 2] / az) ** (2.0 / e1)

    def implicit(self, points: np.ndarray) -> np.ndarray:
        """Inside-outside function: < 1 inside, 1 on the surface, > 1 outside."""
        scalar = np.asarray(points).ndim == 1
        f = self.implicit_local(self.to_local(points))
        return float(f[0]) if scalar else f

    def srdf(self, points: np.ndarray) -> np.ndarray:
        """Signed radial distance: the distance to the surface along the ray
        from the local origin, negative inside.

        Along any direction u the value is exactly ``|p| - r_surface(u)``; for a
        sphere this is the exact signed distance. At the local origin the limit
        along the shortest semi-axis, ``-min(a)``, is returned.
        """
        scalar = np.asarray(points).ndim == 1
        p = self.to_local(points)
        norm = np.linalg.norm(p, axis=1)
        out = np.empty_like(norm)
        at_origin = norm < _ORIGIN_TOL
        out[at_origin] = -float(np.min(self.a))
        if np.any(~at_origin):
            q = p[~at_origin]
            f = self.implicit_local(q)
            n = norm[~at_origin]
            # n * f**(-e1/2) is the radial surface distance; log form avoids
            # overflow for tiny f near the origin
            with np.errstate(divide="ignore"):
                r_surf = np.exp(np.log(n) - 0.5 * self.eps1 * np.log(f))
            out[~at_origin] = n - r_surf
        return float(out[0]) if scalar else out

    def srdf_truncated(self, points: np.ndarray, tau: float) -> np.ndarray:
        return np.clip(self.srdf(points), -tau, tau)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.implicit(points) < 1.0

    def tessellate(self, subdivisions: int = 16):
        """Watertight lat-long triangulation via the parametric form.

        Returns ``(vertices, triangles)`` with shapes (V, 3) float and (F, 3)
        int. ``subdivisions`` controls the number of latitude bands.
        """
        if subdivisions < 2:
            raise ValueError("subdivisions must be >= 2")
        m = subdivisions  # latitude bands
        n = 2 * subdivisions  # longitude steps
        eta = np.linspace(-np.pi / 2, np.pi / 2, m + 1)[1:-1]
        omega = np.linspace(-np.pi, np.pi, n, endpoint=False)
        ce = _signed_pow(np.cos(eta), self.eps1)[:, None]
        se = _signed_pow(np.sin(eta), self.eps1)[:, None]
        co = _signed_pow(np.cos(omega), self.eps2)[None, :]
        so = _signed_pow(np.sin(omega), self.eps2)[None, :]
        ax, ay, az = self.a
        verts = np.stack(
            [
                (ax * ce * co).ravel(),
                (ay * ce * so).ravel(),
                np.broadcast_to(az * se, (m - 1, n)).ravel(),
            ],
            axis=1,
        )
        south = np.array([[0.0, 0.0, -az]])
        north = np.array([[0.0, 0.0, az]])
        verts = np.vstack([verts, south, north])
        i_south = (m - 1) * n
        i_north = i_south + 1

        tris = []
        # pole fans
        for j in range(n):
            jn = (j + 1) % n
            tris.append([i_south, jn, j])  # bottom row index 0
            top = (m - 2) * n
            tris.append([i_north, top + j, top + jn])
        # quad strips between latitude rows
        for i in range(m - 2):
            r0 = i * n
            r1 = (i + 1) * n
            for j in range(n):
                jn = (j + 1) % n
                tris.append([r0 + j, r0 + jn, r1 + j])
                tris.append([r1 + j, r0 + jn, r1 + jn])
        triangles = np.asarray(tris, dtype=np.int64)
        return self.to_world(verts), triangles

    def world_aabb(self, margin: float = 0.0):
        """Axis-aligned world box containing all points with f <= 1,
        expanded by ``margin`` on every face."""
        half = np.abs(self.rotation_matrix) @ self.a + margin
        return self.translation - half, self.translation + half

    def volume(self) -> float:
        """Closed-form superquadric volume (via Beta functions)."""
        from scipy.special import beta

        e1, e2 = self.eps1, self.eps2
        ax, ay, az = self.a
        return (
            2.0
            * ax
            * ay
            * az
            * e1
            * e2
            * beta(e1 / 2 + 1, e1)
            * beta(e2 / 2, e2 / 2)
        )
