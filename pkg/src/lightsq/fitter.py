"""Single-superquadric fitting against the current TSDF.

Outer loop: gather the voxel neighborhood, compute per-voxel weights
(inside-voxel decay vs. Gaussian TSDF matching) and the variance update,
then take damped Gauss-Newton steps on the 11 parameters. Weights and
variance are frozen within each outer iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateWeights, EmptyNeighborhood
from .grid import TsdfGrid
from .superquadric import EPS_MAX, EPS_MIN, Superquadric, quat_from_rotvec, quat_multiply

_SUBSAMPLE_SEED = 71923
_A_MIN = 1e-3
_FD_STEP = 1e-5
_FD_STEP_ANGLE = 1e-4


@dataclass
class FitConfig:
    w: float = 0.02  # prior coverage probability, 1/expected primitive count
    C: float = 1.0  # decay weighting constant
    max_outer_iters: int = 40
    param_tol: float = 1e-4
    neighborhood_scale: float = 1.3
    max_inner_iters: int = 8
    max_voxels: int = 12000  # residual subsample cap per outer iteration
    axis_restarts: int = 2  # extra z-role reassignment restarts after a loose fit
    probe_outer_iters: int = 12  # budget for the ellipsoid stage and restarts

    def __post_init__(self):
        if not 0.0 < self.w < 1.0:
            raise ValueError("w must be in (0, 1)")
        if self.C <= 0:
            raise ValueError("C must be positive")


@dataclass
class FitResult:
    sq: Superquadric
    final_residual: float  # weighted SSE on the final neighborhood
    iters: int
    converged: bool
    mean_residual: float = 0.0  # SSE normalized by the weight mass


def lambda_weights(
    phi_tau: np.ndarray, phi_theta_tau: np.ndarray, sigma2: float, config: FitConfig
) -> np.ndarray:
    """Per-voxel penalty weights in (0, 1].

    Exterior voxels always get weight 1; interior voxels get the Gaussian
    matching kernel damped by the inside-voxel decay term C(1-w)/w.
    """
    p = np.exp(-((phi_tau - phi_theta_tau) ** 2) / (2.0 * sigma2))
    decay = (phi_tau < 0) * (config.C * (1.0 - config.w) / config.w)
    return p / (decay + p)


def update_sigma(residuals: np.ndarray, weights: np.ndarray, tau: float) -> float:
    """Weighted residual variance, floored at tau^2 for stability."""
    wsum = float(np.sum(weights))
    if wsum == 0.0:
        raise DegenerateWeights("all weights are zero")
    s2 = float(np.sum(weights * residuals**2) / wsum)
    return max(s2, tau * tau)


def _params(sq: Superquadric) -> np.ndarray:
    return np.concatenate(
        [[sq.eps1, sq.eps2], sq.a, np.zeros(3), sq.translation]
    )


def _apply_params(ref: Superquadric, p: np.ndarray) -> Superquadric:
    """Build a superquadric from a parameter vector; rotation entries are a
    tangent increment composed onto the reference quaternion."""
    eps1 = float(np.clip(p[0], EPS_MIN, EPS_MAX))
    eps2 = float(np.clip(p[1], EPS_MIN, EPS_MAX))
    a = np.maximum(p[2:5], _A_MIN)
    quat = quat_multiply(quat_from_rotvec(p[5:8]), ref.quat)
    return Superquadric(eps1, eps2, a, quat, p[8:11])


def _fd_steps() -> np.ndarray:
    h = np.full(11, _FD_STEP)
    h[5:8] = _FD_STEP_ANGLE
    return h


def clamped_jacobian_probe(sq: Superquadric, x: np.ndarray, tau: float) -> np.ndarray:
    """Central-difference gradient of the truncated SRDF at one point with
    respect to the 11 parameters. Zeros in clamp-saturated regions are
    expected."""
    p0 = _params(sq)
    h = _fd_steps()
    grad = np.zeros(11)
    for i in range(11):
        pp, pm = p0.copy(), p0.copy()
        pp[i] += h[i]
        pm[i] -= h[i]
        fp = _apply_params(sq, pp).srdf_truncated(x, tau)
        fm = _apply_params(sq, pm).srdf_truncated(x, tau)
        grad[i] = (float(fp) - float(fm)) / (2.0 * h[i])
    return grad


def _gather(grid: TsdfGrid, sq: Superquadric, config: FitConfig):
    """Neighborhood voxels for one outer iteration.

    Voxels where both fields are clamp-saturated with matching sign carry
    no information, so the sample keeps every band/overreach voxel and only
    a bounded random subset of the saturated bulk.
    """
    margin = config.neighborhood_scale * float(np.max(sq.a)) + grid.tau
    lo, hi = sq.world_aabb(margin)
    sl = grid.box_slices(lo, hi)
    sub = grid.values[sl]
    idx = np.indices(sub.shape).reshape(3, -1).T + np.array(
        [s.start for s in sl], dtype=np.int64
    )
    phi = sub.ravel().astype(np.float64)
    if len(phi) > config.max_voxels:
        tau = grid.tau
        pred = sq.srdf_truncated(grid.index_to_world(idx), tau)
        informative = (
            (np.abs(phi) < tau)
            | (np.abs(pred) < tau)
            | ((pred < 0) & (phi >= 0))
        )
        rng = np.random.default_rng(_SUBSAMPLE_SEED)
        info = np.nonzero(informative)[0]
        n_info = min(len(info), int(0.8 * config.max_voxels))
        if n_info < len(info):
            info = rng.choice(info, size=n_info, replace=False)
        bulk = np.nonzero(~informative)[0]
        n_bulk = min(len(bulk), config.max_voxels - n_info)
        if n_bulk < len(bulk):
            bulk = rng.choice(bulk, size=n_bulk, replace=False)
        keep = np.concatenate([info, bulk])
        keep.sort()
        idx, phi = idx[keep], phi[keep]
    return grid.index_to_world(idx), phi


def _residual_jacobian(
    sq: Superquadric,
    pts: np.ndarray,
    tau: float,
    mask: np.ndarray,
    base: np.ndarray,
) -> np.ndarray:
    """One-sided differences sharing the unperturbed prediction."""
    p0 = _params(sq)
    h = _fd_steps()
    jac = np.zeros((len(pts), 11))
    for i in range(11):
        if not mask[i]:
            continue
        pp = p0.copy()
        pp[i] += h[i]
        fp = _apply_params(sq, pp).srdf_truncated(pts, tau)
        jac[:, i] = (fp - base) / h[i]
    return jac


def fit_one(
    grid: TsdfGrid, init: Superquadric, config: FitConfig | None = None
) -> FitResult:
    """Fit one superquadric to the TSDF inside its moving neighborhood.

    Runs two stages: an ellipsoid stage with the shape exponents frozen at
    their current values (pose and scales are far better conditioned without
    exponent coupling), then a full 11-parameter stage.
    """
    config = config or FitConfig()
    probe_cfg = replace(
        config, max_outer_iters=min(config.probe_outer_iters, config.max_outer_iters)
    )
    mask = np.ones(11, dtype=bool)
    mask[:2] = False
    stage_a = _fit_stage(grid, init, probe_cfg, mask)
    full = np.ones(11, dtype=bool)
    stage_b = _fit_stage(grid, stage_a.sq, config, full)
    best = stage_b
    iters = stage_a.iters + stage_b.iters
    # the exponent roles depend on which local axis plays z; when the full fit
    # is not clearly converged, retry from the other two role assignments
    if config.axis_restarts and not _is_tight(best, grid.tau):
        rolls = _axis_rolls(stage_a.sq)[: config.axis_restarts]
        for rolled in rolls:
            alt = _fit_stage(grid, rolled, probe_cfg, full)
            iters += alt.iters
            if alt.mean_residual < best.mean_residual:
                best = alt
            if _is_tight(best, grid.tau):
                break
    if stage_a.mean_residual < best.mean_residual:
        best = stage_a
    return FitResult(
        best.sq, best.final_residual, iters, best.converged, best.mean_residual
    )


def _is_tight(res: FitResult, tau: float) -> bool:
    return res.converged and res.mean_residual < 1e-12


def _axis_rolls(sq: Superquadric):
    """The two cyclic reassignments of which local axis takes the z role."""
    out = []
    r = sq.rotation_matrix
    for perm in ((1, 2, 0), (2, 0, 1)):
        cols = np.column_stack([r[:, perm[0]], r[:, perm[1]], r[:, perm[2]]])
        out.append(
            Superquadric(
                sq.eps1,
                sq.eps2,
                sq.a[list(perm)],
                _quat_from_matrix(cols),
                sq.translation,
            )
        )
    return out


def _quat_from_matrix(m: np.ndarray) -> np.ndarray:
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 1e-12)) * 2
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    from .superquadric import quat_normalize

    return quat_normalize(q)


def pca_orientation(points: np.ndarray) -> np.ndarray:
    """Quaternion aligning the local z axis with the dominant spread of a
    point cloud. A sphere initialized this way is shape-identical but starts
    the rotation parameters near the component's principal frame."""
    pts = np.atleast_2d(points)
    if len(pts) < 4:
        return np.array([1.0, 0.0, 0.0, 0.0])
    cov = np.cov(pts.T)
    evals, evecs = np.linalg.eigh(cov)  # ascending eigenvalues
    r = np.column_stack([evecs[:, 1], evecs[:, 0], evecs[:, 2]])
    if np.linalg.det(r) < 0:
        r[:, 1] = -r[:, 1]
    return _quat_from_matrix(r)


def _fit_stage(
    grid: TsdfGrid, init: Superquadric, config: FitConfig, param_mask: np.ndarray
) -> FitResult:
    tau = grid.tau
    sq = init
    sigma2 = None
    best_sq, best_score = init, np.inf
    converged = False
    outer = 0
    stall_strikes = 0

    pts, phi = _gather(grid, sq, config)
    if not np.any(phi < 0):
        raise EmptyNeighborhood("no interior voxel in the initial neighborhood")

    for outer in range(1, config.max_outer_iters + 1):
        if outer > 1:
            pts, phi = _gather(grid, sq, config)
            if len(phi) == 0:
                break
        pred = sq.srdf_truncated(pts, tau)
        res = pred - phi
        if sigma2 is None:
            sigma2 = max(float(np.mean(res**2)), tau * tau)
        lam = lambda_weights(phi, pred, sigma2, config)
        sqrt_lam = np.sqrt(lam)

        # damped Gauss-Newton on the frozen weighted objective
        p_cur = _params(sq)
        cost = float(np.sum(lam * res**2))
        mu = 1e-3
        rejects = 0
        stalled = False
        start_params = p_cur.copy()
        accepted_any = False
        for _ in range(config.max_inner_iters):
            base = sq.srdf_truncated(pts, tau)
            jac = _residual_jacobian(sq, pts, tau, param_mask, base) * sqrt_lam[:, None]
            r_w = sqrt_lam * (base - phi)
            jtj = jac.T @ jac
            jtr = jac.T @ r_w
            diag = np.diag(jtj).copy()
            diag[diag < 1e-12] = 1e-12
            step_ok = False
            while rejects < 8:
                try:
                    dp = np.linalg.solve(jtj + mu * np.diag(diag), -jtr)
                except np.linalg.LinAlgError:
                    rejects += 1
                    mu *= 10.0
                    continue
                trial = _apply_params(sq, p_cur + dp)
                trial_res = trial.srdf_truncated(pts, tau) - phi
                trial_cost = float(np.sum(lam * trial_res**2))
                if trial_cost < cost:
                    mu = max(mu * 0.1, 1e-12)
                    rejects = 0
                    sq = trial
                    # fold the rotation increment into the quaternion
                    p_cur = _params(sq)
                    cost = trial_cost
                    step_ok = True
                    accepted_any = True
                    break
                rejects += 1
                mu *= 10.0
            if not step_ok:
                stalled = True
                break

        # variance update for the next outer iteration
        pred = sq.srdf_truncated(pts, tau)
        try:
            sigma2 = update_sigma(pred - phi, lam, tau)
        except DegenerateWeights:
            pass

        lam_sum = float(np.sum(lam))
        score = cost / lam_sum if lam_sum > 0 else np.inf
        if score < best_score:
            best_score, best_sq = score, sq

        delta = np.max(np.abs(_params(sq) - start_params))
        if outer == 1 and not accepted_any:
            # NoProgress: stalled immediately, return the init
            return FitResult(init, cost, 0, False)
        if score < 1e-10:  # essentially exact
            converged = True
            break
        if delta < config.param_tol:
            # a stalled LM with an unchanged iterate is a dead end even after
            # re-weighting; a small accepted step still counts as converged
            converged = not stalled or accepted_any
            break
        # re-weighting sometimes unlocks a stalled LM, but not indefinitely
        stall_strikes = stall_strikes + 1 if stalled else 0
        if stall_strikes >= 2:
            break

    # monotone acceptance on the final neighborhood
    sq = best_sq
    pts, phi = _gather(grid, sq, config)
    pred = sq.srdf_truncated(pts, tau)
    lam = lambda_weights(phi, pred, sigma2 or tau * tau, config)
    sse = float(np.sum(lam * (pred - phi) ** 2))
    init_sse = float(
        np.sum(lam * (init.srdf_truncated(pts, tau) - phi) ** 2)
    )
    lam_sum = max(float(np.sum(lam)), 1e-12)
    if init_sse < sse:
        return FitResult(init, init_sse, outer, False, init_sse / lam_sum)
    return FitResult(sq, sse, outer, converged, sse / lam_sum)
