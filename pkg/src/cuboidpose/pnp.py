"""EPnP pose recovery with Levenberg-damped Gauss-Newton refinement.

The EPnP solver expresses every object point as a barycentric combination of
four control points (three when the points are coplanar), solves for the
control points in the camera frame from the null space of the ``2n x 12``
projection system, and recovers ``R, t`` by rigid alignment.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import CameraIntrinsics, Pose

PLANARITY_RATIO = 1e-6


class PnPError(ValueError):
    pass


class InsufficientPointsError(PnPError):
    def __init__(self, n):
        super().__init__(f"insufficient points: need at least 4, got {n}")


class NoValidPoseError(PnPError):
    def __init__(self):
        super().__init__("no valid pose: every candidate places points behind the camera")


class DegenerateConfigurationError(PnPError):
    def __init__(self, why=""):
        super().__init__("degenerate configuration" + (f": {why}" if why else ""))


@dataclass(frozen=True, eq=False)
class Correspondences:
    object_points: np.ndarray  # (n, 3) meters, object frame
    image_points: np.ndarray  # (n, 2) pixels

    def __post_init__(self):
        X = np.asarray(self.object_points, dtype=np.float64).reshape(-1, 3)
        u = np.asarray(self.image_points, dtype=np.float64).reshape(-1, 2)
        if len(X) != len(u):
            raise ValueError(f"{len(X)} object points but {len(u)} image points")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(u))):
            raise ValueError("correspondences must be finite")
        if len(X) < 4:
            raise InsufficientPointsError(len(X))
        object.__setattr__(self, "object_points", X)
        object.__setattr__(self, "image_points", u)

    @property
    def n(self) -> int:
        return len(self.object_points)


@dataclass(frozen=True)
class PnpSolution:
    pose: Pose
    reprojection_rmse: float
    method_tag: str
    converged: bool = True


def reprojection_residuals(pose: Pose, c: Correspondences, K: CameraIntrinsics) -> np.ndarray:
    Xc = pose.apply(c.object_points)
    if np.any(Xc[:, 2] <= 0):
        raise PnPError("reprojection with non-positive depth")
    proj = np.column_stack([K.fx * Xc[:, 0] / Xc[:, 2] + K.cx, K.fy * Xc[:, 1] / Xc[:, 2] + K.cy])
    return proj - c.image_points


def reprojection_rmse(pose: Pose, c: Correspondences, K: CameraIntrinsics) -> float:
    r = reprojection_residuals(pose, c, K)
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1))))


def _rigid_align(A, B):
    """R, t minimising sum ||R a + t - b||^2 with det R = +1."""
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    H = (A - ca).T @ (B - cb)
    U, _, Vt = np.linalg.svd(H)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ D @ U.T
    return R, cb - R @ ca


def _control_points(X):
    """Control points in the object frame and whether the set is planar."""
    c0 = X.mean(axis=0)
    centered = X - c0
    scatter = centered.T @ centered
    evals, evecs = np.linalg.eigh(scatter)  # ascending
    if evals[-1] <= 1e-18:
        raise DegenerateConfigurationError("object points coincide")
    if evals[1] < PLANARITY_RATIO * evals[-1]:
        raise DegenerateConfigurationError("object points are collinear")
    n = len(X)
    planar = evals[0] < PLANARITY_RATIO * evals[-1]
    axes = [evecs[:, 2], evecs[:, 1]] if planar else [evecs[:, 2], evecs[:, 1], evecs[:, 0]]
    scales = [np.sqrt(evals[2] / n), np.sqrt(evals[1] / n)] + ([] if planar else [np.sqrt(evals[0] / n)])
    ctrl = np.vstack([c0] + [c0 + s * a for s, a in zip(scales, axes)])
    return ctrl, planar


def _barycentric(X, ctrl):
    B = (ctrl[1:] - ctrl[0]).T  # 3 x m
    rest, *_ = np.linalg.lstsq(B, (X - ctrl[0]).T, rcond=None)
    return np.column_stack([1.0 - rest.sum(axis=0), rest.T])


def _build_m(alphas, uv, K):
    n, m = alphas.shape
    M = np.zeros((2 * n, 3 * m))
    du = K.cx - uv[:, 0]
    dv = K.cy - uv[:, 1]
    for j in range(m):
        a = alphas[:, j]
        M[0::2, 3 * j] = a * K.fx
        M[0::2, 3 * j + 2] = a * du
        M[1::2, 3 * j + 1] = a * K.fy
        M[1::2, 3 * j + 2] = a * dv
    return M


@lru_cache(maxsize=None)
def _pairs(m):
    return tuple((a, b) for a in range(m) for b in range(a + 1, m))


@lru_cache(maxsize=None)
def _quad_index(N):
    return tuple((i, j) for i in range(N) for j in range(i, N))


def _l_matrix(kernel, m):
    """Rows: control-point pairs; columns: beta_i*beta_j products (i <= j)."""
    N = kernel.shape[1]
    v = kernel.T.reshape(N, m, 3)
    a, b = np.array(_pairs(m)).T
    d = v[:, a] - v[:, b]  # (N, pairs, 3)
    i, j = np.array(_quad_index(N)).T
    return np.where(i == j, 1.0, 2.0) * np.einsum("ipk,ipk->pi", d[i], d[j])


def _rho(ctrl):
    return np.array([np.sum((ctrl[a] - ctrl[b]) ** 2) for a, b in _pairs(len(ctrl))])


def _initial_betas(L, rho, N, nk):
    """Linearised beta estimate using the first ``N`` of ``nk`` kernel vectors."""
    col_of = {ij: k for k, ij in enumerate(_quad_index(nk))}
    use = [col_of[ij] for ij in _quad_index(N)]
    sol, *_ = np.linalg.lstsq(L[:, use], rho, rcond=None)
    return _betas_from_products(sol, N, nk)


@lru_cache(maxsize=None)
def _relinearization_equations(nk):
    """Monomial index arrays (p, q, r, s) with b_p b_q = b_r b_s as identities."""
    idx = _quad_index(nk)
    groups = {}
    for p in range(len(idx)):
        for q in range(p, len(idx)):
            key = tuple(sorted(idx[p] + idx[q]))
            groups.setdefault(key, []).append((p, q))
    eqs = [g[0] + other for g in groups.values() for other in g[1:]]
    return tuple(np.array(col) for col in zip(*eqs))


def _initial_betas_relinearized(L, rho, nk):
    """Beta estimate for the full ``nk``-dimensional kernel by relinearization.

    The linear system ``L b = rho`` leaves ``b = b0 + V lam`` undetermined; the
    consistency identities between the quadratic monomials are linear in the
    products ``lam_a lam_b`` and in ``lam``, which are solved for jointly.
    """
    b0, *_ = np.linalg.lstsq(L, rho, rcond=None)
    _, sv, Vt = np.linalg.svd(L)
    rank = int(np.sum(sv > sv[0] * 1e-12))
    V = Vt[rank:].T  # nullspace of L
    d = V.shape[1]
    b = b0
    if d > 0:
        p, q, r, s_ = _relinearization_equations(nk)
        ia, ic = np.array(_quad_index(d)).T
        const = b0[p] * b0[q] - b0[r] * b0[s_]
        lin = (b0[p, None] * V[q] + b0[q, None] * V[p]) - (b0[r, None] * V[s_] + b0[s_, None] * V[r])
        Q = (V[p][:, :, None] * V[q][:, None, :]) - (V[r][:, :, None] * V[s_][:, None, :])
        Q = Q + Q.transpose(0, 2, 1)
        quad = np.where(ia == ic, 0.5, 1.0) * Q[:, ia, ic]
        z, *_ = np.linalg.lstsq(np.hstack([quad, lin]), -const, rcond=None)
        b = b0 + V @ z[len(ia):]
    return _betas_from_products(b, nk, nk)


def _betas_from_products(b, N, nk):
    prod = dict(zip(_quad_index(N), b))
    betas = np.zeros(nk)
    betas[0] = np.sqrt(abs(prod[(0, 0)]))
    for i in range(1, N):
        betas[i] = np.sqrt(abs(prod[(i, i)])) * (np.sign(prod[(0, i)]) or 1.0)
    return betas


def _refine_betas(L, rho, betas, iters=10):
    """Gauss-Newton on the control-point distance residuals.

    Stops once the residual no longer shrinks by at least half per step; the
    reprojection refinement polishes the pose afterwards.
    """
    nk = len(betas)
    i, j = np.array(_quad_index(nk)).T
    cols = np.arange(len(i))
    r = L @ (betas[i] * betas[j]) - rho
    cost = r @ r
    for _ in range(iters):
        D = np.zeros((len(i), nk))
        D[cols, i] += betas[j]
        D[cols, j] += betas[i]
        A = L @ D
        try:
            step = np.linalg.solve(A.T @ A, -(A.T @ r))
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(A, -r, rcond=None)
        new = betas + step
        r_new = L @ (new[i] * new[j]) - rho
        cost_new = r_new @ r_new
        if not cost_new < cost:
            break
        betas, r, done = new, r_new, cost_new > 0.25 * cost
        cost = cost_new
        if done:
            break
    return betas


def solve_epnp(c: Correspondences, K: CameraIntrinsics) -> PnpSolution:
    """Closed-form EPnP; evaluates null-space dimensions 1-3 (1-2 when planar)."""
    if c.n < 4:
        raise InsufficientPointsError(c.n)
    X, uv = c.object_points, c.image_points
    ctrl, planar = _control_points(X)
    m = len(ctrl)
    alphas = _barycentric(X, ctrl)
    M = _build_m(alphas, uv, K)
    _, _, Vt = np.linalg.svd(M)
    kernel = Vt[::-1][:m].T  # columns ordered by increasing singular value
    L = _l_matrix(kernel, m)
    rho = _rho(ctrl)
    max_n = 2 if planar else 3
    candidates = [(N, _initial_betas(L, rho, N, m)) for N in range(1, max_n + 1)]
    if not planar:
        candidates.append((4, _initial_betas_relinearized(L, rho, m)))
    best = None
    for N, betas in candidates:
        betas = _refine_betas(L, rho, betas)
        ctrl_cam = (kernel @ betas).reshape(m, 3)
        Xc = alphas @ ctrl_cam
        if np.mean(Xc[:, 2]) < 0:
            Xc = -Xc
        R, t = _rigid_align(X, Xc)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            continue
        pose = Pose.from_matrix(R, t)
        if np.any(pose.apply(X)[:, 2] <= 0):
            continue
        err = reprojection_rmse(pose, c, K)
        if best is None or err < best.reprojection_rmse:
            best = PnpSolution(pose, err, f"epnp-{'planar' if planar else 'general'}-n{N}")
    if best is None:
        raise NoValidPoseError()
    return best


def _rodrigues(w):
    theta = np.sqrt(w @ w)
    Kx = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    if theta < 1e-8:
        return np.eye(3) + Kx + 0.5 * Kx @ Kx
    return np.eye(3) + (np.sin(theta) / theta) * Kx + ((1 - np.cos(theta)) / theta ** 2) * Kx @ Kx


def _project_with_jacobian(R, t, X, K):
    RX = X @ R.T
    P = RX + t
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    iz = 1.0 / z
    proj = np.column_stack([K.fx * x * iz + K.cx, K.fy * y * iz + K.cy])
    n = len(X)
    dpi = np.zeros((n, 2, 3))
    dpi[:, 0, 0] = K.fx * iz
    dpi[:, 0, 2] = -K.fx * x * iz * iz
    dpi[:, 1, 1] = K.fy * iz
    dpi[:, 1, 2] = -K.fy * y * iz * iz
    # left-perturbation exp(w) R: dP/dw = -[RX]_x
    skew = np.zeros((n, 3, 3))
    skew[:, 0, 1], skew[:, 0, 2] = -RX[:, 2], RX[:, 1]
    skew[:, 1, 0], skew[:, 1, 2] = RX[:, 2], -RX[:, 0]
    skew[:, 2, 0], skew[:, 2, 1] = -RX[:, 1], RX[:, 0]
    J = np.concatenate([dpi @ -skew, dpi], axis=2).reshape(2 * n, 6)
    return proj, J, z


def refine_gauss_newton(initial: PnpSolution, c: Correspondences, K: CameraIntrinsics,
                        max_iters: int = 20, damping: float = 1e-3) -> PnpSolution:
    """Levenberg-damped Gauss-Newton on the reprojection residuals.

    Rotation is updated on the left by an axis-angle increment, translation
    additively. Damping is multiplied by 10 on a rejected step and divided by
    10 on an accepted one (floor 1e-12). Only improving steps are accepted, so
    the returned RMSE never exceeds the initial one. ``converged`` is False when
    no step could be accepted from a pose with non-negligible error.
    """
    X, uv = c.object_points, c.image_points
    R, t = initial.pose.matrix, initial.pose.translation.copy()
    proj, J, z = _project_with_jacobian(R, t, X, K)
    r = (proj - uv).ravel()
    cost = r @ r
    initial_cost = cost
    lam = max(damping, 1e-12)
    accepted = 0
    at_precision = False
    for _ in range(max_iters):
        if cost < 1e-24:
            break
        JtJ = J.T @ J
        g = J.T @ r
        improved = False
        while lam < 1e12:
            A = JtJ + lam * np.diag(np.diag(JtJ) + 1e-12)
            try:
                step = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            if np.linalg.norm(step) <= 1e-12 * (1.0 + np.linalg.norm(t)):
                at_precision = True  # further tries would only raise lam
                break
            dR = _rodrigues(step[:3])
            R_new, t_new = dR @ R, t + step[3:]
            proj_new, J_new, z_new = _project_with_jacobian(R_new, t_new, X, K)
            if np.all(z_new > 0):
                r_new = (proj_new - uv).ravel()
                cost_new = r_new @ r_new
                if cost_new < cost:
                    R, t, J, r, cost = R_new, t_new, J_new, r_new, cost_new
                    lam = max(lam / 10, 1e-12)
                    improved = True
                    accepted += 1
                    break
            lam *= 10
        if not improved or np.linalg.norm(step) < 1e-14:
            break
    if accepted == 0:
        converged = at_precision or initial_cost < 1e-18 * len(X)
        return PnpSolution(initial.pose, initial.reprojection_rmse, initial.method_tag, converged)
    pose = Pose.from_matrix(R, t)
    rmse = reprojection_rmse(pose, c, K)
    if rmse > initial.reprojection_rmse:
        return PnpSolution(initial.pose, initial.reprojection_rmse, initial.method_tag, True)
    return PnpSolution(pose, rmse, initial.method_tag + "+gn", True)


def solve_pnp(c: Correspondences, K: CameraIntrinsics, max_iters: int = 20) -> PnpSolution:
    """EPnP followed by Gauss-Newton refinement."""
    return refine_gauss_newton(solve_epnp(c, K), c, K, max_iters=max_iters)
