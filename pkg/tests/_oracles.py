"""Slow, independent reference implementations used as test oracles.

Everything here is written with explicit loops and without calling the code
under test, so agreement is evidence rather than tautology.
"""
import itertools
import math

import numpy as np
from scipy import ndimage


def gaussian_cell(u, v, x, y, sigma=2.0):
    return math.exp(-((u - x) ** 2 + (v - y) ** 2) / (2.0 * sigma * sigma))


def naive_belief(instances, H, W, sigma=2.0):
    """Per-pixel max over every instance's Gaussian, one cell at a time."""
    out = np.zeros((9, H, W))
    for k in range(9):
        for v in range(H):
            for u in range(W):
                best = 0.0
                for pts in instances:
                    best = max(best, gaussian_cell(u, v, pts[k][0], pts[k][1], sigma))
                out[k, v, u] = best
    return out


def scan_peaks(channel, threshold=0.1, window=5, sigma=1.0):
    """Exhaustive local-maximum scan over every cell and every window offset.

    Smoothing uses scipy.ndimage with zero padding. A cell is a peak when no
    window neighbour is larger and no equal neighbour comes first in raster
    order, and both smoothed and raw values reach ``threshold``.
    """
    raw = np.asarray(channel, dtype=np.float64)
    sm = ndimage.gaussian_filter(raw, sigma, mode="constant") if sigma > 0 else raw
    H, W = sm.shape
    half = window // 2
    cells = []
    for r in range(H):
        for c in range(W):
            if sm[r, c] < threshold or raw[r, c] < threshold:
                continue
            ok = True
            for dr in range(-half, half + 1):
                for dc in range(-half, half + 1):
                    rr, cc = r + dr, c + dc
                    if (dr, dc) == (0, 0) or not (0 <= rr < H and 0 <= cc < W):
                        continue
                    if sm[rr, cc] > sm[r, c] or (sm[rr, cc] == sm[r, c] and (dr, dc) < (0, 0)):
                        ok = False
            if ok:
                cells.append((r, c))
    return cells


def bilinear(grid, x, y):
    H, W = grid.shape
    c0, r0 = min(int(math.floor(x)), W - 2), min(int(math.floor(y)), H - 2)
    ax, ay = x - c0, y - r0
    return ((1 - ax) * (1 - ay) * grid[r0, c0] + ax * (1 - ay) * grid[r0, c0 + 1]
            + (1 - ax) * ay * grid[r0 + 1, c0] + ax * ay * grid[r0 + 1, c0 + 1])


def peak_angles(pos, k, centroid_positions, fields):
    """Angle between the bilinear field of corner k at pos and each centroid direction."""
    H, W = fields.shape[1:]
    x = min(max(pos[0], 0.0), W - 1.0)
    y = min(max(pos[1], 0.0), H - 1.0)
    fx, fy = bilinear(fields[2 * k], x, y), bilinear(fields[2 * k + 1], x, y)
    n = math.hypot(fx, fy)
    out = []
    for cx, cy in centroid_positions:
        dx, dy = cx - pos[0], cy - pos[1]
        dn = math.hypot(dx, dy)
        if n < 1e-6 or dn < 1e-9:
            out.append(math.pi)
        else:
            cosang = (fx * dx + fy * dy) / (n * dn)
            out.append(math.acos(max(-1.0, min(1.0, cosang))))
    return out


def brute_force_assignment(vertex_positions, centroid_positions, fields, threshold):
    """Best vertex->centroid mapping per corner channel by exhaustive search.

    For channel k every partial injective map from its peaks to centroids with
    all angles within ``threshold`` is enumerated; the winner assigns the most
    peaks, then has the smallest total angle. Returns ``{(k, peak index): centroid index}``.
    """
    out = {}
    m = len(centroid_positions)
    for k, peaks in enumerate(vertex_positions):
        ang = [peak_angles(p, k, centroid_positions, fields) for p in peaks]
        best_key, best_map = None, {}
        options = [[None] + [j for j in range(m) if a[j] <= threshold] for a in ang]
        for choice in itertools.product(*options):
            used = [j for j in choice if j is not None]
            if len(used) != len(set(used)):
                continue
            total = sum(ang[i][j] for i, j in enumerate(choice) if j is not None)
            key = (-len(used), total)
            if best_key is None or key < best_key:
                best_key = key
                best_map = {(k, i): j for i, j in enumerate(choice) if j is not None}
        out.update(best_map)
    return out


def residual_rmse(R, t, X, uv, fx, fy, cx, cy):
    """Reprojection RMSE by explicit per-point summation."""
    total = 0.0
    for p, q in zip(X, uv):
        xc = [sum(R[i][j] * p[j] for j in range(3)) + t[i] for i in range(3)]
        u = fx * xc[0] / xc[2] + cx
        v = fy * xc[1] / xc[2] + cy
        total += (u - q[0]) ** 2 + (v - q[1]) ** 2
    return math.sqrt(total / len(X))


def add_oracle(R1, t1, R2, t2, pts):
    total = 0.0
    for p in pts:
        a = [sum(R1[i][j] * p[j] for j in range(3)) + t1[i] for i in range(3)]
        b = [sum(R2[i][j] * p[j] for j in range(3)) + t2[i] for i in range(3)]
        total += math.sqrt(sum((a[i] - b[i]) ** 2 for i in range(3)))
    return total / len(pts)


def loss_oracle(pred_maps, pred_fields, gt_maps, gt_fields):
    total = 0.0
    for p, g in ((pred_maps, gt_maps), (pred_fields, gt_fields)):
        for a, b in zip(np.asarray(p, dtype=np.float64).ravel().tolist(),
                        np.asarray(g, dtype=np.float64).ravel().tolist()):
            total += (a - b) * (a - b)
    return total


def trapezoid_auc(thresholds, accuracy):
    area = 0.0
    for i in range(1, len(thresholds)):
        area += 0.5 * (accuracy[i] + accuracy[i - 1]) * (thresholds[i] - thresholds[i - 1])
    return area / thresholds[-1]


def exhaustive_matching(cost):
    """Minimum-total-cost one-to-one matching of rows to columns (rows <= 4)."""
    n_rows, n_cols = cost.shape
    best, best_perm = math.inf, None
    k = min(n_rows, n_cols)
    for rows in itertools.combinations(range(n_rows), k):
        for cols in itertools.permutations(range(n_cols), k):
            total = sum(cost[r, c] for r, c in zip(rows, cols))
            if total < best:
                best, best_perm = total, dict(zip(rows, cols))
    return best_perm or {}


def uniform_rotation_mean_angle():
    """Mean geodesic angle of Haar-uniform rotations, by quadrature of (1 - cos t) / pi."""
    from scipy.integrate import quad
    val, _ = quad(lambda t: t * (1.0 - math.cos(t)) / math.pi, 0.0, math.pi)
    return val
