"""Peak extraction and greedy vertex-to-centroid association."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .geometry import CENTROID, NUM_CORNERS
from .labelgen import LabelGenConfig, map_to_image

REFINE_METHODS = ("gaussian", "centroid")


@dataclass(frozen=True)
class DetectionConfig:
    """Post-processing parameters.

    ``refine_method`` selects the subpixel estimator over the refine window:
    ``"centroid"`` is the belief-weighted mean, ``"gaussian"`` fits a quadratic
    to the log-belief (exact for Gaussian peaks; falls back to the centroid
    when the fit is not a maximum).
    """

    peak_threshold: float = 0.1
    nms_window: int = 5
    refine_window: int = 5
    smooth_sigma: float = 1.0
    angle_threshold: float = 0.5
    min_vertices: int = 4
    refine_method: str = "gaussian"

    def __post_init__(self):
        if not 0 < self.peak_threshold < 1:
            raise ValueError("peak_threshold must be in (0, 1)")
        for name in ("nms_window", "refine_window"):
            w = getattr(self, name)
            if int(w) != w or w < 3 or w % 2 == 0:
                raise ValueError(f"{name} must be an odd integer >= 3")
        if self.smooth_sigma < 0:
            raise ValueError("smooth_sigma must be >= 0")
        if not 0 < self.angle_threshold < np.pi:
            raise ValueError("angle_threshold must be in (0, pi)")
        if not 4 <= self.min_vertices <= 8:
            raise ValueError("min_vertices must be in [4, 8]")
        if self.refine_method not in REFINE_METHODS:
            raise ValueError(f"refine_method must be one of {REFINE_METHODS}")


@dataclass(frozen=True, eq=False)
class Peak:
    pos: np.ndarray  # (x, y) map coordinates
    confidence: float
    cell: tuple = (0, 0)  # integer (row, col) of the maximum

    def __repr__(self):
        return f"Peak(pos=({self.pos[0]:.3f}, {self.pos[1]:.3f}), confidence={self.confidence:.3f})"


@dataclass(eq=False)
class DetectedInstance:
    centroid: Peak
    vertices: list = field(default_factory=lambda: [None] * NUM_CORNERS)

    @property
    def vertex_count(self) -> int:
        return sum(v is not None for v in self.vertices)

    def keypoints(self):
        """(indices, (n, 2) map positions) of the assigned keypoints incl. centroid."""
        idx = [k for k, v in enumerate(self.vertices) if v is not None] + [CENTROID]
        pos = [self.vertices[k].pos for k in idx[:-1]] + [self.centroid.pos]
        return np.array(idx), np.array(pos, dtype=np.float64).reshape(-1, 2)

    def image_keypoints(self, lcfg: LabelGenConfig):
        idx, pos = self.keypoints()
        return idx, map_to_image(pos, lcfg)


def _windows(stack, cells, half, fill=np.nan):
    """(n, w, w) windows of a (C, H, W) stack around (channel, row, col) cells.

    Out-of-grid entries are ``fill``.
    """
    w = 2 * half + 1
    padded = np.pad(np.asarray(stack, dtype=np.float64), ((0, 0), (half, half), (half, half)),
                    constant_values=fill)
    off = np.arange(w)
    rows = cells[:, 1, None] + off  # padded coordinates of the window rows
    cols = cells[:, 2, None] + off
    return padded[cells[:, 0, None, None], rows[:, :, None], cols[:, None, :]]


def _centroid_offsets(win, half):
    w = np.clip(np.nan_to_num(win, nan=0.0), 0.0, None)
    off = np.arange(-half, half + 1, dtype=np.float64)
    s = w.sum(axis=(1, 2))
    s_safe = np.where(s > 0, s, 1.0)
    dx = (w.sum(axis=1) @ off) / s_safe
    dy = (w.sum(axis=2) @ off) / s_safe
    return np.column_stack([np.where(s > 0, dx, 0.0), np.where(s > 0, dy, 0.0)])


def _parabola_vertex(marg, half):
    """Vertex of a weighted quadratic fit to log(marginal), per row; NaN if not a maximum.

    The marginal of a separable Gaussian over a window is itself Gaussian, so
    the fit is exact for noise-free labels. Weights are the squared marginals.
    """
    x = np.arange(-half, half + 1, dtype=np.float64)
    ok = np.isfinite(marg) & (marg > 1e-9)
    m = np.where(ok, marg, 1.0)
    w = np.where(ok, m * m, 0.0)
    y = np.log(m)
    X = np.stack([np.ones_like(x), x, x * x], axis=1)  # (w, 3)
    A = np.einsum("nk,ki,kj->nij", w, X, X)
    b = np.einsum("nk,ki,nk->ni", w, X, y)
    out = np.full(len(marg), np.nan)
    good = (ok.sum(axis=1) >= 3) & (np.abs(np.linalg.det(A)) > 1e-300)
    if np.any(good):
        coef = np.linalg.solve(A[good], b[good][:, :, None])[:, :, 0]
        c1, c2 = coef[:, 1], coef[:, 2]
        vtx = np.where(c2 < 0, -c1 / (2 * np.where(c2 < 0, c2, -1.0)), np.nan)
        out[good] = vtx
    return out


def _gaussian_offsets(win, half):
    # the out-of-grid part of a window is whole rows and columns, so the valid
    # cells form a rectangle and marginals over it stay Gaussian
    valid = np.isfinite(win)
    clean = np.where(valid, win, 0.0)
    mx = np.where(valid.any(axis=1), clean.sum(axis=1), np.nan)  # per column
    my = np.where(valid.any(axis=2), clean.sum(axis=2), np.nan)  # per row
    return np.column_stack([_parabola_vertex(mx, half), _parabola_vertex(my, half)])


def _refine(raw, cells, cfg):
    half = cfg.refine_window // 2
    win = _windows(raw, cells, half)
    offs = _centroid_offsets(win, half)
    if cfg.refine_method == "gaussian":
        g = _gaussian_offsets(win, half)
        fit_ok = np.all(np.isfinite(g), axis=1)
        offs[fit_ok] = g[fit_ok]
    return offs


@lru_cache(maxsize=32)
def _blur_matrix(n, sigma):
    """(n, n) banded matrix of a zero-padded Gaussian blur (same taps as ndimage)."""
    r = int(4.0 * sigma + 0.5)
    x = np.arange(-r, r + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    G = sum(v * np.eye(n, k=int(o)) for o, v in zip(x, k))
    G.flags.writeable = False
    return G


def _smooth(stack, cfg):
    """Blur rows and columns of each channel; equals ndimage.gaussian_filter with mode="constant"."""
    sig = cfg.smooth_sigma
    if sig > 0:
        _, H, W = stack.shape
        return _blur_matrix(H, sig) @ stack @ _blur_matrix(W, sig).T
    return stack


def _local_maxima(smooth, cells, half):
    """Mask of cells that are the first maximum (raster order) of their window."""
    win = _windows(smooth, cells, half, fill=-np.inf)
    n, w = len(cells), 2 * half + 1
    val = smooth[cells[:, 0], cells[:, 1], cells[:, 2]]
    flat = win.reshape(n, w * w)
    centre = w * w // 2
    # strictly greater anywhere, or equal at an earlier raster position, loses
    return ~(np.any(flat > val[:, None], axis=1) | np.any(flat[:, :centre] == val[:, None], axis=1))


def _peaks_all(raw, smooth, cfg):
    """Per-channel sorted peak lists for a (C, H, W) stack."""
    C = raw.shape[0]
    cand = np.argwhere((smooth >= cfg.peak_threshold) & (raw >= cfg.peak_threshold))
    if len(cand):
        cand = cand[_local_maxima(smooth, cand, cfg.nms_window // 2)]
    out = [[] for _ in range(C)]
    if len(cand) == 0:
        return out
    half = cfg.refine_window // 2
    offs = _refine(raw, cand, cfg)
    keep = np.all(np.abs(offs) <= half, axis=1)
    for (k, r, c), (dx, dy) in zip(cand[keep].tolist(), offs[keep].tolist()):
        out[k].append(Peak(np.array([c + dx, r + dy]), float(raw[k, r, c]), (r, c)))
    return [sort_peaks(p) for p in out]


def extract_peaks(channel, cfg: DetectionConfig = DetectionConfig()) -> list:
    """Local maxima of one belief channel, sorted by descending confidence.

    The channel is optionally smoothed (``smooth_sigma``). A cell is a peak when
    its smoothed value equals the maximum of its ``nms_window`` neighbourhood,
    no equal-valued cell precedes it in raster order (a plateau yields one
    peak), and both the smoothed and the raw value reach ``peak_threshold``.
    Subpixel refinement and the reported confidence use the raw values; peaks
    whose refined offset leaves the refine window are dropped.
    """
    raw = np.asarray(channel, dtype=np.float64)
    if raw.size == 0:
        return []
    if raw.ndim != 2:
        raise ValueError(f"expected a 2-D channel, got shape {raw.shape}")
    raw = raw[None]
    return _peaks_all(raw, _smooth(raw, cfg), cfg)[0]


def extract_all_peaks(maps, cfg: DetectionConfig = DetectionConfig()) -> list:
    """:func:`extract_peaks` on every channel of a (C, H, W) stack, in one pass."""
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3:
        raise ValueError(f"expected a (C, H, W) stack, got shape {maps.shape}")
    if maps.size == 0:
        return [[] for _ in range(maps.shape[0])]
    return _peaks_all(maps, _smooth(maps, cfg), cfg)


def sort_peaks(peaks) -> list:
    """Descending confidence, ties by (row, col)."""
    return sorted(peaks, key=lambda p: (-p.confidence, p.cell[0], p.cell[1]))


def sample_field(fields, k: int, pos) -> np.ndarray:
    """Bilinear sample of the (x, y) field of corner ``k`` at map position ``pos``."""
    f = np.asarray(fields)
    _, H, W = f.shape
    x, y = float(pos[0]), float(pos[1])
    if not (0 <= x <= W - 1 and 0 <= y <= H - 1):
        raise ValueError(f"position ({x}, {y}) outside field grid {W}x{H}")
    c0, r0 = min(int(x), W - 2) if W > 1 else 0, min(int(y), H - 2) if H > 1 else 0
    c1, r1 = min(c0 + 1, W - 1), min(r0 + 1, H - 1)
    ax, ay = x - c0, y - r0
    out = np.empty(2)
    for i, ch in enumerate((2 * k, 2 * k + 1)):
        g = f[ch]
        top = (1 - ax) * g[r0, c0] + ax * g[r0, c1]
        bot = (1 - ax) * g[r1, c0] + ax * g[r1, c1]
        out[i] = (1 - ay) * top + ay * bot
    return out


def vertex_angles(peak: Peak, k: int, centroids, fields) -> np.ndarray:
    """Angle between the sampled field at ``peak`` and the direction to each centroid.

    Returns ``pi`` for every centroid when the sampled field is (numerically) zero.
    Positions outside the grid are clamped onto it before sampling.
    """
    f = np.asarray(fields)
    _, H, W = f.shape
    pos = np.clip(peak.pos, [0, 0], [W - 1, H - 1])
    v = sample_field(f, k, pos)
    vn = np.linalg.norm(v)
    out = np.full(len(centroids), np.pi)
    if vn < 1e-6:
        return out
    v = v / vn
    for j, cen in enumerate(centroids):
        d = cen.pos - peak.pos
        dn = np.linalg.norm(d)
        if dn < 1e-9:
            continue
        out[j] = np.arccos(np.clip(np.dot(v, d / dn), -1.0, 1.0))
    return out


def associate_instances(vertex_peaks, centroid_peaks, fields, cfg: DetectionConfig = DetectionConfig()) -> list:
    """Greedy assignment of corner peaks to centroid peaks.

    Channels are processed in order 0..7, peaks within a channel by descending
    confidence (ties by row, col). A peak goes to the centroid with the smallest
    angle if that angle is within ``cfg.angle_threshold`` and the centroid's
    slot for this corner is still free; otherwise it is dropped. Instances with
    fewer than ``cfg.min_vertices`` corners are discarded.
    """
    centroids = sort_peaks(centroid_peaks)
    instances = [DetectedInstance(c) for c in centroids]
    if not instances:
        return []
    for k in range(NUM_CORNERS):
        for peak in sort_peaks(vertex_peaks[k]):
            ang = vertex_angles(peak, k, centroids, fields)
            j = int(np.argmin(ang))
            if ang[j] <= cfg.angle_threshold and instances[j].vertices[k] is None:
                instances[j].vertices[k] = peak
    return [inst for inst in instances if inst.vertex_count >= cfg.min_vertices]


def detect(maps, fields, cfg: DetectionConfig = DetectionConfig()) -> list:
    """Peaks on all nine channels followed by association.

    Positions stay in map coordinates; use
    :meth:`DetectedInstance.image_keypoints` to get image pixels.
    """
    peaks = extract_all_peaks(maps, cfg)
    return associate_instances(peaks[:NUM_CORNERS], peaks[CENTROID], fields, cfg)
