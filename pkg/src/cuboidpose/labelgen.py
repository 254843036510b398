"""Ground-truth belief maps and vertex-to-centroid vector fields.

Labels live on the downscaled map grid. A map cell ``(u, v)`` (column, row) has
its center at map coordinate ``(u, v)``; image pixel ``p`` maps to ``p / downscale``
with no half-pixel offset.

Arrays are ``float32`` and laid out channel-first, ``(C, H, W)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CENTROID, NUM_CORNERS, NUM_KEYPOINTS

NUM_BELIEF_CHANNELS = NUM_KEYPOINTS
NUM_FIELD_CHANNELS = 2 * NUM_CORNERS


@dataclass(frozen=True)
class LabelGenConfig:
    sigma: float = 2.0
    vector_radius: float = 3.0
    downscale: int = 8
    rng_seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.vector_radius >= 1:
            raise ValueError("vector_radius must be >= 1")
        if int(self.downscale) != self.downscale or self.downscale < 1:
            raise ValueError("downscale must be an integer >= 1")

    def map_dims(self, width: int, height: int) -> tuple[int, int]:
        """(height, width) of the map grid for an image of the given size."""
        return height // self.downscale, width // self.downscale


def image_to_map(coord, cfg: LabelGenConfig) -> np.ndarray:
    return np.asarray(coord, dtype=np.float64) / cfg.downscale


def map_to_image(coord, cfg: LabelGenConfig) -> np.ndarray:
    return np.asarray(coord, dtype=np.float64) * cfg.downscale


def _as_instances(instances) -> np.ndarray:
    arr = np.asarray(instances, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, NUM_KEYPOINTS, 2))
    if arr.ndim != 3 or arr.shape[1:] != (NUM_KEYPOINTS, 2):
        raise ValueError(f"instances must be (n, 9, 2), got {arr.shape}")
    return arr


def render_belief_maps(instances, cfg: LabelGenConfig, map_dims) -> np.ndarray:
    """Render the 9 belief channels for keypoints given in map coordinates.

    Each keypoint contributes an unnormalised Gaussian of std ``cfg.sigma``;
    overlapping instances combine by per-cell maximum. Keypoints outside the
    grid still contribute their tails.
    """
    H, W = map_dims
    inst = _as_instances(instances)
    out = np.zeros((NUM_BELIEF_CHANNELS, H, W))
    u = np.arange(W, dtype=np.float64)
    v = np.arange(H, dtype=np.float64)
    two_s2 = 2.0 * cfg.sigma ** 2
    for pts in inst:
        for k, (x, y) in enumerate(pts):
            # separable Gaussian
            gx = np.exp(-((u - x) ** 2) / two_s2)
            gy = np.exp(-((v - y) ** 2) / two_s2)
            np.maximum(out[k], np.outer(gy, gx), out=out[k])
    return out.astype(np.float32)


def _disk_cells(center, radius, H, W):
    """Integer (rows, cols) of grid cells within ``radius`` of ``center``."""
    x, y = center
    c0, c1 = max(int(np.ceil(x - radius)), 0), min(int(np.floor(x + radius)), W - 1)
    r0, r1 = max(int(np.ceil(y - radius)), 0), min(int(np.floor(y + radius)), H - 1)
    if c0 > c1 or r0 > r1:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    rr, cc = np.mgrid[r0:r1 + 1, c0:c1 + 1]
    inside = (cc - x) ** 2 + (rr - y) ** 2 <= radius ** 2
    return rr[inside], cc[inside]


def render_vector_fields(instances, cfg: LabelGenConfig, map_dims) -> np.ndarray:
    """Render the 16 vector-field channels (x, y per corner).

    Cells within ``cfg.vector_radius`` of corner ``k`` hold the unit vector
    from that corner toward its instance's centroid. When several instances
    claim the same cell of a channel, one claimant is picked uniformly at
    random: every claim draws an iid uniform key and the largest key wins.
    A corner coinciding with its centroid writes (0, 0).
    """
    H, W = map_dims
    inst = _as_instances(instances)
    rng = np.random.default_rng(cfg.rng_seed)
    out = np.zeros((NUM_FIELD_CHANNELS, H, W))
    for k in range(NUM_CORNERS):
        best_key = np.full((H, W), -1.0)
        for pts in inst:
            rows, cols = _disk_cells(pts[k], cfg.vector_radius, H, W)
            if rows.size == 0:
                continue
            d = pts[CENTROID] - pts[k]
            n = np.hypot(d[0], d[1])
            d = d / n if n > 0 else np.zeros(2)
            keys = rng.random(rows.size)
            win = keys > best_key[rows, cols]
            rows, cols = rows[win], cols[win]
            best_key[rows, cols] = keys[win]
            out[2 * k, rows, cols] = d[0]
            out[2 * k + 1, rows, cols] = d[1]
    return out.astype(np.float32)


def render_labels(instances, cfg: LabelGenConfig, map_dims):
    """Belief maps and vector fields for the same instances."""
    return (render_belief_maps(instances, cfg, map_dims),
            render_vector_fields(instances, cfg, map_dims))
