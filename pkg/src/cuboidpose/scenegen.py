"""Synthetic camera/object sampling and labelled-frame generation.

World frame is z-up with the fixation point at the origin by default. The
camera sits at spherical coordinates (azimuth, elevation, distance) around the
fixation point and looks at it with no roll relative to world up.

Per-frame seeds are split from a base seed by ``frame_seed(seed, index)``:
``seed XOR splitmix64(index)``, so frames generate independently in any order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, CuboidModel, Pose, cuboid_keypoints, project_points
from .labelgen import LabelGenConfig, image_to_map, render_labels

MASK64 = (1 << 64) - 1
WORLD_UP = np.array([0.0, 0.0, 1.0])
MIN_DEPTH = 0.05  # meters, every keypoint must be at least this far in front


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def frame_seed(seed: int, index: int) -> int:
    return (int(seed) & MASK64) ^ splitmix64(int(index))


@dataclass(frozen=True)
class CameraSamplerConfig:
    azimuth_range: tuple = (-120.0, 120.0)  # degrees
    elevation_range: tuple = (5.0, 85.0)  # degrees
    distance_range: tuple = (0.5, 1.5)  # meters
    fixation: tuple = (0.0, 0.0, 0.0)
    world_box: float = 0.4  # side of the object placement cube, meters
    max_retries: int = 50

    def __post_init__(self):
        for name in ("azimuth_range", "elevation_range", "distance_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if not (-180 <= self.azimuth_range[0] and self.azimuth_range[1] <= 180):
            raise ValueError("azimuth_range must lie within [-180, 180]")
        if not (-90 < self.elevation_range[0] and self.elevation_range[1] < 90):
            raise ValueError("elevation_range must lie within (-90, 90)")
        if not self.distance_range[0] > 0:
            raise ValueError("distance_range must be positive")
        if self.world_box < 0:
            raise ValueError("world_box must be >= 0")


def look_at(position, target, up=WORLD_UP) -> Pose:
    """Camera-to-world pose of a camera at ``position`` looking at ``target``."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.column_stack([right, down, forward])
    return Pose.from_matrix(R, position)


def camera_from_spherical(azimuth_deg, elevation_deg, distance, fixation=(0.0, 0.0, 0.0)) -> Pose:
    az, el = np.radians(azimuth_deg), np.radians(elevation_deg)
    fix = np.asarray(fixation, dtype=np.float64)
    pos = fix + distance * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    return look_at(pos, fix)


def sample_camera(cfg: CameraSamplerConfig, rng) -> Pose:
    """Camera-to-world pose with azimuth, elevation and distance each uniform."""
    az = rng.uniform(*cfg.azimuth_range)
    el = rng.uniform(*cfg.elevation_range)
    dist = rng.uniform(*cfg.distance_range)
    return camera_from_spherical(az, el, dist, cfg.fixation)


def uniform_quaternion(rng) -> np.ndarray:
    """Uniform random rotation from three uniforms (Shoemake's construction), (w, x, y, z)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    t2, t3 = 2 * np.pi * u2, 2 * np.pi * u3
    return np.array([b * np.cos(t3), a * np.sin(t2), a * np.cos(t2), b * np.sin(t3)])


@dataclass(eq=False)
class SceneSample:
    camera: Pose  # camera-to-world
    K: CameraIntrinsics
    objects: list = field(default_factory=list)  # (name, model, world pose)
    requested: int = 0

    @property
    def count(self) -> int:
        return len(self.objects)

    def camera_poses(self):
        """(name, model, object-to-camera Pose) per retained object."""
        w2c = self.camera.inverse()
        return [(name, model, w2c @ pose) for name, model, pose in self.objects]


def _visible(model, pose_cam, K):
    kp = cuboid_keypoints(model, pose_cam)
    if np.any(kp[:, 2] < MIN_DEPTH):
        return False
    c = project_points(kp[-1:], K)[0]
    return 0 <= c[0] <= K.width - 1 and 0 <= c[1] <= K.height - 1


def sample_scene(objects, counts, cfg: CameraSamplerConfig, K: CameraIntrinsics, rng,
                 camera: Pose = None) -> SceneSample:
    """Sample a camera and place ``counts[i]`` instances of ``objects[i]``.

    Positions are uniform in a cube of side ``cfg.world_box`` centred on the
    fixation point, orientations uniform on SO(3). An instance whose centroid
    falls outside the image, or with any keypoint closer than ``MIN_DEPTH``, is
    resampled up to ``cfg.max_retries`` times and then dropped.
    """
    cam = sample_camera(cfg, rng) if camera is None else camera
    w2c = cam.inverse()
    fix = np.asarray(cfg.fixation, dtype=np.float64)
    placed = []
    requested = 0
    for model, n in zip(objects, counts):
        requested += n
        for _ in range(n):
            for _ in range(cfg.max_retries + 1):
                pos = fix + (rng.random(3) - 0.5) * cfg.world_box
                pose = Pose(uniform_quaternion(rng), pos)
                if _visible(model, w2c @ pose, K):
                    placed.append((model.name, model, pose))
                    break
    return SceneSample(cam, K, placed, requested)


def generate_labeled_frame(s: SceneSample, lcfg: LabelGenConfig, object_name=None):
    """Render labels for a scene.

    Belief maps are per object class, so with several classes in one scene pass
    ``object_name`` to render only that class.
    Returns ``(belief_maps, vector_fields, [(name, camera-frame Pose), ...])``.
    """
    map_dims = lcfg.map_dims(s.K.width, s.K.height)
    instances, gt = [], []
    for name, model, pose in s.camera_poses():
        if object_name is not None and name != object_name:
            continue
        kp = project_points(cuboid_keypoints(model, pose), s.K)
        instances.append(image_to_map(kp, lcfg))
        gt.append((name, pose))
    maps, fields = render_labels(np.array(instances).reshape(-1, 9, 2), lcfg, map_dims)
    return maps, fields, gt


def corrupt_labels(maps, fields, noise_sigma: float, dropout_channels=(), rng=None):
    """Add clamped Gaussian noise to belief maps and zero whole corner channels.

    ``dropout_channels`` is a collection of corner indices (0-7) whose belief
    and field channels are zeroed, or an int ``k`` meaning ``k`` corners drawn
    without replacement from ``rng``.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    maps = np.array(maps, dtype=np.float32, copy=True)
    fields = np.array(fields, dtype=np.float32, copy=True)
    if isinstance(dropout_channels, (int, np.integer)):
        drop = rng.choice(8, size=int(dropout_channels), replace=False) if dropout_channels else []
    else:
        drop = list(dropout_channels)
    if noise_sigma > 0:
        noisy = maps.astype(np.float64) + rng.normal(0.0, noise_sigma, maps.shape)
        maps = np.clip(noisy, 0.0, 1.0).astype(np.float32)
    for k in drop:
        maps[k] = 0.0
        fields[2 * k:2 * k + 2] = 0.0
    return maps, fields
