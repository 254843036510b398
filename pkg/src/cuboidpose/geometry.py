"""Pinhole camera, rigid poses and cuboid keypoints.

Conventions used everywhere in the package:

* camera frame is +x right, +y down, +z forward;
* image origin is the top-left corner, pixel centers sit on integer coordinates;
* quaternions are stored scalar-first ``(w, x, y, z)``.

Cuboid keypoint order: indices 0-7 are the corners, enumerated z-major, then y,
then x, with the minus sign first on every axis::

    index = 4 * iz + 2 * iy + ix,   sign = -1 if i* == 0 else +1

so corner 0 is ``(-dx, -dy, -dz) / 2`` and corner 7 is ``(+dx, +dy, +dz) / 2``.
Index 8 is the centroid (object origin).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NUM_KEYPOINTS = 9
NUM_CORNERS = 8
CENTROID = 8

# (8, 3) array of corner signs in the documented order.
CORNER_SIGNS = np.array(
    [[1 if ix else -1, 1 if iy else -1, 1 if iz else -1]
     for iz in (0, 1) for iy in (0, 1) for ix in (0, 1)],
    dtype=np.float64,
)


class BehindCameraError(ValueError):
    """A point with non-positive depth was projected."""

    def __init__(self, message="behind camera", index=None):
        if index is not None:
            message = f"{message} (keypoint {index})"
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image "
                f"{self.width}x{self.height}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix to unit quaternion (w >= 0), Shepperd's method."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def axis_angle_to_quat(axis_angle) -> np.ndarray:
    v = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        # second-order accurate near zero
        q = np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
        return q / np.linalg.norm(q)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * v / angle])


def rotation_angle(R) -> float:
    """Geodesic angle (radians) of a rotation matrix."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform taking object-frame points to camera (or world) frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("rotation quaternion must be finite and non-zero")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        # already-unit quaternions are kept bit-exact so serialisation round trips
        q = q / n if abs(n - 1.0) > 4e-16 else q.copy()
        q.flags.writeable = False
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, R, t) -> "Pose":
        return cls(matrix_to_quat(R), t)

    @classmethod
    def from_axis_angle(cls, axis_angle, t=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(axis_angle_to_quat(axis_angle), t)

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def homogeneous(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.matrix
        T[:3, 3] = self.translation
        return T

    def apply(self, points) -> np.ndarray:
        """Transform ``(..., 3)`` points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.matrix.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first."""
        q = quat_multiply(self.rotation, other.rotation)
        t = self.matrix @ other.translation + self.translation
        return Pose(q, t)

    __matmul__ = compose

    def inverse(self) -> "Pose":
        w, x, y, z = self.rotation
        q_inv = np.array([w, -x, -y, -z])
        return Pose(q_inv, -(quat_to_matrix(q_inv) @ self.translation))

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def rotation_error(a: Pose, b: Pose) -> float:
    """Angle in radians of the relative rotation between two poses."""
    return rotation_angle(a.matrix.T @ b.matrix)


def translation_error(a: Pose, b: Pose) -> float:
    return float(np.linalg.norm(a.translation - b.translation))


@dataclass(frozen=True, eq=False)
class CuboidModel:
    name: str
    dims: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dims, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValueError(f"cuboid {self.name!r}: dims must be positive, got {d.tolist()}")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "dims", d)

    def __eq__(self, other):
        if not isinstance(other, CuboidModel):
            return NotImplemented
        return self.name == other.name and np.array_equal(self.dims, other.dims)

    def __hash__(self):
        return hash((self.name, tuple(self.dims)))

    @property
    def keypoints(self) -> np.ndarray:
        """(9, 3) object-frame keypoints: 8 corners then the centroid."""
        corners = CORNER_SIGNS * (self.dims / 2.0)
        return np.vstack([corners, np.zeros((1, 3))])


def project_point(p, K: CameraIntrinsics) -> np.ndarray:
    x, y, z = np.asarray(p, dtype=np.float64)
    if not z > 0:
        raise BehindCameraError()
    return np.array([K.fx * x / z + K.cx, K.fy * y / z + K.cy])


def project_points(points, K: CameraIntrinsics) -> np.ndarray:
    """Vectorised :func:`project_point` on ``(n, 3)`` points."""
    p = np.asarray(points, dtype=np.float64)
    bad = np.flatnonzero(~(p[:, 2] > 0))
    if bad.size:
        raise BehindCameraError(index=int(bad[0]))
    return np.column_stack([K.fx * p[:, 0] / p[:, 2] + K.cx,
                            K.fy * p[:, 1] / p[:, 2] + K.cy])


def cuboid_keypoints(model: CuboidModel, pose: Pose) -> np.ndarray:
    """(9, 3) keypoints of ``model`` placed by ``pose``."""
    return pose.apply(model.keypoints)


def project_keypoints(model: CuboidModel, pose: Pose, K: CameraIntrinsics) -> np.ndarray:
    """(9, 2) pixel coordinates of the cuboid keypoints.

    Raises :class:`BehindCameraError` carrying the index of the first keypoint
    with non-positive depth.
    """
    return project_points(cuboid_keypoints(model, pose), K)
