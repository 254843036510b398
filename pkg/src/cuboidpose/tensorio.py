"""On-disk formats: DTNS tensors, object configs and pose manifests.

DTNS tensor layout (all integers unsigned 32-bit little-endian)::

    b"DTNS" | version (=1) | ndims | dims[ndims] | dtype (1 = float32 LE) | payload

Dims are row-major, slowest first (channels, height, width).

Object config, one object per line, ``#`` starts a comment::

    <name> <dx> <dy> <dz> [<model-points-file>]

Manifest (ground truth or estimates); ``object`` rows belong to the preceding
``frame`` row, estimates append ``<rmse> <vertex_count>``::

    frame <id> <fx> <fy> <cx> <cy> <width> <height>
    object <name> <qw> <qx> <qy> <qz> <tx> <ty> <tz> [<rmse> <vertex_count>]

Writers need exclusive access to their output file; readers may run concurrently.
"""
from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import CameraIntrinsics, CuboidModel, Pose

MAGIC = b"DTNS"
VERSION = 1
DTYPE_FLOAT32 = 1
BELIEF_CHANNELS = 9
FIELD_CHANNELS = 16


class TensorFormatError(ValueError):
    pass


class BadMagicError(TensorFormatError):
    pass


class UnsupportedVersionError(TensorFormatError):
    pass


class UnsupportedDtypeError(TensorFormatError):
    pass


class ShortPayloadError(TensorFormatError):
    pass


class ExtraBytesError(TensorFormatError):
    pass


class ParseError(ValueError):
    """Malformed config or manifest; carries the file and 1-based line number."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def encode_tensor(tensor) -> bytes:
    arr = np.asarray(tensor)
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    header = MAGIC + struct.pack(f"<II{arr.ndim}II", VERSION, arr.ndim, *arr.shape, DTYPE_FLOAT32)
    return header + arr.astype("<f4", copy=False).tobytes(order="C")


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    if len(data) < 12:
        raise ShortPayloadError("short payload: truncated header")
    version, ndims = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    end = 12 + 4 * ndims + 4
    if len(data) < end:
        raise ShortPayloadError("short payload: truncated header")
    dims = struct.unpack_from(f"<{ndims}I", data, 12)
    (dtype,) = struct.unpack_from("<I", data, 12 + 4 * ndims)
    if dtype != DTYPE_FLOAT32:
        raise UnsupportedDtypeError(f"unsupported dtype code {dtype}")
    nbytes = 4 * int(np.prod(dims, dtype=np.int64))
    have = len(data) - end
    if have < nbytes:
        raise ShortPayloadError(f"short payload: expected {nbytes} bytes, got {have}")
    if have > nbytes:
        raise ExtraBytesError(f"{have - nbytes} bytes after payload")
    return np.frombuffer(data, dtype="<f4", offset=end).reshape(dims).astype(np.float32)


def write_tensor(path, tensor) -> None:
    with open(path, "wb") as f:
        f.write(encode_tensor(tensor))


def read_tensor(path, channels: Optional[int] = None) -> np.ndarray:
    with open(path, "rb") as f:
        arr = decode_tensor(f.read())
    if channels is not None and (arr.ndim != 3 or arr.shape[0] != channels):
        raise TensorFormatError(f"{path}: expected {channels} x H x W tensor, got {arr.shape}")
    return arr


# -- object config ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObjectConfig:
    name: str
    dims: np.ndarray
    points_path: Optional[str] = None

    @property
    def model(self) -> CuboidModel:
        return CuboidModel(self.name, self.dims)

    def __eq__(self, other):
        return (isinstance(other, ObjectConfig) and self.name == other.name
                and np.array_equal(self.dims, other.dims) and self.points_path == other.points_path)


def _content_lines(text):
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_object_config_text(text: str, path="<string>") -> list:
    objects, seen = [], set()
    for lineno, tok in _content_lines(text):
        if len(tok) not in (4, 5):
            raise ParseError(path, lineno, "expected: name dx dy dz [points-file]")
        name = tok[0]
        try:
            dims = np.array([float(x) for x in tok[1:4]])
        except ValueError:
            raise ParseError(path, lineno, f"non-numeric dims for {name!r}") from None
        if not np.all(np.isfinite(dims)) or np.any(dims <= 0):
            raise ParseError(path, lineno, f"object {name!r}: dims must be positive")
        if name in seen:
            raise ParseError(path, lineno, f"duplicate object name {name!r}")
        seen.add(name)
        objects.append(ObjectConfig(name, dims, tok[4] if len(tok) == 5 else None))
    return objects


def parse_object_config(path) -> list:
    with open(path) as f:
        return parse_object_config_text(f.read(), path)


def serialize_object_config(objects) -> str:
    lines = ["# name dx dy dz [points-file]"]
    for o in objects:
        row = [o.name] + [repr(float(x)) for x in o.dims]
        if o.points_path:
            row.append(o.points_path)
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def load_model_points(obj: ObjectConfig, base_dir=".") -> Optional[np.ndarray]:
    """Model point cloud (``x y z`` per line) or ``None`` when not configured."""
    if not obj.points_path:
        return None
    path = obj.points_path if os.path.isabs(obj.points_path) else os.path.join(base_dir, obj.points_path)
    pts = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if pts.shape[1] != 3 or len(pts) == 0 or not np.all(np.isfinite(pts)):
        raise ValueError(f"{path}: expected a non-empty finite (m, 3) point list")
    return pts


# -- manifest ---------------------------------------------------------------

@dataclass(eq=False)
class ObjectPose:
    name: str
    pose: Pose
    rmse: Optional[float] = None
    vertex_count: Optional[int] = None


@dataclass(eq=False)
class FrameRecord:
    frame_id: int
    camera: CameraIntrinsics
    objects: list = field(default_factory=list)


def _pose_row(op: ObjectPose) -> str:
    vals = [repr(float(x)) for x in op.pose.rotation] + [repr(float(x)) for x in op.pose.translation]
    row = ["object", op.name] + vals
    if op.rmse is not None:
        row += [repr(float(op.rmse)), str(int(op.vertex_count if op.vertex_count is not None else 0))]
    return " ".join(row)


def serialize_manifest(frames) -> str:
    lines = ["# frame id fx fy cx cy width height",
             "# object name qw qx qy qz tx ty tz [rmse vertex_count]"]
    for fr in sorted(frames, key=lambda f: f.frame_id):
        K = fr.camera
        lines.append(" ".join(["frame", str(fr.frame_id)] + [repr(float(v)) for v in (K.fx, K.fy, K.cx, K.cy)]
                              + [str(K.width), str(K.height)]))
        lines.extend(_pose_row(op) for op in fr.objects)
    return "\n".join(lines) + "\n"


def parse_manifest_text(text: str, path="<string>") -> list:
    frames, ids = [], set()
    for lineno, tok in _content_lines(text):
        kind = tok[0]
        try:
            if kind == "frame":
                if len(tok) != 8:
                    raise ParseError(path, lineno, "expected: frame id fx fy cx cy width height")
                fid = int(tok[1])
                if fid in ids:
                    raise ParseError(path, lineno, f"duplicate frame id {fid}")
                ids.add(fid)
                K = CameraIntrinsics(float(tok[2]), float(tok[3]), float(tok[4]), float(tok[5]),
                                     int(tok[6]), int(tok[7]))
                frames.append(FrameRecord(fid, K))
            elif kind == "object":
                if not frames:
                    raise ParseError(path, lineno, "object row before any frame row")
                if len(tok) not in (9, 11):
                    raise ParseError(path, lineno, "expected: object name qw qx qy qz tx ty tz [rmse vertex_count]")
                q = np.array([float(x) for x in tok[2:6]])
                t = np.array([float(x) for x in tok[6:9]])
                n = np.linalg.norm(q)
                if not abs(n - 1.0) < 1e-3:
                    raise ParseError(path, lineno, f"quaternion norm {n:.6g} is not unit")
                if abs(n - 1.0) > 1e-9:
                    warnings.warn(f"{path}:{lineno}: quaternion norm {n:.9g} renormalised")
                op = ObjectPose(tok[1], Pose(q, t))
                if len(tok) == 11:
                    op.rmse, op.vertex_count = float(tok[9]), int(tok[10])
                frames[-1].objects.append(op)
            else:
                raise ParseError(path, lineno, f"unknown row type {kind!r}")
        except ParseError:
            raise
        except ValueError as e:
            raise ParseError(path, lineno, str(e)) from None
    return frames


def parse_manifest(path) -> list:
    with open(path) as f:
        return parse_manifest_text(f.read(), path)


def write_manifest(path, frames) -> None:
    with open(path, "w") as f:
        f.write(serialize_manifest(frames))
