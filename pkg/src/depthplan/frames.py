"""Image-domain frame types, pinhole geometry and the on-disk frame formats.

Conventions: camera z along the optical axis, x right, y down. Depth is
stored as z-distance (not ray length), so a fronto-parallel wall has
constant depth. Depth 0.0 marks an invalid pixel, in memory and on disk.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEPTH_MAGIC = b"DFRM"
GRAY_MAGIC = b"GFRM"
FORMAT_VERSION = 1
DEFAULT_DEPTH_SCALE = 1000  # stored units per meter -> millimeters

_DEPTH_HEADER = struct.Struct("<4sBHHI")  # magic, version, width, height, scale
_GRAY_HEADER = struct.Struct("<4sBHH")  # magic, version, width, height


class FrameFormatError(Exception):
    """Malformed header, truncated payload or out-of-range sample."""


class InvalidDepthError(ValueError):
    """An operation received a non-positive depth where one is required."""


class ResolutionMismatchError(ValueError):
    """Two frames that must share a resolution do not."""


def _check_same_shape(*frames) -> None:
    shapes = {(f.height, f.width) for f in frames}
    if len(shapes) > 1:
        raise ResolutionMismatchError(f"frame resolutions differ: {sorted(shapes)}")


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width):
            raise ValueError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ValueError(f"cy={self.cy} outside [0, {self.height})")

    @staticmethod
    def default() -> "Intrinsics":
        # 320x240 with a 90 degree horizontal field of view.
        return Intrinsics(fx=160.0, fy=160.0, cx=159.5, cy=119.5, width=320, height=240)

    def scaled(self, width: int, height: int) -> "Intrinsics":
        """Same field of view at a different resolution."""
        sx = width / self.width
        sy = height / self.height
        return Intrinsics(self.fx * sx, self.fy * sy,
                          (self.cx + 0.5) * sx - 0.5, (self.cy + 0.5) * sy - 0.5,
                          width, height)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @staticmethod
    def from_dict(d: dict) -> "Intrinsics":
        return Intrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]),
                          float(d["cy"]), int(d["width"]), int(d["height"]))


def _quat_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _matrix_quat(m: np.ndarray) -> np.ndarray:
    # Shepperd's method, stable for all rotation matrices.
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        return np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                         (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    i = int(np.argmax(np.diag(m)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = math.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0)) * 2
    q = np.empty(4)
    q[0] = (m[k, j] - m[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (m[j, i] + m[i, j]) / s
    q[1 + k] = (m[k, i] + m[i, k]) / s
    return q


@dataclass(frozen=True)
class Pose:
    """Rigid transform world <- camera: unit quaternion [w, x, y, z] plus translation."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3).copy()
        q = np.asarray(self.rotation, dtype=float).reshape(4).copy()
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("rotation quaternion must have unit norm (1e-9)")
        t.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    def matrix(self) -> np.ndarray:
        return _quat_matrix(self.rotation)

    def to_dict(self) -> dict:
        return {"t": [float(v) for v in self.translation],
                "q": [float(v) for v in self.rotation]}

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(np.asarray(d["t"], dtype=float), np.asarray(d["q"], dtype=float))


def camera_pose(position, yaw: float, pitch: float = 0.0) -> Pose:
    """Camera at `position` looking along `yaw` (about +z) with elevation `pitch`.

    The optical axis is horizontal for pitch 0; positive pitch looks up.
    """
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([cy * cp, sy * cp, sp])
    right = np.array([sy, -cy, 0.0])
    down = np.cross(forward, right)
    m = np.column_stack([right, down, forward])
    return Pose(np.asarray(position, dtype=float), _matrix_quat(m))


class _Frame2D:
    """Shared 2-D pixel-array backing for depth/gray frames."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        v = np.asarray(values, dtype=float)
        if v.ndim != 2:
            raise ValueError("frame values must be a 2-D array (height, width)")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        return (type(self) is type(other)
                and self.values.shape == other.values.shape
                and bool(np.array_equal(self.values, other.values)))


class DepthFrame(_Frame2D):
    """Dense or sparse depth map in meters; 0.0 marks an invalid pixel."""

    def __init__(self, values: np.ndarray):
        super().__init__(values)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("depth values must be finite")
        if np.any(self.values < 0):
            raise ValueError("depth values must be non-negative")

    def valid(self) -> np.ndarray:
        return self.values > 0


class GrayFrame(_Frame2D):
    """Grayscale intensity frame with values in [0, 1]."""

    def __init__(self, values: np.ndarray):
        super().__init__(values)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("gray values must be finite")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("gray values must lie in [0, 1]")


@dataclass(frozen=True)
class ValidityMask:
    """Boolean per-pixel validity, true where depth > 0."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise ValueError("mask must be 2-D")
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count_valid(self) -> int:
        return int(self.bits.sum())


def validity_mask(depth: DepthFrame) -> ValidityMask:
    """Mask with bit(i, j) set exactly where depth(i, j) > 0."""
    return ValidityMask(depth.values > 0)


def backproject(intr: Intrinsics, pixel, depth: float) -> np.ndarray:
    """Lift one pixel (i=row, j=col) at `depth` meters into the camera frame."""
    i, j = pixel
    if depth <= 0:
        raise InvalidDepthError(f"cannot backproject non-positive depth {depth}")
    if not (0 <= i < intr.height and 0 <= j < intr.width):
        raise ValueError(f"pixel {pixel} outside {intr.width}x{intr.height} frame")
    return np.array([(j - intr.cx) * depth / intr.fx,
                     (i - intr.cy) * depth / intr.fy,
                     depth])


def project(intr: Intrinsics, point) -> tuple[float, float, float]:
    """Inverse of backproject: camera point -> (i, j, depth)."""
    x, y, z = point
    if z <= 0:
        raise InvalidDepthError("point behind the camera")
    return (y * intr.fy / z + intr.cy, x * intr.fx / z + intr.cx, z)


def backproject_frame(intr: Intrinsics, depth: DepthFrame):
    """All valid pixels as camera-frame points.

    Returns (points (N,3), flat_indices (N,)) with row-major flat indices.
    """
    if (depth.height, depth.width) != (intr.height, intr.width):
        raise ResolutionMismatchError("depth frame does not match intrinsics resolution")
    v = depth.values.ravel()
    idx = np.flatnonzero(v > 0)
    z = v[idx]
    jj = (idx % intr.width).astype(float)
    ii = (idx // intr.width).astype(float)
    pts = np.empty((idx.size, 3))
    pts[:, 0] = (jj - intr.cx) * z / intr.fx
    pts[:, 1] = (ii - intr.cy) * z / intr.fy
    pts[:, 2] = z
    return pts, idx


def transform(pose: Pose, point) -> np.ndarray:
    """Camera-frame point -> world frame."""
    return pose.matrix() @ np.asarray(point, dtype=float) + pose.translation


def transform_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Vectorized transform of an (N, 3) array of camera points to world frame."""
    return np.asarray(points, dtype=float) @ pose.matrix().T + pose.translation


# --- on-disk formats ------------------------------------------------------


def write_depth_frame(path, frame: DepthFrame, scale: int = DEFAULT_DEPTH_SCALE) -> None:
    if not (0 < scale < 2**32):
        raise ValueError("scale must be a positive 32-bit integer")
    q = np.round(frame.values * scale)
    if np.any(q > 0xFFFF):
        raise FrameFormatError(
            f"depth exceeds 16-bit payload at scale {scale} "
            f"(max representable {0xFFFF / scale} m)")
    header = _DEPTH_HEADER.pack(DEPTH_MAGIC, FORMAT_VERSION,
                                frame.width, frame.height, scale)
    Path(path).write_bytes(header + q.astype("<u2").tobytes())


def read_depth_frame(path) -> DepthFrame:
    data = Path(path).read_bytes()
    if len(data) < _DEPTH_HEADER.size:
        raise FrameFormatError("truncated depth header")
    magic, version, width, height, scale = _DEPTH_HEADER.unpack_from(data)
    if magic != DEPTH_MAGIC:
        raise FrameFormatError(f"bad depth magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FrameFormatError(f"unsupported depth format version {version}")
    expected = _DEPTH_HEADER.size + 2 * width * height
    if len(data) != expected:
        raise FrameFormatError(f"depth payload is {len(data)} bytes, expected {expected}")
    q = np.frombuffer(data, dtype="<u2", offset=_DEPTH_HEADER.size)
    return DepthFrame(q.reshape(height, width).astype(float) / scale)


def write_gray_frame(path, frame: GrayFrame) -> None:
    q = np.round(frame.values * 255.0).astype("<u1")
    header = _GRAY_HEADER.pack(GRAY_MAGIC, FORMAT_VERSION, frame.width, frame.height)
    Path(path).write_bytes(header + q.tobytes())


def read_gray_frame(path) -> GrayFrame:
    data = Path(path).read_bytes()
    if len(data) < _GRAY_HEADER.size:
        raise FrameFormatError("truncated gray header")
    magic, version, width, height = _GRAY_HEADER.unpack_from(data)
    if magic != GRAY_MAGIC:
        raise FrameFormatError(f"bad gray magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FrameFormatError(f"unsupported gray format version {version}")
    expected = _GRAY_HEADER.size + width * height
    if len(data) != expected:
        raise FrameFormatError(f"gray payload is {len(data)} bytes, expected {expected}")
    q = np.frombuffer(data, dtype="<u1", offset=_GRAY_HEADER.size)
    return GrayFrame(q.reshape(height, width).astype(float) / 255.0)


def write_frame(path, frame, scale: int = DEFAULT_DEPTH_SCALE) -> None:
    """Dispatch on frame type (DepthFrame -> DFRM, GrayFrame -> GFRM)."""
    if isinstance(frame, DepthFrame):
        write_depth_frame(path, frame, scale)
    elif isinstance(frame, GrayFrame):
        write_gray_frame(path, frame)
    else:
        raise TypeError(f"cannot serialize {type(frame).__name__}")


def read_frame(path):
    """Dispatch on file magic."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == DEPTH_MAGIC:
        return read_depth_frame(path)
    if magic == GRAY_MAGIC:
        return read_gray_frame(path)
    raise FrameFormatError(f"unknown frame magic {magic!r}")


# --- sequence manifests ---------------------------------------------------


@dataclass(frozen=True)
class SequenceFrame:
    timestamp: float
    pose: Pose
    depth_file: str
    gray_file: str


@dataclass(frozen=True)
class FrameSequence:
    """Ordered, timestamped frames sharing one camera."""

    intrinsics: Intrinsics
    frames: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        ts = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")

    def load(self, index: int, base_dir) -> tuple[DepthFrame, GrayFrame]:
        base = Path(base_dir)
        entry = self.frames[index]
        depth = read_depth_frame(base / entry.depth_file)
        gray = read_gray_frame(base / entry.gray_file)
        if (depth.width, depth.height) != (self.intrinsics.width, self.intrinsics.height):
            raise ResolutionMismatchError(
                f"frame {index} depth resolution {depth.width}x{depth.height} "
                f"does not match manifest")
        _check_same_shape(depth, gray)
        return depth, gray


def write_manifest(path, sequence: FrameSequence) -> None:
    doc = {
        "intrinsics": sequence.intrinsics.to_dict(),
        "frames": [
            {"timestamp": f.timestamp, "pose": f.pose.to_dict(),
             "depth_file": f.depth_file, "gray_file": f.gray_file}
            for f in sequence.frames
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> FrameSequence:
    doc = json.loads(Path(path).read_text())
    frames = [
        SequenceFrame(float(f["timestamp"]), Pose.from_dict(f["pose"]),
                      str(f["depth_file"]), str(f["gray_file"]))
        for f in doc["frames"]
    ]
    return FrameSequence(Intrinsics.from_dict(doc["intrinsics"]), tuple(frames))
