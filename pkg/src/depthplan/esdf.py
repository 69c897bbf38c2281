"""Batch Euclidean distance field over a classified TSDF, the conservative
unknown-space rules, and the interpolation/clearance queries planners need.

The field stores the distance from each voxel center to the nearest
obstacle voxel center (zero inside obstacles), capped at d_cap. It is
recomputed from scratch per planning cycle; at desk-scale grids the exact
batch transform is cheaper than maintaining an incremental one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt

from .frames import FrameFormatError
from .tsdf import (TsdfGrid, VOXEL_OCCUPIED, VOXEL_UNOBSERVED, classify_grid)

ESDF_MAGIC = b"ESDF"
_ESDF_HEADER = struct.Struct("<4sBIII3ddd")


class OutOfGridError(ValueError):
    """A query point lies outside the grid's interpolable interior."""


@dataclass
class EsdfGrid:
    origin: np.ndarray
    voxel_size: float
    dims: tuple
    d_cap: float
    distance: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        if self.voxel_size <= 0 or self.d_cap <= 0:
            raise ValueError("voxel size and d_cap must be positive")
        if self.distance is None:
            self.distance = np.full(self.dims, self.d_cap)
        if self.distance.shape != self.dims:
            raise ValueError("distance array shape does not match dims")

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.dims) * self.voxel_size

    def aligned_with(self, other) -> bool:
        return (self.dims == other.dims
                and abs(self.voxel_size - other.voxel_size) < 1e-12
                and np.allclose(self.origin, other.origin, atol=1e-12))


def _sphere_mask(grid_dims, origin, v, center, radius) -> np.ndarray:
    nx, ny, nz = grid_dims
    cx = origin[0] + (np.arange(nx) + 0.5) * v
    cy = origin[1] + (np.arange(ny) + 0.5) * v
    cz = origin[2] + (np.arange(nz) + 0.5) * v
    d2 = ((cx[:, None, None] - center[0]) ** 2
          + (cy[None, :, None] - center[1]) ** 2
          + (cz[None, None, :] - center[2]) ** 2)
    return d2 <= radius * radius


def compute_esdf(tsdf: TsdfGrid, t: float = 0.2,
                 unknown_is_obstacle: bool = True,
                 robot_pos=None, unknown_sphere_radius: float = 3.0,
                 d_cap: float = 5.0,
                 clear_pos=None, clear_radius: float = 0.0) -> EsdfGrid:
    """Exact Euclidean obstacle-distance field from a classified TSDF.

    The obstacle set is the occupied voxels, all unobserved voxels when
    `unknown_is_obstacle`, and unobserved voxels within
    `unknown_sphere_radius` of `robot_pos` regardless. Unobserved voxels
    within `clear_radius` of `clear_pos` are exempted (online planners need
    a startable bubble around the vehicle; measured occupancy is never
    cleared). An empty obstacle set yields a uniform d_cap field.
    """
    classes = classify_grid(tsdf, t)
    unobs = classes == VOXEL_UNOBSERVED
    obstacle = classes == VOXEL_OCCUPIED
    if unknown_is_obstacle:
        obstacle = obstacle | unobs
    if robot_pos is not None and unknown_sphere_radius > 0:
        sphere = _sphere_mask(tsdf.dims, tsdf.origin, tsdf.voxel_size,
                              np.asarray(robot_pos, dtype=float),
                              unknown_sphere_radius)
        obstacle = obstacle | (unobs & sphere)
    if clear_pos is not None and clear_radius > 0:
        bubble = _sphere_mask(tsdf.dims, tsdf.origin, tsdf.voxel_size,
                              np.asarray(clear_pos, dtype=float), clear_radius)
        obstacle = obstacle & ~(unobs & bubble)
    out = EsdfGrid(tsdf.origin, tsdf.voxel_size, tsdf.dims, d_cap)
    if obstacle.any():
        dist = distance_transform_edt(~obstacle, sampling=tsdf.voxel_size)
        np.minimum(dist, d_cap, out=dist)
        out.distance = dist
    return out


def interpolate(esdf: EsdfGrid, points) -> np.ndarray:
    """Trilinear interpolation of voxel-center distances.

    Points must lie within the voxel-center hull (half a voxel inside the
    grid boundary); raises OutOfGridError otherwise.
    """
    p = np.asarray(points, dtype=float)
    scalar = p.ndim == 1
    p = p.reshape(-1, 3)
    u = (p - esdf.origin) / esdf.voxel_size - 0.5
    hi = np.asarray(esdf.dims) - 1
    if np.any(u < -1e-12) or np.any(u > hi + 1e-12):
        raise OutOfGridError("point outside the interpolable interior")
    u = np.clip(u, 0.0, hi)
    i0 = np.minimum(u.astype(int), hi - 1).astype(int)
    i0 = np.maximum(i0, 0)
    f = u - i0
    d = esdf.distance
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    c00 = d[x0, y0, z0] * (1 - fx) + d[x0 + 1, y0, z0] * fx
    c01 = d[x0, y0, z0 + 1] * (1 - fx) + d[x0 + 1, y0, z0 + 1] * fx
    c10 = d[x0, y0 + 1, z0] * (1 - fx) + d[x0 + 1, y0 + 1, z0] * fx
    c11 = d[x0, y0 + 1, z0 + 1] * (1 - fx) + d[x0 + 1, y0 + 1, z0 + 1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz
    return float(out[0]) if scalar else out


def query(esdf: EsdfGrid, point):
    """Interpolated distance and its central-difference gradient.

    The gradient step is one voxel and points away from obstacles. The point
    must sit at least 1.5 voxels inside the grid so the stencil stays in
    the interpolable interior.
    """
    p = np.asarray(point, dtype=float).reshape(3)
    v = esdf.voxel_size
    lo = esdf.origin + 1.5 * v
    hi = esdf.origin + esdf.extent - 1.5 * v
    if np.any(p < lo) or np.any(p > hi):
        raise OutOfGridError("query point closer than 1.5 voxels to the boundary")
    dist = interpolate(esdf, p)
    grad = np.empty(3)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = v
        grad[axis] = (interpolate(esdf, p + e) - interpolate(esdf, p - e)) / (2 * v)
    return dist, grad


def clearance_check(esdf: EsdfGrid, polyline, radius: float,
                    step: float = 0.05) -> bool:
    """True iff the interpolated distance stays >= radius at samples every
    `step` meters along the polyline, endpoints included."""
    pts = np.asarray(polyline, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 1:
        return bool(interpolate(esdf, pts[0]) >= radius)
    samples = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        seg = np.linalg.norm(b - a)
        n = max(1, int(np.ceil(seg / step)))
        ts = np.arange(1, n + 1) / n
        samples.append(a + ts[:, None] * (b - a))
    allpts = np.vstack([samples[0][None, :], *samples[1:]])
    return bool(np.all(interpolate(esdf, allpts) >= radius))


def save_esdf(path, esdf: EsdfGrid) -> None:
    header = _ESDF_HEADER.pack(ESDF_MAGIC, 1, *esdf.dims, *esdf.origin,
                               esdf.voxel_size, esdf.d_cap)
    Path(path).write_bytes(header + esdf.distance.ravel().astype("<f4").tobytes())


def load_esdf(path) -> EsdfGrid:
    data = Path(path).read_bytes()
    if len(data) < _ESDF_HEADER.size or data[:4] != ESDF_MAGIC:
        raise FrameFormatError("bad ESDF header")
    (_, version, nx, ny, nz, ox, oy, oz, v, d_cap) = _ESDF_HEADER.unpack_from(data)
    if version != 1:
        raise FrameFormatError(f"unsupported ESDF version {version}")
    expected = _ESDF_HEADER.size + 4 * nx * ny * nz
    if len(data) != expected:
        raise FrameFormatError("ESDF payload size mismatch")
    payload = np.frombuffer(data, dtype="<f4", offset=_ESDF_HEADER.size)
    grid = EsdfGrid((ox, oy, oz), v, (nx, ny, nz), d_cap)
    grid.distance = payload.astype(float).reshape(nx, ny, nz)
    return grid
