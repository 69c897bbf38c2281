"""Truncated signed distance voxel grid with provenance-weighted ray-cast
integration.

Each observed point casts a ray from the sensor through the point, extended
by the truncation distance. Every voxel the segment crosses receives the
projective signed distance (range minus the voxel center's projection onto
the ray), fused by weighted averaging. Measured points carry weight 1,
predicted points w_pred, so fresh measurements dominate stale predictions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .frames import FrameFormatError

VOXEL_FREE = 0
VOXEL_OCCUPIED = 1
VOXEL_UNOBSERVED = 2

PROV_MEASURED = 1  # mirrors complete.PROV_MEASURED / PROV_PREDICTED
PROV_PREDICTED = 2

TSDF_MAGIC = b"TSDF"
_TSDF_HEADER = struct.Struct("<4sBIII3ddd")


@dataclass(frozen=True)
class IntegrationConfig:
    delta_trunc: float = 0.4
    w_pred: float = 0.1
    weight_mode: str = "constant"
    max_weight: float = 1e4

    def __post_init__(self):
        if self.delta_trunc <= 0:
            raise ValueError("truncation distance must be positive")
        if not (0 < self.w_pred <= 1):
            raise ValueError("w_pred must lie in (0, 1]")
        if self.weight_mode not in ("constant", "quadratic"):
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")
        if self.max_weight <= 0:
            raise ValueError("max_weight must be positive")


@dataclass
class TsdfGrid:
    origin: np.ndarray
    voxel_size: float
    dims: tuple
    delta_trunc: float
    distance: np.ndarray = field(repr=False, default=None)
    weight: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        if self.voxel_size <= 0:
            raise ValueError("voxel size must be positive")
        if any(d <= 0 for d in self.dims):
            raise ValueError("grid dims must be positive")
        if self.distance is None:
            self.distance = np.zeros(self.dims)
        if self.weight is None:
            self.weight = np.zeros(self.dims)
        if self.distance.shape != self.dims or self.weight.shape != self.dims:
            raise ValueError("voxel array shape does not match dims")

    @staticmethod
    def for_bounds(bounds_min, bounds_max, voxel_size: float,
                   delta_trunc: float) -> "TsdfGrid":
        lo = np.asarray(bounds_min, dtype=float)
        hi = np.asarray(bounds_max, dtype=float)
        dims = tuple(int(np.ceil((h - l) / voxel_size - 1e-9))
                     for l, h in zip(lo, hi))
        return TsdfGrid(lo, voxel_size, dims, delta_trunc)

    def voxel_center(self, index) -> np.ndarray:
        return self.origin + (np.asarray(index, dtype=float) + 0.5) * self.voxel_size

    def world_to_voxel(self, point) -> tuple:
        rel = (np.asarray(point, dtype=float) - self.origin) / self.voxel_size
        return tuple(int(np.floor(r)) for r in rel)

    def contains(self, point) -> bool:
        idx = self.world_to_voxel(point)
        return all(0 <= i < d for i, d in zip(idx, self.dims))

    def center_grids(self):
        """Per-axis voxel-center coordinate vectors."""
        return tuple(self.origin[a] + (np.arange(self.dims[a]) + 0.5) * self.voxel_size
                     for a in range(3))

    def aligned_with(self, other) -> bool:
        return (self.dims == other.dims
                and abs(self.voxel_size - other.voxel_size) < 1e-12
                and np.allclose(self.origin, other.origin, atol=1e-12))


@njit(cache=True)
def _integrate_kernel(origin, v, nx, ny, nz, sum_w, sum_wd,
                      sensor, pts, w_point, delta, quadratic):
    """Walk each sensor->point ray (extended by delta) through the grid and
    accumulate weighted projective distances per voxel. Returns the number
    of points whose rays never intersect the grid."""
    skipped = 0
    gx0, gy0, gz0 = origin[0], origin[1], origin[2]
    gx1 = gx0 + nx * v
    gy1 = gy0 + ny * v
    gz1 = gz0 + nz * v
    sx, sy, sz = sensor[0], sensor[1], sensor[2]
    for r in range(pts.shape[0]):
        dx = pts[r, 0] - sx
        dy = pts[r, 1] - sy
        dz = pts[r, 2] - sz
        z = np.sqrt(dx * dx + dy * dy + dz * dz)
        if z < 1e-9:
            skipped += 1
            continue
        ux, uy, uz = dx / z, dy / z, dz / z
        t_end = z + delta
        # clip [0, t_end] to the grid AABB
        t0, t1 = 0.0, t_end
        ok = True
        for axis in range(3):
            if axis == 0:
                u, s, g0, g1 = ux, sx, gx0, gx1
            elif axis == 1:
                u, s, g0, g1 = uy, sy, gy0, gy1
            else:
                u, s, g0, g1 = uz, sz, gz0, gz1
            if u == 0.0:
                if s < g0 or s > g1:
                    ok = False
                    break
            else:
                ta = (g0 - s) / u
                tb = (g1 - s) / u
                if ta > tb:
                    ta, tb = tb, ta
                if ta > t0:
                    t0 = ta
                if tb < t1:
                    t1 = tb
        if not ok or t1 <= t0:
            skipped += 1
            continue
        # nudge inside to make the starting voxel unambiguous
        eps = 1e-9 * (1.0 + t_end)
        t = t0 + eps
        px = sx + t * ux
        py = sy + t * uy
        pz = sz + t * uz
        ix = int(np.floor((px - gx0) / v))
        iy = int(np.floor((py - gy0) / v))
        iz = int(np.floor((pz - gz0) / v))
        if ix < 0:
            ix = 0
        if iy < 0:
            iy = 0
        if iz < 0:
            iz = 0
        if ix > nx - 1:
            ix = nx - 1
        if iy > ny - 1:
            iy = ny - 1
        if iz > nz - 1:
            iz = nz - 1
        step_x = 1 if ux > 0 else (-1 if ux < 0 else 0)
        step_y = 1 if uy > 0 else (-1 if uy < 0 else 0)
        step_z = 1 if uz > 0 else (-1 if uz < 0 else 0)
        big = 1e30
        if ux > 0:
            t_max_x = (gx0 + (ix + 1) * v - sx) / ux
            t_dx = v / ux
        elif ux < 0:
            t_max_x = (gx0 + ix * v - sx) / ux
            t_dx = -v / ux
        else:
            t_max_x = big
            t_dx = big
        if uy > 0:
            t_max_y = (gy0 + (iy + 1) * v - sy) / uy
            t_dy = v / uy
        elif uy < 0:
            t_max_y = (gy0 + iy * v - sy) / uy
            t_dy = -v / uy
        else:
            t_max_y = big
            t_dy = big
        if uz > 0:
            t_max_z = (gz0 + (iz + 1) * v - sz) / uz
            t_dz = v / uz
        elif uz < 0:
            t_max_z = (gz0 + iz * v - sz) / uz
            t_dz = -v / uz
        else:
            t_max_z = big
            t_dz = big
        w_base = w_point[r]
        inv_z2 = 1.0 / (z * z)
        # projection of the current voxel center onto the ray; stepping one
        # voxel along an axis shifts it by a fixed increment
        cx = gx0 + (ix + 0.5) * v
        cy = gy0 + (iy + 0.5) * v
        cz = gz0 + (iz + 0.5) * v
        proj = (cx - sx) * ux + (cy - sy) * uy + (cz - sz) * uz
        dproj_x = step_x * v * ux
        dproj_y = step_y * v * uy
        dproj_z = step_z * v * uz
        flat = (ix * ny + iy) * nz + iz
        dflat_x = step_x * ny * nz
        dflat_y = step_y * nz
        dflat_z = step_z
        while True:
            if ix < 0 or iy < 0 or iz < 0 or ix >= nx or iy >= ny or iz >= nz:
                break
            d = z - proj
            if d > delta:
                d = delta
            elif d < -delta:
                d = -delta
            w = w_base
            if quadratic:
                ramp = 1.0
                if d < -0.25 * delta:
                    ramp = (d + delta) / (0.75 * delta)
                    if ramp < 0.0:
                        ramp = 0.0
                w *= inv_z2 * ramp
            if w > 0.0:
                sum_w[flat] += w
                sum_wd[flat] += w * d
            # advance to the next voxel boundary
            if t_max_x <= t_max_y and t_max_x <= t_max_z:
                if t_max_x > t1:
                    break
                ix += step_x
                flat += dflat_x
                proj += dproj_x
                t_max_x += t_dx
            elif t_max_y <= t_max_z:
                if t_max_y > t1:
                    break
                iy += step_y
                flat += dflat_y
                proj += dproj_y
                t_max_y += t_dy
            else:
                if t_max_z > t1:
                    break
                iz += step_z
                flat += dflat_z
                proj += dproj_z
                t_max_z += t_dz
    return skipped


def integrate(grid: TsdfGrid, sensor_origin, points, provenance,
              cfg: IntegrationConfig) -> int:
    """Fuse one batch of observed points into the grid (in place).

    `points` is (N, 3) world coordinates, `provenance` an (N,) array of
    PROV_MEASURED / PROV_PREDICTED labels. Sequential point-by-point updates
    and one batch call agree in exact arithmetic (below the weight cap), so
    a frame is integrated as a single batch. Returns the number of points
    whose rays never intersect the grid.
    """
    if abs(cfg.delta_trunc - grid.delta_trunc) > 1e-12:
        raise ValueError("integration truncation differs from the grid's")
    if cfg.delta_trunc < 2 * grid.voxel_size:
        raise ValueError("truncation distance must be at least two voxels")
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
    prov = np.asarray(provenance, dtype=np.uint8).reshape(-1)
    if prov.shape[0] != pts.shape[0]:
        raise ValueError("points and provenance lengths differ")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    if pts.shape[0] == 0:
        return 0
    w_point = np.where(prov == PROV_PREDICTED, cfg.w_pred, 1.0)
    nx, ny, nz = grid.dims
    sum_w = np.zeros(nx * ny * nz)
    sum_wd = np.zeros(nx * ny * nz)
    skipped = _integrate_kernel(grid.origin, grid.voxel_size, nx, ny, nz,
                                sum_w, sum_wd,
                                np.asarray(sensor_origin, dtype=float),
                                pts, w_point, cfg.delta_trunc,
                                cfg.weight_mode == "quadratic")
    touched = sum_w > 0
    d_flat = grid.distance.ravel()
    w_flat = grid.weight.ravel()
    d_flat[touched] = ((w_flat[touched] * d_flat[touched] + sum_wd[touched])
                       / (w_flat[touched] + sum_w[touched]))
    w_flat[touched] = np.minimum(w_flat[touched] + sum_w[touched], cfg.max_weight)
    return int(skipped)


def integrate_frame(grid: TsdfGrid, pose, intr, augmented,
                    cfg: IntegrationConfig) -> int:
    """Backproject an AugmentedFrame (or plain DepthFrame) and integrate it."""
    from .complete import AugmentedFrame
    from .frames import backproject_frame, transform_points

    if isinstance(augmented, AugmentedFrame):
        depth = augmented.depth
        prov_img = augmented.provenance
    else:
        depth = augmented
        prov_img = np.full(depth.values.shape, PROV_MEASURED, dtype=np.uint8)
    pts_cam, flat_idx = backproject_frame(intr, depth)
    prov = prov_img.ravel()[flat_idx]
    keep = prov != 0
    pts_world = transform_points(pose, pts_cam[keep])
    return integrate(grid, pose.translation, pts_world, prov[keep], cfg)


def classify_voxel(distance: float, weight: float, t: float) -> int:
    """Single-voxel class: unobserved without weight, else free iff d > t."""
    if t < 0:
        raise ValueError("free-space threshold must be non-negative")
    if weight == 0:
        return VOXEL_UNOBSERVED
    return VOXEL_FREE if distance > t else VOXEL_OCCUPIED


def classify_grid(grid: TsdfGrid, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("free-space threshold must be non-negative")
    return np.where(grid.weight == 0, VOXEL_UNOBSERVED,
                    np.where(grid.distance > t, VOXEL_FREE,
                             VOXEL_OCCUPIED)).astype(np.uint8)


def save_tsdf(path, grid: TsdfGrid) -> None:
    header = _TSDF_HEADER.pack(TSDF_MAGIC, 1, *grid.dims, *grid.origin,
                               grid.voxel_size, grid.delta_trunc)
    payload = np.stack([grid.distance.ravel(), grid.weight.ravel()],
                       axis=1).astype("<f4")
    Path(path).write_bytes(header + payload.tobytes())


def load_tsdf(path) -> TsdfGrid:
    data = Path(path).read_bytes()
    if len(data) < _TSDF_HEADER.size or data[:4] != TSDF_MAGIC:
        raise FrameFormatError("bad TSDF header")
    (_, version, nx, ny, nz, ox, oy, oz, v, delta) = _TSDF_HEADER.unpack_from(data)
    if version != 1:
        raise FrameFormatError(f"unsupported TSDF version {version}")
    expected = _TSDF_HEADER.size + 8 * nx * ny * nz
    if len(data) != expected:
        raise FrameFormatError("TSDF payload size mismatch")
    payload = np.frombuffer(data, dtype="<f4", offset=_TSDF_HEADER.size)
    payload = payload.reshape(-1, 2)
    grid = TsdfGrid((ox, oy, oz), v, (nx, ny, nz), delta)
    grid.distance = payload[:, 0].astype(float).reshape(nx, ny, nz)
    grid.weight = payload[:, 1].astype(float).reshape(nx, ny, nz)
    return grid
