"""Analytic worlds: procedural generation, exact ray-cast rendering and
ground-truth occupancy/distance oracles.

Scenes are built from vertical cylinders, axis-aligned boxes and the room
shell (the inside of the bounding cuboid). Rendering intersects every pixel
ray analytically, so ground-truth frames carry no sampling noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .frames import DepthFrame, GrayFrame, Intrinsics, Pose, camera_pose

_Z_EPS = 1e-9

FACE_NAMES = ("x-", "x+", "y-", "y+", "z-", "z+")


class PlacementError(RuntimeError):
    """Rejection sampling exceeded its attempt budget."""


@dataclass(frozen=True)
class Cylinder:
    cx: float
    cy: float
    radius: float
    z_min: float
    z_max: float
    albedo: float


@dataclass(frozen=True)
class Box:
    min_corner: tuple
    max_corner: tuple
    albedo: float


@dataclass(frozen=True)
class Opening:
    """Axis-aligned rectangular hole in one shell face.

    `lo`/`hi` span the two in-plane axes of the face, in ascending axis order
    (e.g. for face "z-" they are (x, y) extents).
    """

    face: str
    lo: tuple
    hi: tuple


@dataclass(frozen=True)
class LightModel:
    direction: np.ndarray
    ambient: float = 0.25

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("light direction must be a unit vector")
        if not (0.0 <= self.ambient <= 1.0):
            raise ValueError("ambient must lie in [0, 1]")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)

    @staticmethod
    def default() -> "LightModel":
        d = np.array([0.5, 0.25, -1.0])
        return LightModel(d / np.linalg.norm(d), 0.25)


@dataclass(frozen=True)
class Scene:
    bounds_min: tuple
    bounds_max: tuple
    cylinders: tuple = ()
    boxes: tuple = ()
    openings: tuple = ()
    shell_albedo: float = 0.6

    def __post_init__(self):
        lo = np.asarray(self.bounds_min, dtype=float)
        hi = np.asarray(self.bounds_max, dtype=float)
        if np.any(hi <= lo):
            raise ValueError("bounds cuboid must have positive volume")
        albedos = [self.shell_albedo] + [c.albedo for c in self.cylinders] \
            + [b.albedo for b in self.boxes]
        if any(not (0.0 <= a <= 1.0) for a in albedos):
            raise ValueError("albedos must lie in [0, 1]")
        for c in self.cylinders:
            if c.radius <= 0 or c.z_max <= c.z_min:
                raise ValueError("degenerate cylinder")
        for b in self.boxes:
            if any(h <= l for l, h in zip(b.min_corner, b.max_corner)):
                raise ValueError("degenerate box")

    @property
    def bmin(self) -> np.ndarray:
        return np.asarray(self.bounds_min, dtype=float)

    @property
    def bmax(self) -> np.ndarray:
        return np.asarray(self.bounds_max, dtype=float)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.bmax - self.bmin))


@dataclass(frozen=True)
class WaypointSet:
    points: np.ndarray
    clearance: float

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3).copy()
        p.setflags(write=False)
        object.__setattr__(self, "points", p)
        if self.clearance <= 0:
            raise ValueError("clearance must be positive")

    def __len__(self):
        return self.points.shape[0]


# --- oracles ---------------------------------------------------------------


def occupancy(scene: Scene, points) -> np.ndarray:
    """True where a point lies inside any primitive (walls beyond the shell
    included). Scalar input yields a scalar bool."""
    p = np.asarray(points, dtype=float)
    scalar = p.ndim == 1
    p = p.reshape(-1, 3)
    occ = np.any((p < scene.bmin) | (p > scene.bmax), axis=1)
    for c in scene.cylinders:
        inside = ((p[:, 0] - c.cx) ** 2 + (p[:, 1] - c.cy) ** 2 <= c.radius ** 2)
        inside &= (p[:, 2] >= c.z_min) & (p[:, 2] <= c.z_max)
        occ |= inside
    for b in scene.boxes:
        lo = np.asarray(b.min_corner)
        hi = np.asarray(b.max_corner)
        occ |= np.all((p >= lo) & (p <= hi), axis=1)
    return bool(occ[0]) if scalar else occ


def distance_to_surface(scene: Scene, points) -> np.ndarray:
    """Exact unsigned distance to the nearest primitive surface."""
    p = np.asarray(points, dtype=float)
    scalar = p.ndim == 1
    p = p.reshape(-1, 3)
    dists = []
    # shell: distance to the bounding cuboid's surface
    inside_slack = np.minimum(p - scene.bmin, scene.bmax - p)
    inside = np.all(inside_slack >= 0, axis=1)
    excess = np.maximum(np.maximum(scene.bmin - p, p - scene.bmax), 0.0)
    dists.append(np.where(inside, inside_slack.min(axis=1),
                          np.linalg.norm(excess, axis=1)))
    for c in scene.cylinders:
        dr = np.hypot(p[:, 0] - c.cx, p[:, 1] - c.cy) - c.radius
        dz = np.maximum(c.z_min - p[:, 2], p[:, 2] - c.z_max)
        outside = np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
        inside_d = np.minimum(-dr, -dz)
        dists.append(np.where((dr > 0) | (dz > 0), outside, inside_d))
    for b in scene.boxes:
        q = np.maximum(np.asarray(b.min_corner) - p, p - np.asarray(b.max_corner))
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside_d = -q.max(axis=1)
        dists.append(np.where(np.any(q > 0, axis=1), outside, inside_d))
    d = np.min(np.stack(dists), axis=0)
    return float(d[0]) if scalar else d


def clearance(scene: Scene, points) -> np.ndarray:
    """Distance to the nearest surface, zero inside obstacles."""
    d = distance_to_surface(scene, points)
    occ = occupancy(scene, points)
    return np.where(occ, 0.0, d) if isinstance(d, np.ndarray) else (0.0 if occ else d)


# --- rendering -------------------------------------------------------------


def _ray_dirs(intr: Intrinsics, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """World-frame direction per pixel, scaled so the parameter equals z-depth."""
    jj, ii = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    dirs = np.stack([(jj.ravel() - intr.cx) / intr.fx,
                     (ii.ravel() - intr.cy) / intr.fy,
                     np.ones(intr.width * intr.height)], axis=1)
    return dirs @ pose.matrix().T, pose.translation


def _cylinder_hits(c: Cylinder, o, d):
    ox, oy, oz = o
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    fx, fy = ox - c.cx, oy - c.cy
    a = dx * dx + dy * dy
    b = 2.0 * (fx * dx + fy * dy)
    cc = fx * fx + fy * fy - c.radius ** 2
    disc = b * b - 4.0 * a * cc
    z_hit = np.full(d.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * a)
            zc = oz + t * dz
            ok = (disc >= 0) & (a > 0) & (t > _Z_EPS) & (zc >= c.z_min) & (zc <= c.z_max)
            z_hit = np.where(ok & (t < z_hit), t, z_hit)
        # end caps
        for plane in (c.z_min, c.z_max):
            t = (plane - oz) / dz
            px = ox + t * dx - c.cx
            py = oy + t * dy - c.cy
            ok = (dz != 0) & (t > _Z_EPS) & (px * px + py * py <= c.radius ** 2)
            z_hit = np.where(ok & (t < z_hit), t, z_hit)
    return z_hit


def _slab_hits(lo, hi, o, d):
    """Parametric entry/exit of an AABB plus the axis realizing each."""
    n = d.shape[0]
    t_near = np.full(n, -np.inf)
    t_far = np.full(n, np.inf)
    ax_near = np.zeros(n, dtype=np.int8)
    ax_far = np.zeros(n, dtype=np.int8)
    for axis in range(3):
        da = d[:, axis]
        oa = o[axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[axis] - oa) / da
            t2 = (hi[axis] - oa) / da
        parallel = da == 0
        inside_slab = (oa >= lo[axis]) & (oa <= hi[axis])
        t1 = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), t1)
        t2 = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), t2)
        near = np.minimum(t1, t2)
        far = np.maximum(t1, t2)
        upd = near > t_near
        t_near = np.where(upd, near, t_near)
        ax_near = np.where(upd, axis, ax_near)
        upd = far < t_far
        t_far = np.where(upd, far, t_far)
        ax_far = np.where(upd, axis, ax_far)
    return t_near, t_far, ax_near, ax_far


def _trace(scene: Scene, o: np.ndarray, d: np.ndarray):
    """Nearest intersection per ray.

    Returns (z, kind, index) where kind is 0=no hit, 1=cylinder, 2=box,
    3=shell and index selects the primitive within its list.
    """
    n = d.shape[0]
    z_best = np.full(n, np.inf)
    kind = np.zeros(n, dtype=np.int8)
    index = np.full(n, -1, dtype=np.int32)

    for i, c in enumerate(scene.cylinders):
        z = _cylinder_hits(c, o, d)
        upd = z < z_best
        z_best = np.where(upd, z, z_best)
        kind[upd] = 1
        index[upd] = i
    for i, b in enumerate(scene.boxes):
        near, far, _, _ = _slab_hits(np.asarray(b.min_corner),
                                     np.asarray(b.max_corner), o, d)
        z = np.where(near > _Z_EPS, near, far)
        ok = (near <= far) & (far > _Z_EPS)
        z = np.where(ok, z, np.inf)
        upd = z < z_best
        z_best = np.where(upd, z, z_best)
        kind[upd] = 2
        index[upd] = i
    # shell: the ray's exit from the bounding cuboid
    _, far, _, ax_far = _slab_hits(scene.bmin, scene.bmax, o, d)
    ok = np.isfinite(far) & (far > _Z_EPS)
    z = np.where(ok, far, np.inf)
    upd = z < z_best
    z_best = np.where(upd, z, z_best)
    kind[upd] = 3
    index[upd] = -1

    if scene.openings and np.any(kind == 3):
        hit = o + z_best[:, None] * d
        face = np.where(d[np.arange(n), ax_far] >= 0, 2 * ax_far + 1, 2 * ax_far)
        for op in scene.openings:
            fidx = FACE_NAMES.index(op.face)
            axes = [a for a in range(3) if a != fidx // 2]
            u, v = hit[:, axes[0]], hit[:, axes[1]]
            inside_rect = ((u >= op.lo[0]) & (u <= op.hi[0])
                           & (v >= op.lo[1]) & (v <= op.hi[1]))
            escape = (kind == 3) & (face == fidx) & inside_rect
            kind[escape] = 0
            z_best[escape] = np.inf
    return z_best, kind, index


def render_depth(scene: Scene, pose: Pose, intr: Intrinsics) -> DepthFrame:
    """Ground-truth z-depth frame; rays escaping through an opening are invalid."""
    d, o = _ray_dirs(intr, pose)
    z, kind, _ = _trace(scene, o, d)
    depth = np.where(kind == 0, 0.0, z)
    return DepthFrame(depth.reshape(intr.height, intr.width))


def _normals(scene: Scene, o, d, z, kind, index) -> np.ndarray:
    n = np.zeros_like(d)
    hit = o + z[:, None] * d
    for i, c in enumerate(scene.cylinders):
        m = (kind == 1) & (index == i)
        if not m.any():
            continue
        hx = hit[m]
        side = np.stack([hx[:, 0] - c.cx, hx[:, 1] - c.cy, np.zeros(m.sum())], axis=1)
        rad = np.linalg.norm(side[:, :2], axis=1)
        on_top = np.abs(hx[:, 2] - c.z_max) < 1e-7
        on_bot = np.abs(hx[:, 2] - c.z_min) < 1e-7
        nv = side / np.maximum(rad, 1e-12)[:, None]
        nv[on_top] = [0.0, 0.0, 1.0]
        nv[on_bot] = [0.0, 0.0, -1.0]
        n[m] = nv
    for i, b in enumerate(scene.boxes):
        m = (kind == 2) & (index == i)
        if not m.any():
            continue
        hx = hit[m]
        lo = np.asarray(b.min_corner)
        hi = np.asarray(b.max_corner)
        gaps = np.stack([np.abs(hx - lo), np.abs(hx - hi)], axis=2)  # (k,3,2)
        flat = gaps.reshape(m.sum(), 6)
        best = np.argmin(flat, axis=1)
        nv = np.zeros((m.sum(), 3))
        nv[np.arange(m.sum()), best // 2] = np.where(best % 2 == 0, -1.0, 1.0)
        n[m] = nv
    m = kind == 3
    if m.any():
        hx = hit[m]
        gaps = np.stack([np.abs(hx - scene.bmin), np.abs(hx - scene.bmax)], axis=2)
        flat = gaps.reshape(m.sum(), 6)
        best = np.argmin(flat, axis=1)
        nv = np.zeros((m.sum(), 3))
        # inward normal: +axis on the min face, -axis on the max face
        nv[np.arange(m.sum()), best // 2] = np.where(best % 2 == 0, 1.0, -1.0)
        n[m] = nv
    return n


def render_gray(scene: Scene, pose: Pose, intr: Intrinsics,
                light: LightModel | None = None) -> GrayFrame:
    """Lambertian shading with ambient floor; background pixels are 0."""
    light = light or LightModel.default()
    d, o = _ray_dirs(intr, pose)
    z, kind, index = _trace(scene, o, d)
    normals = _normals(scene, o, d, z, kind, index)
    albedo = np.zeros(d.shape[0])
    for i, c in enumerate(scene.cylinders):
        albedo[(kind == 1) & (index == i)] = c.albedo
    for i, b in enumerate(scene.boxes):
        albedo[(kind == 2) & (index == i)] = b.albedo
    albedo[kind == 3] = scene.shell_albedo
    lambert = np.maximum(0.0, normals @ (-light.direction))
    intensity = np.clip(light.ambient + (1 - light.ambient) * albedo * lambert, 0, 1)
    intensity[kind == 0] = 0.0
    return GrayFrame(intensity.reshape(intr.height, intr.width))


# --- procedural generation -------------------------------------------------


def _footprint_clear(cx, cy, r, cylinders, boxes, gap=0.05):
    for c in cylinders:
        if math.hypot(cx - c.cx, cy - c.cy) <= r + c.radius + gap:
            return False
    for b in boxes:
        qx = min(max(cx, b.min_corner[0]), b.max_corner[0])
        qy = min(max(cy, b.min_corner[1]), b.max_corner[1])
        if math.hypot(cx - qx, cy - qy) <= r + gap:
            return False
    return True


def _box_clear(lo, hi, cylinders, boxes, gap=0.05):
    for b in boxes:
        if not (hi[0] + gap < b.min_corner[0] or lo[0] - gap > b.max_corner[0]
                or hi[1] + gap < b.min_corner[1] or lo[1] - gap > b.max_corner[1]):
            return False
    for c in cylinders:
        qx = min(max(c.cx, lo[0]), hi[0])
        qy = min(max(c.cy, lo[1]), hi[1])
        if math.hypot(c.cx - qx, c.cy - qy) <= c.radius + gap:
            return False
    return True


def _sample_waypoints(scene, rng, count, clear, height, min_separation,
                      max_attempts):
    pts = []
    lo, hi = scene.bmin, scene.bmax
    for _ in range(max_attempts):
        if len(pts) == count:
            break
        x = rng.uniform(lo[0] + clear, hi[0] - clear)
        y = rng.uniform(lo[1] + clear, hi[1] - clear)
        p = np.array([x, y, height])
        if clearance(scene, p) < clear:
            continue
        if any(np.linalg.norm(p - q) < min_separation for q in pts):
            continue
        pts.append(p)
    if len(pts) < count:
        raise PlacementError(f"placed only {len(pts)}/{count} waypoints")
    return WaypointSet(np.array(pts), clear)


def generate_cylinder_forest(seed: int,
                             bounds=((0.0, 0.0, 0.0), (15.0, 12.0, 4.0)),
                             n_cylinders: int = 12,
                             radius_range=(0.3, 0.6),
                             n_boxes: int = 2,
                             waypoint_count: int = 12,
                             clearance_m: float = 0.7,
                             cylinder_height: float = 2.0,
                             waypoint_height: float = 1.0,
                             min_separation: float = 1.5,
                             max_attempts: int = 20000):
    """Cuboid room scattered with non-overlapping pillars and a few boxes.

    Deterministic for a fixed seed; raises PlacementError when rejection
    sampling cannot satisfy the constraints within the attempt budget.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    margin = 0.1
    cylinders: list[Cylinder] = []
    boxes: list[Box] = []
    attempts = 0
    while len(cylinders) < n_cylinders:
        if attempts > max_attempts:
            raise PlacementError("cylinder placement budget exhausted")
        attempts += 1
        r = rng.uniform(*radius_range)
        cx = rng.uniform(lo[0] + r + margin, hi[0] - r - margin)
        cy = rng.uniform(lo[1] + r + margin, hi[1] - r - margin)
        if _footprint_clear(cx, cy, r, cylinders, boxes):
            albedo = rng.uniform(0.2, 0.9)
            cylinders.append(Cylinder(cx, cy, r, lo[2],
                                      min(lo[2] + cylinder_height, hi[2]), albedo))
    attempts = 0
    while len(boxes) < n_boxes:
        if attempts > max_attempts:
            raise PlacementError("box placement budget exhausted")
        attempts += 1
        sx = rng.uniform(0.5, 1.2)
        sy = rng.uniform(0.5, 1.2)
        h = rng.uniform(1.2, 2.0)
        bx = rng.uniform(lo[0] + margin, hi[0] - sx - margin)
        by = rng.uniform(lo[1] + margin, hi[1] - sy - margin)
        blo = (bx, by, lo[2])
        bhi = (bx + sx, by + sy, min(lo[2] + h, hi[2]))
        if _box_clear(blo, bhi, cylinders, boxes):
            albedo = rng.uniform(0.2, 0.9)
            boxes.append(Box(blo, bhi, albedo))
    shell_albedo = rng.uniform(0.2, 0.9)
    scene = Scene(tuple(lo), tuple(hi), tuple(cylinders), tuple(boxes), (),
                  shell_albedo)
    waypoints = _sample_waypoints(scene, rng, waypoint_count, clearance_m,
                                  lo[2] + waypoint_height, min_separation,
                                  max_attempts)
    return scene, waypoints


def generate_four_rooms(seed: int,
                        bounds=((0.0, 0.0, 0.0), (10.0, 10.0, 3.0)),
                        wall_thickness: float = 0.2,
                        door_width: float = 1.2,
                        waypoint_count: int = 7,
                        clearance_m: float = 0.6,
                        waypoint_height: float = 1.5,
                        max_attempts: int = 20000):
    """Four connected rooms: two crossing interior walls, one doorway per arm."""
    rng = np.random.default_rng(seed)
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    mx = 0.5 * (lo[0] + hi[0])
    my = 0.5 * (lo[1] + hi[1])
    ht = wall_thickness / 2
    boxes = []

    def wall_segments(lo_v, hi_v, door_at):
        segs = []
        if door_at - door_width / 2 > lo_v:
            segs.append((lo_v, door_at - door_width / 2))
        if door_at + door_width / 2 < hi_v:
            segs.append((door_at + door_width / 2, hi_v))
        return segs

    # wall along y = my, split into two x-arms; wall along x = mx likewise
    for (arm_lo, arm_hi) in ((lo[0], mx - ht), (mx + ht, hi[0])):
        door = rng.uniform(arm_lo + door_width, arm_hi - door_width)
        for s0, s1 in wall_segments(arm_lo, arm_hi, door):
            boxes.append(Box((s0, my - ht, lo[2]), (s1, my + ht, hi[2]),
                             rng.uniform(0.2, 0.9)))
    for (arm_lo, arm_hi) in ((lo[1], my - ht), (my + ht, hi[1])):
        door = rng.uniform(arm_lo + door_width, arm_hi - door_width)
        for s0, s1 in wall_segments(arm_lo, arm_hi, door):
            boxes.append(Box((mx - ht, s0, lo[2]), (mx + ht, s1, hi[2]),
                             rng.uniform(0.2, 0.9)))
    boxes.append(Box((mx - ht, my - ht, lo[2]), (mx + ht, my + ht, hi[2]),
                     rng.uniform(0.2, 0.9)))
    shell_albedo = rng.uniform(0.2, 0.9)
    scene = Scene(tuple(lo), tuple(hi), (), tuple(boxes), (), shell_albedo)
    waypoints = _sample_waypoints(scene, rng, waypoint_count, clearance_m,
                                  lo[2] + waypoint_height, 1.5, max_attempts)
    return scene, waypoints


def survey_orbit(scene: Scene, n_per_loop: int = 20, heights=(1.2, 2.2),
                 radius_frac: float = 0.35, pitch: float = -0.15) -> list[Pose]:
    """Scripted survey: two circular loops, one looking outward, one inward.

    Poses landing inside or hugging an obstacle are dropped, so the pose
    count can vary slightly between scenes.
    """
    lo, hi = scene.bmin, scene.bmax
    center = 0.5 * (lo + hi)
    radius = radius_frac * min(hi[0] - lo[0], hi[1] - lo[1])
    poses = []
    for loop, height in enumerate(heights):
        for k in range(n_per_loop):
            ang = 2 * math.pi * k / n_per_loop
            pos = np.array([center[0] + radius * math.cos(ang),
                            center[1] + radius * math.sin(ang),
                            lo[2] + height])
            yaw = ang if loop == 0 else ang + math.pi
            if clearance(scene, pos) < 0.2:
                continue
            poses.append(camera_pose(pos, yaw, pitch))
    return poses


# --- serialization ---------------------------------------------------------


def scene_to_dict(scene: Scene, waypoints: WaypointSet | None = None) -> dict:
    doc = {
        "bounds": {"min": list(scene.bounds_min), "max": list(scene.bounds_max)},
        "shell_albedo": scene.shell_albedo,
        "cylinders": [{"cx": c.cx, "cy": c.cy, "radius": c.radius,
                       "z_min": c.z_min, "z_max": c.z_max, "albedo": c.albedo}
                      for c in scene.cylinders],
        "boxes": [{"min": list(b.min_corner), "max": list(b.max_corner),
                   "albedo": b.albedo} for b in scene.boxes],
        "openings": [{"face": o.face, "lo": list(o.lo), "hi": list(o.hi)}
                     for o in scene.openings],
    }
    if waypoints is not None:
        doc["waypoints"] = {"points": waypoints.points.tolist(),
                            "clearance": waypoints.clearance}
    return doc


def scene_from_dict(doc: dict):
    scene = Scene(
        tuple(doc["bounds"]["min"]), tuple(doc["bounds"]["max"]),
        tuple(Cylinder(c["cx"], c["cy"], c["radius"], c["z_min"], c["z_max"],
                       c["albedo"]) for c in doc.get("cylinders", ())),
        tuple(Box(tuple(b["min"]), tuple(b["max"]), b["albedo"])
              for b in doc.get("boxes", ())),
        tuple(Opening(o["face"], tuple(o["lo"]), tuple(o["hi"]))
              for o in doc.get("openings", ())),
        doc.get("shell_albedo", 0.6),
    )
    wps = None
    if "waypoints" in doc:
        wps = WaypointSet(np.asarray(doc["waypoints"]["points"]),
                          doc["waypoints"]["clearance"])
    return scene, wps


def save_world(path, scene: Scene, waypoints: WaypointSet | None = None) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene, waypoints),
                                     indent=2, sort_keys=True) + "\n")


def load_world(path):
    return scene_from_dict(json.loads(Path(path).read_text()))
