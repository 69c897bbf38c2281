"""Conservative planning on the ESDF: iteration-budgeted RRT*, probabilistic
intermediate-goal selection scored by a reward, horizon projection, and a
clearance-guaranteed local segment planner.

Every polyline any of these return passes clearance_check against the ESDF
it was planned on; that assertion runs on every call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .esdf import EsdfGrid, OutOfGridError, clearance_check, interpolate
from .tsdf import TsdfGrid

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class PlanningError(RuntimeError):
    pass


class NoPathFound(PlanningError):
    """RRT* exhausted its budget without connecting to the goal."""


class InvalidStart(PlanningError):
    """The start violates the clearance radius."""


class ProjectionFailure(PlanningError):
    """No probe on the horizon sphere had sufficient clearance."""


class NoLocalPath(PlanningError):
    """The local planner found no collision-free trajectory."""


@dataclass(frozen=True)
class PlannerConfig:
    p_g: float = 0.5
    sample_radius: float = 4.0
    n_samples: int = 50
    collision_radius: float = 0.25
    horizon: float = 3.0
    v_max: float = 1.5
    rrt_iteration_budget: int = 20000
    local_rrt_budget: int = 2000
    seed: int = 0
    w_goal: float = 1.0
    w_unk: float = 0.5
    w_clear: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.p_g <= 1.0):
            raise ValueError("p_g must lie in [0, 1]")
        for name in ("sample_radius", "collision_radius", "horizon", "v_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Time-parameterized piecewise-linear path."""

    points: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        t = np.asarray(self.times, dtype=float).reshape(-1)
        if p.shape[0] != t.shape[0] or p.shape[0] == 0:
            raise ValueError("points and times must have equal nonzero length")
        if np.any(np.diff(t) < 0):
            raise ValueError("timestamps must be non-decreasing")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "times", t)

    @staticmethod
    def from_polyline(points, v_max: float, start_time: float = 0.0) -> "Trajectory":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        keep = [0]
        for i in range(1, pts.shape[0]):
            if np.linalg.norm(pts[i] - pts[keep[-1]]) > 1e-12:
                keep.append(i)
        pts = pts[keep]
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        times = start_time + np.concatenate([[0.0], np.cumsum(seg / v_max)])
        return Trajectory(pts, times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def sample(self, t: float) -> np.ndarray:
        t = min(max(t, self.times[0]), self.times[-1])
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), len(self.times) - 2) if len(self.times) > 1 else 0
        if len(self.times) == 1:
            return self.points[0].copy()
        t0, t1 = self.times[i], self.times[i + 1]
        if t1 <= t0:
            return self.points[i + 1].copy()
        f = (t - t0) / (t1 - t0)
        return self.points[i] + f * (self.points[i + 1] - self.points[i])

    def remaining_polyline(self, t: float) -> np.ndarray:
        """Current position at time t followed by the waypoints still ahead."""
        if t <= self.times[0]:
            return self.points.copy()
        if t >= self.times[-1]:
            return self.points[-1:].copy()
        ahead = self.times > t
        return np.vstack([self.sample(t)[None, :], self.points[ahead]])


def _hull_bounds(esdf: EsdfGrid):
    pad = 0.5 * esdf.voxel_size + 1e-9
    return esdf.origin + pad, esdf.origin + esdf.extent - pad


def _inside(lo, hi, p) -> bool:
    return bool(np.all(p >= lo) and np.all(p <= hi))


def _segment_free(esdf, a, b, radius, step) -> bool:
    try:
        return clearance_check(esdf, np.stack([a, b]), radius, step)
    except OutOfGridError:
        return False


def rrt_star(esdf: EsdfGrid, start, goal, radius: float, budget: int,
             seed: int, max_extension: float = 1.0, goal_bias: float = 0.05,
             gamma: float | None = None, check_step: float | None = None,
             early_stop_after: int | None = None) -> np.ndarray:
    """RRT* polyline from start to goal with clearance >= radius.

    The budget counts iterations, not wall-clock, so runs are reproducible.
    `early_stop_after` optionally ends the run that many iterations after
    the first goal connection (used by the local planner).
    """
    start = np.asarray(start, dtype=float).reshape(3)
    goal = np.asarray(goal, dtype=float).reshape(3)
    step = check_step if check_step is not None else esdf.voxel_size / 2
    lo, hi = _hull_bounds(esdf)
    if not _inside(lo, hi, start) or interpolate(esdf, start) < radius:
        raise InvalidStart("start violates the clearance radius")
    goal_ok = _inside(lo, hi, goal) and interpolate(esdf, goal) >= radius
    if not goal_ok:
        raise NoPathFound("goal violates the clearance radius")
    if gamma is None:
        vol = float(np.prod(hi - lo))
        gamma = 2.0 * (1 + 1 / 3) ** (1 / 3) * (vol / (4 * math.pi / 3)) ** (1 / 3)
    rng = np.random.default_rng(seed)

    cap = budget + 1
    pos = np.empty((cap, 3))
    parent = np.full(cap, -1, dtype=np.int64)
    cost = np.zeros(cap)
    connectable = np.zeros(cap, dtype=bool)
    pos[0] = start
    n = 1
    if (np.linalg.norm(goal - start) <= max_extension
            and _segment_free(esdf, start, goal, radius, step)):
        connectable[0] = True
    goal_found_at = 0 if connectable[0] else None

    for it in range(budget):
        if (early_stop_after is not None and goal_found_at is not None
                and it - goal_found_at >= early_stop_after):
            break
        if rng.random() < goal_bias:
            target = goal
        else:
            target = rng.uniform(lo, hi)
        d2 = ((pos[:n] - target) ** 2).sum(axis=1)
        nearest = int(np.argmin(d2))
        vec = target - pos[nearest]
        dist = math.sqrt(float(d2[nearest]))
        if dist < 1e-12:
            continue
        x_new = pos[nearest] + vec * min(1.0, max_extension / dist)
        try:
            if interpolate(esdf, x_new) < radius:
                continue
        except OutOfGridError:
            continue
        dn = np.linalg.norm(pos[:n] - x_new, axis=1)
        r_n = min(gamma * (math.log(n + 1) / (n + 1)) ** (1 / 3), max_extension)
        near = np.flatnonzero(dn <= r_n)
        if near.size == 0:
            near = np.array([nearest])
        # cheapest feasible parent
        totals = cost[near] + dn[near]
        best_parent = -1
        for j in near[np.argsort(totals, kind="stable")]:
            if _segment_free(esdf, pos[j], x_new, radius, step):
                best_parent = int(j)
                break
        if best_parent < 0:
            continue
        pos[n] = x_new
        parent[n] = best_parent
        cost[n] = cost[best_parent] + dn[best_parent]
        # rewire neighbors through the new node
        for j in near:
            cand = cost[n] + dn[j]
            if cand + 1e-12 < cost[j] and _segment_free(esdf, x_new, pos[j],
                                                        radius, step):
                parent[j] = n
                cost[j] = cand
        if (np.linalg.norm(x_new - goal) <= max_extension
                and _segment_free(esdf, x_new, goal, radius, step)):
            connectable[n] = True
            if goal_found_at is None:
                goal_found_at = it
        n += 1

    conn = np.flatnonzero(connectable[:n])
    if conn.size == 0:
        raise NoPathFound(f"no path after {budget} iterations")

    def chain_cost(i):
        total = 0.0
        while parent[i] >= 0:
            total += float(np.linalg.norm(pos[i] - pos[parent[i]]))
            i = parent[i]
        return total

    totals = [chain_cost(int(i)) + float(np.linalg.norm(pos[i] - goal))
              for i in conn]
    best = int(conn[int(np.argmin(totals))])
    path = [goal]
    i = best
    while i >= 0:
        path.append(pos[i].copy())
        i = parent[i]
    path = np.array(path[::-1])
    if not clearance_check(esdf, path, radius, step):
        raise AssertionError("planner produced a path violating its own clearance")
    return path


def project_to_horizon(esdf: EsdfGrid, current, goal, horizon: float,
                       radius: float, n_probes: int = 64,
                       cone_half_angle: float = math.pi / 3) -> np.ndarray:
    """Goal if within the horizon, else a clear point on the horizon sphere.

    Probes spiral outward from the goal direction (golden-angle placement)
    within the cone; the first probe with clearance >= radius wins.
    """
    current = np.asarray(current, dtype=float).reshape(3)
    goal = np.asarray(goal, dtype=float).reshape(3)
    offset = goal - current
    dist = float(np.linalg.norm(offset))
    if dist <= horizon:
        return goal.copy()
    u = offset / dist
    # orthonormal basis around the goal direction
    helper = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(u, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    lo, hi = _hull_bounds(esdf)
    for k in range(n_probes):
        theta = cone_half_angle * math.sqrt(k / (n_probes - 1))
        phi = k * GOLDEN_ANGLE
        d = (math.cos(theta) * u
             + math.sin(theta) * (math.cos(phi) * e1 + math.sin(phi) * e2))
        cand = current + horizon * d
        if not _inside(lo, hi, cand):
            continue
        if interpolate(esdf, cand) >= radius:
            return cand
    raise ProjectionFailure("all horizon probes blocked")


_BALL_CACHE: dict = {}


def _ball_offsets(voxel_size: float, radius: float) -> np.ndarray:
    key = (round(voxel_size, 12), round(radius, 12))
    if key not in _BALL_CACHE:
        r_vox = int(math.floor(radius / voxel_size))
        ax = np.arange(-r_vox, r_vox + 1)
        ox, oy, oz = np.meshgrid(ax, ax, ax, indexing="ij")
        keep = (ox ** 2 + oy ** 2 + oz ** 2) * voxel_size ** 2 <= radius ** 2 + 1e-12
        _BALL_CACHE[key] = np.stack([ox[keep], oy[keep], oz[keep]], axis=1)
    return _BALL_CACHE[key]


def unknown_fraction(tsdf: TsdfGrid, points, radius: float = 1.0) -> np.ndarray:
    """Fraction of the fixed voxel ball around each point that is unobserved.

    Out-of-grid ball voxels count as observed, so the fraction rewards
    in-map frontiers rather than the walls."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    offs = _ball_offsets(tsdf.voxel_size, radius)
    base = np.floor((pts - tsdf.origin) / tsdf.voxel_size).astype(np.int64)
    idx = base[:, None, :] + offs[None, :, :]
    dims = np.asarray(tsdf.dims)
    in_grid = np.all((idx >= 0) & (idx < dims), axis=2)
    idx_c = np.clip(idx, 0, dims - 1)
    unobs = (tsdf.weight[idx_c[..., 0], idx_c[..., 1], idx_c[..., 2]] == 0)
    return (unobs & in_grid).sum(axis=1) / offs.shape[0]


def select_intermediate_goal(esdf: EsdfGrid, tsdf: TsdfGrid, current,
                             global_goal, cfg: PlannerConfig,
                             rng: np.random.Generator):
    """Next intermediate goal, or None to stay in place.

    With probability p_g the global goal is projected onto the horizon;
    otherwise candidates sampled in the ball of radius `sample_radius` are
    scored by reward(x) = w_goal * progress + w_unk * unknown-fraction
    + w_clear * min(clearance, 1) and the argmax wins (first drawn on ties).
    When the horizon projection fails, selection falls through to sampling.
    """
    current = np.asarray(current, dtype=float).reshape(3)
    goal = np.asarray(global_goal, dtype=float).reshape(3)
    if rng.random() < cfg.p_g:
        try:
            return project_to_horizon(esdf, current, goal, cfg.horizon,
                                      cfg.collision_radius)
        except ProjectionFailure:
            pass
    u = rng.standard_normal((cfg.n_samples, 3))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-12)
    radii = cfg.sample_radius * rng.random(cfg.n_samples) ** (1 / 3)
    cands = current + u * radii[:, None]
    lo, hi = _hull_bounds(esdf)
    ok = np.all((cands >= lo) & (cands <= hi), axis=1)
    if not ok.any():
        return None
    cands = cands[ok]
    clear = interpolate(esdf, cands)
    feasible = clear >= cfg.collision_radius
    if not feasible.any():
        return None
    cands = cands[feasible]
    clear = clear[feasible]
    vox = np.floor((cands - tsdf.origin) / tsdf.voxel_size).astype(np.int64)
    dims = np.asarray(tsdf.dims)
    in_grid = np.all((vox >= 0) & (vox < dims), axis=1)
    vox_c = np.clip(vox, 0, dims - 1)
    observed = tsdf.weight[vox_c[:, 0], vox_c[:, 1], vox_c[:, 2]] > 0
    keep = in_grid & observed
    if not keep.any():
        return None
    cands = cands[keep]
    clear = clear[keep]
    progress = (np.linalg.norm(current - goal)
                - np.linalg.norm(cands - goal, axis=1))
    unk = unknown_fraction(tsdf, cands)
    reward = (cfg.w_goal * progress + cfg.w_unk * unk
              + cfg.w_clear * np.minimum(clear, 1.0))
    return cands[int(np.argmax(reward))].copy()


def _point_along(pts, cum, s):
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(pts) - 2)
    seg = cum[i + 1] - cum[i]
    f = 0.0 if seg <= 0 else (s - cum[i]) / seg
    return pts[i] + f * (pts[i + 1] - pts[i]), i


def shortcut(esdf: EsdfGrid, polyline, radius: float, step: float,
             rng: np.random.Generator, attempts: int = 100) -> np.ndarray:
    """Repeated random segment replacement; never lengthens the path and
    keeps every replacement clearance-checked."""
    pts = [np.asarray(p, dtype=float) for p in polyline]
    for _ in range(attempts):
        if len(pts) <= 2:
            break
        arr = np.array(pts)
        cum = np.concatenate([[0.0], np.cumsum(
            np.linalg.norm(np.diff(arr, axis=0), axis=1))])
        if cum[-1] < 1e-9:
            break
        s1, s2 = np.sort(rng.uniform(0.0, cum[-1], size=2))
        p1, i1 = _point_along(arr, cum, s1)
        p2, i2 = _point_along(arr, cum, s2)
        if i2 <= i1:
            continue
        # the flanking partial segments get new sampling phases in the final
        # clearance check, so verify them exactly as they will appear
        if (_segment_free(esdf, p1, p2, radius, step)
                and _segment_free(esdf, pts[i1], p1, radius, step)
                and _segment_free(esdf, p2, pts[i2 + 1], radius, step)):
            pts = pts[:i1 + 1] + [p1, p2] + pts[i2 + 1:]
    return np.array(pts)


def local_plan(esdf: EsdfGrid, start, intermediate, radius: float,
               v_max: float, seed: int = 0, rrt_budget: int = 2000,
               check_step: float | None = None,
               start_time: float = 0.0) -> Trajectory:
    """Collision-free trajectory from start to the intermediate goal.

    Straight segment when it clears; otherwise a small-budget RRT* whose
    result is shortcut. Raises NoLocalPath when neither works.
    """
    start = np.asarray(start, dtype=float).reshape(3)
    inter = np.asarray(intermediate, dtype=float).reshape(3)
    step = check_step if check_step is not None else esdf.voxel_size / 2
    if np.linalg.norm(inter - start) < 1e-12:
        return Trajectory(start[None, :], np.array([start_time]))
    try:
        if clearance_check(esdf, np.stack([start, inter]), radius, step):
            traj = Trajectory.from_polyline([start, inter], v_max, start_time)
            return traj
    except OutOfGridError:
        raise NoLocalPath("segment leaves the mapped volume")
    lo, hi = _hull_bounds(esdf)
    if not _inside(lo, hi, inter):
        raise NoLocalPath("intermediate goal outside the mapped volume")
    if interpolate(esdf, inter) < radius:
        raise NoLocalPath("intermediate goal violates clearance")
    try:
        path = rrt_star(esdf, start, inter, radius, rrt_budget, seed,
                        check_step=step, early_stop_after=200)
    except PlanningError as exc:
        raise NoLocalPath(str(exc)) from exc
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
    path = shortcut(esdf, path, radius, step, rng)
    if not clearance_check(esdf, path, radius, step):
        raise AssertionError("shortcut produced a path violating clearance")
    return Trajectory.from_polyline(path, v_max, start_time)
