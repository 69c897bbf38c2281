"""Closed-loop episode simulation (sense, degrade, complete, fuse, plan,
move) and the experiment matrix with success/path-length/time metrics.

Simulation is turn-based in simulated time: sensing ticks advance the
clock, so wall-clock performance never changes an outcome. Collisions are
checked against the analytic scene oracle and abort the run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from . import world as W
from .complete import AugmentedFrame, CompleterSpec, complete, PROV_MEASURED
from .esdf import (OutOfGridError, clearance_check, compute_esdf,
                   interpolate, query)
from .frames import Intrinsics, camera_pose
from .plan import (NoLocalPath, InvalidStart, PlannerConfig, Trajectory,
                   local_plan, select_intermediate_goal)
from .sparsify import SparsifyConfig, sparsify
from .tsdf import IntegrationConfig, TsdfGrid, integrate_frame
from .world import Scene, WaypointSet, render_depth, render_gray

MODE_GROUND_TRUTH = "ground_truth"
MODE_SPARSE = "sparse"
MODE_AUGMENTED = "augmented"
MODES = (MODE_GROUND_TRUTH, MODE_SPARSE, MODE_AUGMENTED)

MODE_COLORS = {MODE_GROUND_TRUTH: "#1f77b4", MODE_AUGMENTED: "#d62728",
               MODE_SPARSE: "#2ca02c"}

FAIL_TIMEOUT = "timeout"
FAIL_STUCK = "planner-stuck"
FAIL_COLLISION = "collision"


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = MODE_GROUND_TRUTH
    intrinsics: Intrinsics = field(default_factory=Intrinsics.default)
    sparsify: SparsifyConfig = field(default_factory=SparsifyConfig)
    completer: CompleterSpec | None = None
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    voxel_size: float = 0.1
    free_threshold: float = 0.2
    unknown_is_obstacle: bool = True
    unknown_sphere_radius: float = 3.0
    robot_clear_radius: float = 0.5
    d_cap: float = 5.0
    epsilon: float = 0.25
    timeout: float = 40.0
    sense_rate: float = 5.0
    plan_rate: float = 5.0
    log_rate: float = 10.0
    seed: int = 0
    stuck_patience: float = 5.0
    light: W.LightModel = field(default_factory=W.LightModel.default)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.epsilon <= 0 or self.timeout <= 0:
            raise ValueError("epsilon and timeout must be positive")
        if min(self.sense_rate, self.plan_rate, self.log_rate) <= 0:
            raise ValueError("rates must be positive")
        if self.mode == MODE_AUGMENTED and self.completer is None:
            raise ValueError("augmented mode requires a completer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["light"] = {"direction": list(self.light.direction),
                      "ambient": self.light.ambient}
        return d

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    pair: tuple
    start: np.ndarray
    goal: np.ndarray
    success: bool
    sim_time: float
    path_length: float
    relative_length: float
    failure_reason: str | None
    sample_times: np.ndarray
    samples: np.ndarray

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "start": [float(v) for v in self.start],
            "goal": [float(v) for v in self.goal],
            "success": self.success,
            "sim_time": self.sim_time,
            "path_length": self.path_length,
            "relative_length": self.relative_length,
            "failure_reason": self.failure_reason,
            "sample_times": [float(t) for t in self.sample_times],
            "samples": [[float(c) for c in p] for p in self.samples],
        }

    @staticmethod
    def from_dict(d: dict) -> "RunRecord":
        return RunRecord(tuple(d["pair"]), np.asarray(d["start"]),
                         np.asarray(d["goal"]), bool(d["success"]),
                         float(d["sim_time"]), float(d["path_length"]),
                         float(d["relative_length"]), d["failure_reason"],
                         np.asarray(d["sample_times"]),
                         np.asarray(d["samples"]).reshape(-1, 3))


def path_length_of(samples: np.ndarray, goal: np.ndarray) -> float:
    """Sum of inter-sample distances plus the final distance to the goal."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 3)
    seg = np.linalg.norm(np.diff(samples, axis=0), axis=1).sum() if len(samples) > 1 else 0.0
    return float(seg + np.linalg.norm(samples[-1] - np.asarray(goal)))


def sense_frame(scene: Scene, pose, cfg: ExperimentConfig, frame_id: int,
                noise_seed: int) -> AugmentedFrame:
    """Render and degrade one frame according to the experiment mode."""
    depth_gt = render_depth(scene, pose, cfg.intrinsics)
    if cfg.mode == MODE_GROUND_TRUTH:
        prov = np.where(depth_gt.values > 0, PROV_MEASURED, 0).astype(np.uint8)
        return AugmentedFrame(depth_gt, prov)
    gray = render_gray(scene, pose, cfg.intrinsics, cfg.light)
    scfg = cfg.sparsify
    if scfg.noise:
        scfg = SparsifyConfig(p=scfg.p, r_max=scfg.r_max,
                              blur_sigma=scfg.blur_sigma, dilate=scfg.dilate,
                              noise=True, seed=noise_seed)
    ds = sparsify(depth_gt, gray, scfg, frame_id=frame_id)
    if cfg.mode == MODE_SPARSE:
        prov = np.where(ds.values > 0, PROV_MEASURED, 0).astype(np.uint8)
        return AugmentedFrame(ds, prov)
    return complete(cfg.completer, gray, ds, frame_index=frame_id)


def run_episode(scene: Scene, start, goal, cfg: ExperimentConfig,
                episode_seed: int = 0, pair=(0, 1),
                keep_grid: bool = False):
    """One spawn-to-goal episode; all runtime outcomes are recorded, never
    raised. With `keep_grid` the return value is (record, final TSDF)."""
    start = np.asarray(start, dtype=float).reshape(3)
    goal = np.asarray(goal, dtype=float).reshape(3)
    straight = float(np.linalg.norm(goal - start))

    def record(success, sim_time, reason, times, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        length = path_length_of(pts, goal)
        rel = length / straight if straight > 1e-9 else 1.0
        return RunRecord(pair=tuple(pair), start=start, goal=goal,
                         success=success, sim_time=float(sim_time),
                         path_length=length, relative_length=float(rel),
                         failure_reason=reason,
                         sample_times=np.asarray(times, dtype=float),
                         samples=pts)

    def finish(rec):
        return (rec, grid) if keep_grid else rec

    grid = TsdfGrid.for_bounds(scene.bmin, scene.bmax, cfg.voxel_size,
                               cfg.integration.delta_trunc)
    if straight <= cfg.epsilon:
        return finish(record(True, 0.0, None, [0.0], [start]))

    ss = np.random.SeedSequence(entropy=(int(episode_seed) & 0xFFFFFFFF,))
    noise_seed, planner_seed, local_seed = (
        int(s.generate_state(1)[0]) for s in ss.spawn(3))
    rng_plan = np.random.default_rng(planner_seed)

    pos = start.copy()
    yaw = math.atan2(goal[1] - start[1], goal[0] - start[0])
    dt = 1.0 / cfg.sense_rate
    plan_interval = 1.0 / cfg.plan_rate
    log_interval = 1.0 / cfg.log_rate
    stuck_limit = max(1, int(math.ceil(cfg.stuck_patience * cfg.plan_rate)))
    radius = cfg.planner.collision_radius
    # discretization slack granted end-to-end: trajectories are planned at
    # the full radius, but map refinement may shave interpolated clearance
    # at poses already reached, and the analytic body check inherits the
    # voxel-diagonal tolerance
    slack_radius = max(radius - cfg.voxel_size * math.sqrt(3.0), 1e-6)
    # intermediate goals keep an extra voxel of clearance so the vehicle
    # never parks on the margin
    select_cfg = replace(cfg.planner,
                         collision_radius=radius + cfg.voxel_size)

    def escape_hop(esdf):
        """Short up-gradient hop out of a marginally tight spot."""
        p = pos.copy()
        for _ in range(6):
            try:
                _, grad = query(esdf, p)
            except Exception:
                return None
            norm = np.linalg.norm(grad)
            if norm < 1e-9:
                return None
            p = p + 0.05 * grad / norm
            try:
                if interpolate(esdf, p) >= radius + 0.5 * cfg.voxel_size:
                    return Trajectory.from_polyline([pos, p],
                                                    cfg.planner.v_max, t)
            except Exception:
                return None
        return None

    t = 0.0
    next_plan = 0.0
    next_log = 0.0
    trajectory: Trajectory | None = None
    failed_plans = 0
    times: list[float] = []
    pts: list[np.ndarray] = []
    outcome = None  # (success, time, reason)
    tick = 0

    def log_until(t_end, position_of):
        nonlocal next_log
        while next_log <= t_end + 1e-9:
            times.append(next_log)
            pts.append(position_of(next_log).copy())
            next_log += log_interval

    while t < cfg.timeout - 1e-9 and outcome is None:
        pose = camera_pose(pos, yaw)
        frame = sense_frame(scene, pose, cfg, frame_id=tick,
                            noise_seed=noise_seed)
        integrate_frame(grid, pose, cfg.intrinsics, frame, cfg.integration)

        if t >= next_plan - 1e-9:
            next_plan += plan_interval
            # the startup bubble is anchored at the spawn point, whose true
            # clearance the waypoint generator guarantees; a robot-following
            # bubble could free unknown voxels hugging unseen obstacles
            esdf = compute_esdf(
                grid, t=cfg.free_threshold,
                unknown_is_obstacle=cfg.unknown_is_obstacle,
                robot_pos=pos, unknown_sphere_radius=cfg.unknown_sphere_radius,
                d_cap=cfg.d_cap, clear_pos=start,
                clear_radius=cfg.robot_clear_radius)
            intermediate = select_intermediate_goal(esdf, grid, pos, goal,
                                                    select_cfg, rng_plan)
            new_traj = None
            marginal_start = False
            if intermediate is not None:
                try:
                    new_traj = local_plan(esdf, pos, intermediate, radius,
                                          cfg.planner.v_max,
                                          seed=local_seed + tick,
                                          rrt_budget=cfg.planner.local_rrt_budget,
                                          start_time=t)
                except InvalidStart:
                    marginal_start = True
                except NoLocalPath:
                    pass
            if new_traj is not None:
                trajectory = new_traj
                failed_plans = 0
            else:
                failed_plans += 1
                if trajectory is not None:
                    if trajectory.times[-1] <= t + 1e-9:
                        trajectory = None  # exhausted; hover
                    else:
                        # keep a stale trajectory while its remainder clears
                        # at the slack radius; refinement jitter around the
                        # full radius must not strand the vehicle
                        try:
                            ok = clearance_check(
                                esdf, trajectory.remaining_polyline(t),
                                slack_radius, cfg.voxel_size / 2)
                        except OutOfGridError:
                            ok = False
                        if not ok:
                            trajectory = None
                if trajectory is None and marginal_start:
                    hop = escape_hop(esdf)
                    if hop is not None:
                        trajectory = hop
                        failed_plans = 0
                if trajectory is None and failed_plans >= stuck_limit:
                    outcome = (False, t, FAIL_STUCK)
                    log_until(t, lambda _t: pos)
                    break

        # follow the trajectory through this tick, checking collision and
        # arrival along the way
        t_new = t + dt
        hold = pos.copy()

        def position_of(tau, _traj=trajectory, _hold=hold):
            return _traj.sample(tau) if _traj is not None else _hold

        n_sub = max(1, int(math.ceil(cfg.planner.v_max * dt / 0.05)))
        for k in range(1, n_sub + 1):
            tau = t + dt * k / n_sub
            q = position_of(tau)
            if W.clearance(scene, q) < slack_radius:
                log_until(tau, position_of)
                times.append(tau)
                pts.append(q.copy())
                pos = q
                outcome = (False, tau, FAIL_COLLISION)
                break
            if np.linalg.norm(q - goal) <= cfg.epsilon:
                log_until(tau, position_of)
                times.append(tau)
                pts.append(q.copy())
                pos = q
                outcome = (True, tau, None)
                break
        if outcome is not None:
            break
        log_until(t_new, position_of)
        new_pos = position_of(t_new)
        delta = new_pos - pos
        if np.linalg.norm(delta[:2]) > 1e-6:
            yaw = math.atan2(delta[1], delta[0])
        pos = new_pos.copy()
        t = t_new
        tick += 1

    if outcome is None:
        outcome = (False, cfg.timeout, FAIL_TIMEOUT)
        log_until(cfg.timeout, lambda _t: pos)
        if not times or abs(times[-1] - cfg.timeout) > 1e-9:
            times.append(cfg.timeout)
            pts.append(pos.copy())
    success, sim_time, reason = outcome
    if not times:
        times = [0.0]
        pts = [start]
    return finish(record(success, sim_time, reason, times, pts))


@dataclass
class Report:
    mode: str
    config_digest: str
    records: list = field(default_factory=list)

    @property
    def n_runs(self) -> int:
        return len(self.records)

    @property
    def n_success(self) -> int:
        return sum(1 for r in self.records if r.success)

    @property
    def success_rate(self) -> float:
        return self.n_success / self.n_runs if self.records else 0.0

    def successful_pairs(self) -> set:
        return {r.pair for r in self.records if r.success}

    def means_over(self, pairs=None) -> dict:
        sel = [r for r in self.records
               if r.success and (pairs is None or r.pair in pairs)]
        if not sel:
            return {"n": 0, "path_length": 0.0, "sim_time": 0.0,
                    "relative_length": 0.0}
        return {
            "n": len(sel),
            "path_length": float(np.mean([r.path_length for r in sel])),
            "sim_time": float(np.mean([r.sim_time for r in sel])),
            "relative_length": float(np.mean([r.relative_length for r in sel])),
        }

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "config_digest": self.config_digest,
            "aggregates": {
                "n_runs": self.n_runs,
                "n_success": self.n_success,
                "success_rate": self.success_rate,
                **{k: v for k, v in self.means_over().items() if k != "n"},
            },
            "records": [r.to_dict() for r in self.records],
        }

    @staticmethod
    def from_dict(d: dict) -> "Report":
        return Report(d["mode"], d["config_digest"],
                      [RunRecord.from_dict(r) for r in d["records"]])


def waypoint_pairs(count: int, ordered: bool = True) -> list:
    if ordered:
        return [(i, j) for i in range(count) for j in range(count) if i != j]
    return [(i, j) for i in range(count) for j in range(i + 1, count)]


def run_matrix(scene: Scene, waypoints: WaypointSet, cfg: ExperimentConfig,
               ordered: bool = True, pairs=None,
               map_dir=None) -> Report:
    """Run every waypoint pair with per-pair derived seeds.

    With `map_dir` set, the final TSDF of each run is written there as
    `<mode>_<i>_<j>.tsdf`.
    """
    from .tsdf import save_tsdf

    if len(waypoints) < 2:
        raise ValueError("need at least two waypoints")
    if pairs is None:
        pairs = waypoint_pairs(len(waypoints), ordered)
    report = Report(mode=cfg.mode, config_digest=cfg.digest())
    for (i, j) in pairs:
        seed = int(np.random.SeedSequence(
            entropy=(cfg.seed, i, j)).generate_state(1)[0])
        out = run_episode(scene, waypoints.points[i], waypoints.points[j],
                          cfg, episode_seed=seed, pair=(i, j),
                          keep_grid=map_dir is not None)
        if map_dir is not None:
            rec, grid = out
            path = Path(map_dir)
            path.mkdir(parents=True, exist_ok=True)
            save_tsdf(path / f"{cfg.mode}_{i}_{j}.tsdf", grid)
        else:
            rec = out
        report.records.append(rec)
    return report


def common_success_stats(reports: dict) -> dict:
    """Per-mode means over the runs successful in every compared mode."""
    if not reports:
        return {}
    common = None
    for rep in reports.values():
        got = rep.successful_pairs()
        common = got if common is None else (common & got)
    return {
        "common_pairs": sorted(common),
        "per_mode": {mode: rep.means_over(common)
                     for mode, rep in reports.items()},
    }


# --- emission ---------------------------------------------------------------

CSV_FIELDS = ["mode", "start_idx", "goal_idx", "start_x", "start_y", "start_z",
              "goal_x", "goal_y", "goal_z", "success", "sim_time",
              "path_length", "relative_length", "failure_reason"]


def _csv_text(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for rep in reports:
        for r in rep.records:
            writer.writerow([
                rep.mode, r.pair[0], r.pair[1],
                repr(float(r.start[0])), repr(float(r.start[1])),
                repr(float(r.start[2])), repr(float(r.goal[0])),
                repr(float(r.goal[1])), repr(float(r.goal[2])),
                int(r.success), repr(float(r.sim_time)),
                repr(float(r.path_length)), repr(float(r.relative_length)),
                r.failure_reason or "",
            ])
    return buf.getvalue()


def _svg_text(reports, scene: Scene | None) -> str:
    if scene is not None:
        lo, hi = scene.bmin, scene.bmax
    else:
        all_samples = [r.samples for rep in reports for r in rep.records]
        if all_samples:
            pts = np.vstack(all_samples)
            lo = pts.min(axis=0) - 1
            hi = pts.max(axis=0) + 1
        else:
            lo, hi = np.zeros(3), np.ones(3)
    scale = 40.0
    width = (hi[0] - lo[0]) * scale
    height = (hi[1] - lo[1]) * scale

    def sx(x):
        return (x - lo[0]) * scale

    def sy(y):
        return (hi[1] - y) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
             f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
             f'<rect width="{width:.0f}" height="{height:.0f}" fill="white" '
             'stroke="black"/>']
    if scene is not None:
        for c in scene.cylinders:
            parts.append(f'<circle cx="{sx(c.cx):.1f}" cy="{sy(c.cy):.1f}" '
                         f'r="{c.radius * scale:.1f}" fill="#bbbbbb"/>')
        for b in scene.boxes:
            x0, y0 = sx(b.min_corner[0]), sy(b.max_corner[1])
            w = (b.max_corner[0] - b.min_corner[0]) * scale
            h = (b.max_corner[1] - b.min_corner[1]) * scale
            parts.append(f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{w:.1f}" '
                         f'height="{h:.1f}" fill="#bbbbbb"/>')
    for rep in reports:
        color = MODE_COLORS.get(rep.mode, "#000000")
        for r in rep.records:
            coords = " ".join(f"{sx(p[0]):.1f},{sy(p[1]):.1f}"
                              for p in r.samples)
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}" stroke-width="1" opacity="0.7"/>')
            parts.append(f'<circle cx="{sx(r.start[0]):.1f}" '
                         f'cy="{sy(r.start[1]):.1f}" r="3" fill="orange"/>')
            parts.append(f'<circle cx="{sx(r.goal[0]):.1f}" '
                         f'cy="{sy(r.goal[1]):.1f}" r="3" fill="orange"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(reports, out_dir, scene: Scene | None = None) -> dict:
    """Write runs.csv, report.json and trajectories.svg; returns file paths."""
    if isinstance(reports, Report):
        reports = [reports]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "reports": [rep.to_dict() for rep in reports],
        "comparison": common_success_stats({rep.mode: rep for rep in reports}),
    }
    paths = {
        "csv": out / "runs.csv",
        "json": out / "report.json",
        "svg": out / "trajectories.svg",
    }
    paths["csv"].write_text(_csv_text(reports))
    paths["json"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    paths["svg"].write_text(_svg_text(reports, scene))
    return paths
