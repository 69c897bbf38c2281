"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import complete as C
from . import esdf as E
from . import frames as F
from . import mapeval as M
from . import plan as P
from . import sim as S
from . import sparsify as SP
from . import tsdf as T
from . import world as W
from .config import ConfigError, PRESETS, parse_and_validate


def _parse_xyz(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"expected x,y,z triple, got {text!r}")
    return np.array([float(p) for p in parts])


def _scene_poses(scene, survey_frames, height_arg=None):
    heights = (1.2, 2.2) if height_arg is None else tuple(height_arg)
    return W.survey_orbit(scene, n_per_loop=survey_frames, heights=heights)


def cmd_gen_world(args) -> int:
    if args.preset == "cylinder-forest":
        scene, wps = W.generate_cylinder_forest(seed=args.seed)
    elif args.preset == "four-rooms":
        scene, wps = W.generate_four_rooms(seed=args.seed)
    else:
        raise ConfigError(f"unknown world preset {args.preset!r}")
    W.save_world(args.out, scene, wps)
    print(f"wrote {args.out}: {len(scene.cylinders)} cylinders, "
          f"{len(scene.boxes)} boxes, {len(wps)} waypoints")
    return 0


def cmd_render(args) -> int:
    scene, _ = W.load_world(args.scene)
    intr = F.Intrinsics.default()
    if args.width:
        intr = intr.scaled(args.width, args.height or args.width * 3 // 4)
    poses = _scene_poses(scene, args.survey)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, pose in enumerate(poses):
        depth = W.render_depth(scene, pose, intr)
        gray = W.render_gray(scene, pose, intr)
        dname, gname = f"frame_{k:06d}.dfrm", f"frame_{k:06d}.gfrm"
        F.write_depth_frame(out / dname, depth)
        F.write_gray_frame(out / gname, gray)
        entries.append(F.SequenceFrame(k * 1.0, pose, dname, gname))
    F.write_manifest(out / "manifest.json", F.FrameSequence(intr, tuple(entries)))
    print(f"rendered {len(entries)} frames into {out}")
    return 0


def cmd_sparsify(args) -> int:
    depth = F.read_depth_frame(args.depth)
    gray = F.read_gray_frame(args.gray)
    cfg = SP.SparsifyConfig(p=args.p, r_max=args.rmax, blur_sigma=args.blur,
                            dilate=args.dilate, noise=args.noise,
                            seed=args.seed)
    F.write_depth_frame(args.out, SP.sparsify(depth, gray, cfg))
    return 0


def cmd_complete(args) -> int:
    spec = C.CompleterSpec.parse(args.completer)
    sparse = F.read_depth_frame(args.sparse)
    gray = F.read_gray_frame(args.gray)
    aug = C.complete(spec, gray, sparse)
    F.write_depth_frame(args.out, aug.depth)
    if args.provenance:
        C.write_provenance(args.provenance, aug.provenance)
    return 0


def cmd_eval_depth(args) -> int:
    pred = F.read_depth_frame(args.pred)
    gt = F.read_depth_frame(args.gt)
    sparse = F.read_depth_frame(args.mask_from)
    mask = C.eval_mask_from_sparse(gt, sparse, literal=args.literal_mask)
    metrics = C.depth_metrics(pred, gt, mask)
    doc = metrics.to_dict()
    doc["masked_l1"] = C.masked_l1(pred, gt, sparse,
                                   literal_mask=args.literal_mask)
    Path(args.report).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"rmse={metrics.rmse:.4f} rel={metrics.rel:.4f} "
          f"delta={metrics.delta * 100:.1f}%")
    return 0


def _pipeline(args):
    return parse_and_validate(getattr(args, "config", None),
                              getattr(args, "set", None) or [],
                              preset=getattr(args, "preset", None)
                              or "cylinder-forest-paper")


def _sequence_bounds(seq, base_dir, pad=0.5):
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for k in range(len(seq.frames)):
        depth, _ = seq.load(k, base_dir)
        pts, _ = F.backproject_frame(seq.intrinsics, depth)
        if pts.size == 0:
            continue
        world = F.transform_points(seq.frames[k].pose, pts)
        lo = np.minimum(lo, world.min(axis=0))
        hi = np.maximum(hi, world.max(axis=0))
        lo = np.minimum(lo, seq.frames[k].pose.translation)
        hi = np.maximum(hi, seq.frames[k].pose.translation)
    if not np.all(np.isfinite(lo)):
        raise ConfigError("sequence contains no valid depth")
    return lo - pad, hi + pad


def _degrade_sequence_frame(expt, depth, gray, k, seed):
    from .complete import AugmentedFrame, PROV_MEASURED
    if expt.mode == S.MODE_GROUND_TRUTH:
        prov = np.where(depth.values > 0, PROV_MEASURED, 0).astype(np.uint8)
        return AugmentedFrame(depth, prov)
    ds = SP.sparsify(depth, gray, expt.sparsify, frame_id=k)
    if expt.mode == S.MODE_SPARSE:
        prov = np.where(ds.values > 0, PROV_MEASURED, 0).astype(np.uint8)
        return AugmentedFrame(ds, prov)
    return C.complete(expt.completer, gray, ds, frame_index=k)


def cmd_build_map(args) -> int:
    cfg = _pipeline(args)
    mode = args.mode
    expt = cfg.experiment_config(mode)
    if args.sequence:
        base = Path(args.sequence).parent
        seq = F.read_manifest(args.sequence)
        lo, hi = _sequence_bounds(seq, base)
        grid = T.TsdfGrid.for_bounds(lo, hi, expt.voxel_size,
                                     expt.integration.delta_trunc)
        for k in range(len(seq.frames)):
            depth, gray = seq.load(k, base)
            frame = _degrade_sequence_frame(expt, depth, gray, k, cfg.seed)
            T.integrate_frame(grid, seq.frames[k].pose, seq.intrinsics,
                              frame, expt.integration)
        n = len(seq.frames)
    else:
        if args.scene:
            scene, _ = W.load_world(args.scene)
        else:
            scene, _ = cfg.build_scene()
        grid = T.TsdfGrid.for_bounds(scene.bmin, scene.bmax, expt.voxel_size,
                                     expt.integration.delta_trunc)
        poses = _scene_poses(scene, args.survey)
        for k, pose in enumerate(poses):
            frame = S.sense_frame(scene, pose, expt, frame_id=k,
                                  noise_seed=cfg.seed)
            T.integrate_frame(grid, pose, expt.intrinsics, frame,
                              expt.integration)
        n = len(poses)
    T.save_tsdf(args.out, grid)
    print(f"integrated {n} frames into {args.out}")
    return 0


def cmd_esdf(args) -> int:
    grid = T.load_tsdf(args.map)
    robot = _parse_xyz(args.robot) if args.robot else None
    out = E.compute_esdf(grid, t=args.t,
                         unknown_is_obstacle=not args.no_unknown_obstacle,
                         robot_pos=robot, unknown_sphere_radius=args.sphere,
                         d_cap=args.cap)
    E.save_esdf(args.out, out)
    print(f"wrote {args.out}")
    return 0


def cmd_eval_map(args) -> int:
    test = T.load_tsdf(args.test)
    gt = T.load_tsdf(args.gt)
    cmp = M.compare_maps(test, gt, t=args.t, strict_fn=args.strict_fn)
    Path(args.report).write_text(json.dumps(cmp.to_dict(), indent=2,
                                            sort_keys=True) + "\n")
    print(f"FP={cmp.false_pos_rate * 100:.1f}% FN={cmp.false_neg_rate * 100:.1f}% "
          f"coverage={cmp.coverage * 100:.1f}% rmse={cmp.rmse_observed * 1000:.0f}mm")
    return 0


def cmd_plan_global(args) -> int:
    esdf = E.load_esdf(args.map)
    path = P.rrt_star(esdf, _parse_xyz(args.start), _parse_xyz(args.goal),
                      radius=args.R, budget=args.budget, seed=args.seed)
    doc = {"start": _parse_xyz(args.start).tolist(),
           "goal": _parse_xyz(args.goal).tolist(),
           "radius": args.R, "budget": args.budget, "seed": args.seed,
           "length": float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum()),
           "waypoints": path.tolist()}
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"path with {len(path)} waypoints, length {doc['length']:.2f} m")
    return 0


def cmd_simulate(args) -> int:
    cfg = _pipeline(args)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.echo(out)
    scene, wps = cfg.build_scene()
    W.save_world(out / "scene.json", scene, wps)
    modes = args.modes.split(",") if args.modes else cfg.modes
    reports = []
    map_dir = (out / "maps") if args.save_maps else None
    for mode in modes:
        expt = cfg.experiment_config(mode)
        rep = S.run_matrix(scene, wps, expt, ordered=cfg.ordered_pairs,
                           map_dir=map_dir)
        reports.append(rep)
        print(f"{mode}: {rep.n_success}/{rep.n_runs} successful "
              f"({rep.success_rate * 100:.0f}%)")
    S.emit_report(reports, out, scene)
    stats = S.common_success_stats({r.mode: r for r in reports})
    for mode, agg in stats.get("per_mode", {}).items():
        print(f"  common-successful {mode}: mean length "
              f"{agg['path_length']:.2f} m, mean time {agg['sim_time']:.1f} s")
    return 0


def cmd_report(args) -> int:
    doc = json.loads(Path(args.report).read_text())
    reports = [S.Report.from_dict(r) for r in doc["reports"]]
    scene = None
    if args.scene:
        scene, _ = W.load_world(args.scene)
    S.emit_report(reports, args.out, scene)
    print(f"re-emitted {sum(r.n_runs for r in reports)} runs into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="depthplan",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a procedural scene")
    p.add_argument("--preset", default="cylinder-forest",
                   choices=["cylinder-forest", "four-rooms"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("render", help="render survey frames from a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--survey", type=int, default=20,
                   help="frames per survey loop")
    p.add_argument("--width", type=int, default=0)
    p.add_argument("--height", type=int, default=0)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("sparsify", help="degrade a depth frame")
    p.add_argument("depth")
    p.add_argument("gray")
    p.add_argument("out")
    p.add_argument("--p", type=float, default=0.25)
    p.add_argument("--rmax", type=float, default=5.0)
    p.add_argument("--blur", type=float, default=1.0)
    p.add_argument("--dilate", action="store_true")
    p.add_argument("--noise", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("complete", help="fill a sparse depth frame")
    p.add_argument("sparse")
    p.add_argument("gray")
    p.add_argument("out")
    p.add_argument("--completer", default="idw:k=4,pow=2")
    p.add_argument("--provenance")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("eval-depth", help="depth metrics against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--mask-from", required=True,
                   help="sparse frame defining the evaluation mask")
    p.add_argument("--literal-mask", action="store_true")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval_depth)

    p = sub.add_parser("build-map", help="fuse a scene survey or a frame "
                                         "sequence into a TSDF")
    p.add_argument("--scene")
    p.add_argument("--sequence", help="manifest.json of rendered/ingested frames")
    p.add_argument("--mode", default="ground_truth", choices=list(S.MODES))
    p.add_argument("--survey", type=int, default=20)
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--set", action="append")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("esdf", help="distance field from a TSDF")
    p.add_argument("map")
    p.add_argument("--t", type=float, default=0.2)
    p.add_argument("--robot")
    p.add_argument("--sphere", type=float, default=3.0)
    p.add_argument("--no-unknown-obstacle", action="store_true")
    p.add_argument("--cap", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_esdf)

    p = sub.add_parser("eval-map", help="compare a TSDF against ground truth")
    p.add_argument("test")
    p.add_argument("gt")
    p.add_argument("--t", type=float, default=0.2)
    p.add_argument("--strict-fn", action="store_true")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval_map)

    p = sub.add_parser("plan-global", help="RRT* on a serialized ESDF")
    p.add_argument("map")
    p.add_argument("--start", required=True)
    p.add_argument("--goal", required=True)
    p.add_argument("--R", type=float, default=0.25)
    p.add_argument("--budget", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan_global)

    p = sub.add_parser("simulate", help="run the experiment matrix")
    p.add_argument("--config")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--set", action="append",
                   help="override a config key, e.g. sparsify.p=0.3")
    p.add_argument("--modes", help="comma-separated subset of modes")
    p.add_argument("--out")
    p.add_argument("--save-maps", action="store_true",
                   help="write each run's final TSDF under <out>/maps/")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="re-emit CSV/SVG from a report.json")
    p.add_argument("report")
    p.add_argument("--scene")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
