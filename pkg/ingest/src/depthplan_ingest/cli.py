"""CLI: convert a dataset into DFRM/GFRM frames plus manifests."""

from __future__ import annotations

import argparse
import sys

from .convert import KINDS, ConversionJob, UnrecognizedLayoutError, convert


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ingest", description=__doc__)
    ap.add_argument("--kind", required=True, choices=KINDS)
    ap.add_argument("--in", dest="input_path", required=True)
    ap.add_argument("--out", dest="output_dir", required=True)
    ap.add_argument("--scale", type=int, default=1000,
                    help="output units per meter")
    ap.add_argument("--stride", type=int, default=1)
    ap.add_argument("--depth-source", default="depths",
                    choices=["depths", "rawDepths"],
                    help="NYU stream: inpainted or raw")
    ap.add_argument("--depth-divisor", type=float, default=1000.0,
                    help="source PNG units per meter")
    ap.add_argument("--fps", type=float, default=1.0)
    ap.add_argument("--fx", type=float)
    ap.add_argument("--fy", type=float)
    ap.add_argument("--cx", type=float)
    ap.add_argument("--cy", type=float)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    job = ConversionJob(kind=args.kind, input_path=args.input_path,
                        output_dir=args.output_dir, scale=args.scale,
                        stride=args.stride, depth_source=args.depth_source,
                        depth_divisor=args.depth_divisor, fps=args.fps,
                        fx=args.fx, fy=args.fy, cx=args.cx, cy=args.cy)
    try:
        stats = convert(job)
    except (UnrecognizedLayoutError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    total = sum(s["frames_written"] for s in stats)
    skipped = sum(s["skipped_empty"] + s["skipped_corrupt"] for s in stats)
    print(f"wrote {total} frames over {len(stats)} sequence(s), "
          f"skipped {skipped}")
    return 0


def entrypoint() -> None:
    sys.exit(main())
