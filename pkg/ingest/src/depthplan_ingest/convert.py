"""Dataset conversion jobs: NYU-Depth-v2 archives, SceneNet render dumps and
plain image folders, all emitted as DFRM/GFRM frames plus one sequence
manifest per trajectory.

Conversion is deterministic and idempotent: frame files are named by index
and re-running a job reproduces every byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .formats import luminance, write_depth, write_gray, write_manifest

KINDS = ("nyu", "scenenet", "image-folder")

IDENTITY_POSE = {"t": [0.0, 0.0, 0.0], "q": [1.0, 0.0, 0.0, 0.0]}


class UnrecognizedLayoutError(ValueError):
    """The input path does not match the expected dataset layout."""


@dataclass(frozen=True)
class ConversionJob:
    kind: str
    input_path: str
    output_dir: str
    scale: int = 1000  # DFRM units per meter
    stride: int = 1
    depth_source: str = "depths"  # nyu: "depths" (inpainted) or "rawDepths"
    depth_divisor: float = 1000.0  # PNG units per meter in the source
    fps: float = 1.0
    fx: float | None = None
    fy: float | None = None
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.scale <= 0 or self.depth_divisor <= 0:
            raise ValueError("scales must be positive")
        if self.depth_source not in ("depths", "rawDepths"):
            raise ValueError("depth_source must be 'depths' or 'rawDepths'")

    def intrinsics_for(self, width: int, height: int) -> dict:
        # default approximates a Kinect-class field of view
        fx = self.fx if self.fx is not None else 0.9 * width
        fy = self.fy if self.fy is not None else fx
        cx = self.cx if self.cx is not None else (width - 1) / 2
        cy = self.cy if self.cy is not None else (height - 1) / 2
        return {"fx": fx, "fy": fy, "cx": cx, "cy": cy,
                "width": width, "height": height}


def _load_image(path) -> np.ndarray | None:
    try:
        with Image.open(path) as img:
            return np.array(img)
    except Exception:
        return None


def _depth_from_png(arr: np.ndarray, divisor: float) -> np.ndarray:
    return arr.astype(float) / divisor


def _emit_sequence(out_dir: Path, job: ConversionJob, frames) -> dict:
    """Write one sequence. `frames` yields (depth_m, gray01) or None for a
    corrupt source frame."""
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    skipped_empty = skipped_corrupt = clipped = written = 0
    resolution = None
    for item in frames:
        if item is None:
            skipped_corrupt += 1
            continue
        depth_m, gray01 = item
        if not np.any(depth_m > 0):
            skipped_empty += 1
            continue
        k = written
        dname, gname = f"frame_{k:06d}.dfrm", f"frame_{k:06d}.gfrm"
        clipped += write_depth(out_dir / dname, depth_m, job.scale)
        write_gray(out_dir / gname, gray01)
        entries.append({"timestamp": k / job.fps, "pose": dict(IDENTITY_POSE),
                        "depth_file": dname, "gray_file": gname})
        resolution = (depth_m.shape[1], depth_m.shape[0])
        written += 1
    stats = {"kind": job.kind, "depth_source": job.depth_source,
             "stride": job.stride, "frames_written": written,
             "skipped_empty": skipped_empty,
             "skipped_corrupt": skipped_corrupt,
             "clipped_pixels": clipped}
    if written:
        intr = job.intrinsics_for(*resolution)
        write_manifest(out_dir / "manifest.json", intr, entries, stats)
    return stats


def _convert_image_folder(job: ConversionJob) -> list:
    root = Path(job.input_path)
    depth_files = sorted(root.glob("*.depth.png"))
    if not depth_files:
        raise UnrecognizedLayoutError(
            f"{root} contains no *.depth.png files")

    def frames():
        for dpath in depth_files[::job.stride]:
            stem = dpath.name[:-len(".depth.png")]
            cpath = None
            for suffix in (".color.png", ".color.jpg"):
                cand = root / (stem + suffix)
                if cand.exists():
                    cpath = cand
                    break
            depth_png = _load_image(dpath)
            color = _load_image(cpath) if cpath else None
            if depth_png is None or color is None:
                yield None
                continue
            depth_m = _depth_from_png(depth_png, job.depth_divisor)
            yield depth_m, luminance(color)

    return [_emit_sequence(Path(job.output_dir), job, frames())]


def _convert_scenenet(job: ConversionJob) -> list:
    root = Path(job.input_path)
    trajectories = sorted(d for d in root.iterdir()
                          if d.is_dir() and (d / "depth").is_dir()
                          and (d / "photo").is_dir())
    if not trajectories:
        raise UnrecognizedLayoutError(
            f"{root} holds no trajectory dirs with photo/ and depth/")
    stats = []
    for traj in trajectories:
        depth_files = sorted((traj / "depth").glob("*.png"))

        def frames(depth_files=depth_files, traj=traj):
            for dpath in depth_files[::job.stride]:
                stem = dpath.stem
                cpath = None
                for suffix in (".jpg", ".png"):
                    cand = traj / "photo" / (stem + suffix)
                    if cand.exists():
                        cpath = cand
                        break
                depth_png = _load_image(dpath)
                color = _load_image(cpath) if cpath else None
                if depth_png is None or color is None:
                    yield None
                    continue
                yield (_depth_from_png(depth_png, job.depth_divisor),
                       luminance(color))

        stats.append(_emit_sequence(Path(job.output_dir) / traj.name, job,
                                    frames()))
    return stats


def _convert_nyu(job: ConversionJob) -> list:
    import h5py

    path = Path(job.input_path)
    if not path.is_file():
        raise UnrecognizedLayoutError(f"{path} is not a .mat file")
    with h5py.File(path, "r") as mat:
        if "images" not in mat or job.depth_source not in mat:
            raise UnrecognizedLayoutError(
                f"{path} lacks 'images'/'{job.depth_source}' datasets")
        images = mat["images"]  # (N, 3, W, H) in MATLAB order
        depths = mat[job.depth_source]  # (N, W, H), meters

        def frames():
            for k in range(0, images.shape[0], job.stride):
                rgb = np.transpose(images[k], (2, 1, 0))  # -> (H, W, 3)
                depth_m = np.transpose(depths[k], (1, 0))
                yield depth_m, luminance(rgb)

        return [_emit_sequence(Path(job.output_dir), job, frames())]


def convert(job: ConversionJob) -> list:
    """Run a conversion job; returns per-sequence statistics dicts."""
    if job.kind == "image-folder":
        return _convert_image_folder(job)
    if job.kind == "scenenet":
        return _convert_scenenet(job)
    return _convert_nyu(job)
