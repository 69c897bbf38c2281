"""Writers for the depthplan on-disk frame formats.

Implemented against the published byte layout so this package stays
decoupled from the consumer:

  DFRM: magic "DFRM", u8 version=1, u16 width, u16 height, u32 scale
        (units per meter), then width*height u16 little-endian samples,
        row-major, 0 = invalid.
  GFRM: magic "GFRM", u8 version=1, u16 width, u16 height, then
        width*height u8 samples mapping 0..255 linearly onto [0, 1].

The sequence manifest is a JSON document carrying intrinsics, and per
frame a timestamp, a pose {t: [x,y,z], q: [w,x,y,z]} and relative file
paths.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

DEPTH_HEADER = struct.Struct("<4sBHHI")
GRAY_HEADER = struct.Struct("<4sBHH")
MAX_SAMPLE = 0xFFFF


def write_depth(path, depth_m: np.ndarray, scale: int = 1000) -> int:
    """Quantize a float depth image (meters, 0 invalid) into a DFRM file.

    Values that would exceed the 16-bit payload are invalidated; returns
    the number of such clipped pixels.
    """
    q = np.round(np.asarray(depth_m, dtype=float) * scale)
    clipped = int((q > MAX_SAMPLE).sum())
    q = np.where(q > MAX_SAMPLE, 0, q)
    h, w = q.shape
    header = DEPTH_HEADER.pack(b"DFRM", 1, w, h, scale)
    Path(path).write_bytes(header + q.astype("<u2").tobytes())
    return clipped


def write_gray(path, gray01: np.ndarray) -> None:
    g = np.clip(np.asarray(gray01, dtype=float), 0.0, 1.0)
    h, w = g.shape
    header = GRAY_HEADER.pack(b"GFRM", 1, w, h)
    Path(path).write_bytes(header + np.round(g * 255).astype("<u1").tobytes())


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma scaled to [0, 1]; accepts gray, RGB or RGBA images."""
    arr = np.asarray(rgb, dtype=float)
    if arr.max() > 1.0:
        arr = arr / 255.0
    if arr.ndim == 2:
        return arr
    return (0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2])


def write_manifest(path, intrinsics: dict, frames: list, extra: dict) -> None:
    doc = {"intrinsics": intrinsics, "frames": frames, "ingest": extra}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
