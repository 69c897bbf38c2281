"""Depth completion: geometric baseline completers, ingestion of externally
predicted frames, the measured-overrides-predicted merge rule with per-pixel
provenance, the masked L1 loss and the depth metrics.

Measured (valid sparse) pixels always pass through unchanged; completers
only ever fill the invalid ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .frames import (DepthFrame, FrameFormatError, GrayFrame,
                     ResolutionMismatchError, _check_same_shape,
                     read_depth_frame)

PROV_INVALID = 0
PROV_MEASURED = 1
PROV_PREDICTED = 2

PROVENANCE_MAGIC = b"PMSK"

COMPLETER_KINDS = ("passthrough", "nearest_valid", "idw", "external_file")


class EmptyMaskError(ValueError):
    """An evaluation mask selects no pixels."""


class NoSupportError(ValueError):
    """A completer that needs valid pixels received a frame with none."""


@dataclass(frozen=True)
class CompleterSpec:
    kind: str = "idw"
    k: int = 4
    power: float = 2.0
    path_pattern: str = ""

    def __post_init__(self):
        if self.kind not in COMPLETER_KINDS:
            raise ValueError(f"unknown completer kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.power <= 0:
            raise ValueError("power must be positive")
        if self.kind == "external_file" and not self.path_pattern:
            raise ValueError("external_file completer needs a path pattern")

    @staticmethod
    def parse(text: str) -> "CompleterSpec":
        """Parse CLI syntax like "idw:k=4,pow=2" or "external_file:pred.dfrm"."""
        kind, _, rest = text.partition(":")
        kwargs = {}
        if kind == "external_file":
            kwargs["path_pattern"] = rest
        elif rest:
            for item in rest.split(","):
                key, _, val = item.partition("=")
                if key == "k":
                    kwargs["k"] = int(val)
                elif key in ("pow", "power"):
                    kwargs["power"] = float(val)
                else:
                    raise ValueError(f"unknown completer parameter {key!r}")
        return CompleterSpec(kind=kind, **kwargs)


@dataclass(frozen=True)
class AugmentedFrame:
    """Dense (or passthrough) depth plus per-pixel provenance labels."""

    depth: DepthFrame
    provenance: np.ndarray

    def __post_init__(self):
        prov = np.asarray(self.provenance, dtype=np.uint8)
        if prov.shape != self.depth.values.shape:
            raise ResolutionMismatchError("provenance shape differs from depth")
        object.__setattr__(self, "provenance", prov)

    def measured(self) -> np.ndarray:
        return self.provenance == PROV_MEASURED

    def predicted(self) -> np.ndarray:
        return self.provenance == PROV_PREDICTED


@dataclass(frozen=True)
class DepthMetrics:
    rmse: float
    rel: float
    delta: float
    pixel_count: int
    rel_excluded: int = 0

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "rel": self.rel, "delta": self.delta,
                "pixel_count": self.pixel_count, "rel_excluded": self.rel_excluded}


def _support_tree(valid_flat: np.ndarray, width: int, total: int):
    """KD-tree over valid pixel coordinates with a tiny third coordinate that
    breaks exact distance ties toward the smaller row-major index.

    Squared pixel distances are integers, so any perturbation below 1 keeps
    the true distance ordering while making ties strict.
    """
    ii = valid_flat // width
    jj = valid_flat % width
    rank = valid_flat / total
    pts = np.column_stack([ii.astype(float), jj.astype(float), 0.5 * rank])
    return cKDTree(pts), ii, jj


def complete(spec: CompleterSpec, gray: GrayFrame, sparse: DepthFrame,
             frame_index: int = 0) -> AugmentedFrame:
    """Fill invalid pixels of `sparse` per the completer, then re-apply the
    merge rule: measured pixels always win."""
    _check_same_shape(gray, sparse)
    v = sparse.values
    valid = v > 0
    out = v.copy()
    prov = np.where(valid, PROV_MEASURED, PROV_INVALID).astype(np.uint8)
    holes = ~valid
    if not holes.any():
        return AugmentedFrame(DepthFrame(out), prov)

    if spec.kind == "passthrough":
        pass
    elif spec.kind in ("nearest_valid", "idw"):
        valid_flat = np.flatnonzero(valid.ravel())
        if valid_flat.size == 0:
            raise NoSupportError("completer needs at least one valid pixel")
        tree, vi, vj = _support_tree(valid_flat, sparse.width, v.size)
        hole_flat = np.flatnonzero(holes.ravel())
        hi = (hole_flat // sparse.width).astype(float)
        hj = (hole_flat % sparse.width).astype(float)
        queries = np.column_stack([hi, hj, np.zeros(hole_flat.size)])
        zvals = v.ravel()[valid_flat]
        if spec.kind == "nearest_valid":
            _, nearest = tree.query(queries, k=1)
            out.ravel()[hole_flat] = zvals[nearest]
        else:
            k = min(spec.k, valid_flat.size)
            _, nearest = tree.query(queries, k=k)
            if k == 1:
                nearest = nearest[:, None]
            d2 = (hi[:, None] - vi[nearest]) ** 2 + (hj[:, None] - vj[nearest]) ** 2
            w = d2 ** (-spec.power / 2.0)
            out.ravel()[hole_flat] = (w * zvals[nearest]).sum(axis=1) / w.sum(axis=1)
        prov[holes] = PROV_PREDICTED
    elif spec.kind == "external_file":
        path = spec.path_pattern
        if "{" in path:
            path = path.format(frame_index)
        if not Path(path).exists():
            raise FileNotFoundError(f"prediction frame {path} not found")
        pred = read_depth_frame(path)
        _check_same_shape(pred, sparse)
        fill = holes & (pred.values > 0)
        out[fill] = pred.values[fill]
        prov[fill] = PROV_PREDICTED
    return AugmentedFrame(DepthFrame(out), prov)


def write_provenance(path, provenance: np.ndarray) -> None:
    Path(path).write_bytes(PROVENANCE_MAGIC
                           + np.asarray(provenance, dtype="<u1").tobytes())


def read_provenance(path, width: int, height: int) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != PROVENANCE_MAGIC:
        raise FrameFormatError(f"bad provenance magic {data[:4]!r}")
    payload = np.frombuffer(data, dtype="<u1", offset=4)
    if payload.size != width * height:
        raise FrameFormatError("provenance payload size mismatch")
    return payload.reshape(height, width).copy()


def eval_mask_from_sparse(gt: DepthFrame, sparse: DepthFrame,
                          literal: bool = False) -> np.ndarray:
    """Evaluation mask: pixels the completer had to predict.

    Default: invalid in sparse AND valid in ground truth. `literal` selects
    the valid-in-sparse pixels instead (audit mode; those pixels are
    overwritten by the merge rule, so errors there are always zero).
    """
    _check_same_shape(gt, sparse)
    if literal:
        return sparse.values > 0
    return (sparse.values == 0) & (gt.values > 0)


def masked_l1(pred: DepthFrame, gt: DepthFrame, sparse: DepthFrame,
              literal_mask: bool = False) -> float:
    """Mean absolute depth error over the evaluation mask."""
    _check_same_shape(pred, gt, sparse)
    mask = eval_mask_from_sparse(gt, sparse, literal=literal_mask)
    if not mask.any():
        raise EmptyMaskError("evaluation mask selects no pixels")
    return float(np.abs(pred.values[mask] - gt.values[mask]).mean())


def depth_metrics(pred: DepthFrame, gt: DepthFrame,
                  eval_mask: np.ndarray) -> DepthMetrics:
    """RMSE, mean absolute relative error, and the fraction of pixels within
    +-25% of ground truth, over the mask."""
    _check_same_shape(pred, gt)
    mask = np.asarray(eval_mask, dtype=bool)
    if mask.shape != gt.values.shape:
        raise ResolutionMismatchError("mask shape differs from frames")
    n = int(mask.sum())
    if n == 0:
        raise EmptyMaskError("evaluation mask selects no pixels")
    p = pred.values[mask]
    g = gt.values[mask]
    rmse = float(np.sqrt(np.mean((p - g) ** 2)))
    nonzero = g > 0
    excluded = int((~nonzero).sum())
    if nonzero.any():
        rel = float(np.mean(np.abs(p[nonzero] - g[nonzero]) / g[nonzero]))
        within = (p[nonzero] >= 0.75 * g[nonzero]) & (p[nonzero] <= 1.25 * g[nonzero])
        delta = float(within.mean())
    else:
        rel = 0.0
        delta = 0.0
    return DepthMetrics(rmse=rmse, rel=rel, delta=delta, pixel_count=n,
                        rel_excluded=excluded)
