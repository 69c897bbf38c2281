"""Sensor degradation: range cutoff, gradient-ranked retention, optional
3x3 dilation of the kept set, and range-dependent Gaussian noise.

Retention keeps the pixels whose Gaussian-blurred gray image has the
largest gradient magnitude, mimicking where stereo matchers find support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .frames import DepthFrame, GrayFrame, _check_same_shape

NOISE_FLOOR = 0.001  # meters; keeps perturbed pixels away from the invalid 0


@dataclass(frozen=True)
class SparsifyConfig:
    p: float = 0.25
    r_max: float = 5.0
    blur_sigma: float = 1.0
    dilate: bool = False
    noise: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.p <= 1):
            raise ValueError("retained fraction p must lie in (0, 1]")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        if self.blur_sigma < 0:
            raise ValueError("blur_sigma must be non-negative")


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gradient_magnitude(gray: GrayFrame, blur_sigma: float = 1.0) -> np.ndarray:
    """Per-pixel edge strength: Gaussian blur, then central-difference gradient.

    The blur border is replicated; border gradients use one-sided differences.
    """
    img = gray.values
    if blur_sigma > 0:
        k = _gaussian_kernel(blur_sigma)
        img = ndimage.correlate1d(img, k, axis=0, mode="nearest")
        img = ndimage.correlate1d(img, k, axis=1, mode="nearest")
    gy, gx = np.gradient(img)
    return np.hypot(gx, gy)


def noise_sigma(z) -> np.ndarray:
    """Range-dependent noise std in meters."""
    z = np.asarray(z, dtype=float)
    return 0.0012 + 0.0019 * (z - 0.4) ** 2


def apply_noise(depth: DepthFrame, seed: int, frame_id: int = 0) -> DepthFrame:
    """Perturb every valid pixel with zero-mean Gaussian noise of std
    noise_sigma(z), clamped above the invalid sentinel.

    The stream is counter-based (Philox keyed on seed and frame id), so the
    same (seed, frame_id) always yields the same frame.
    """
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(frame_id & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    draws = rng.standard_normal(depth.values.shape)
    valid = depth.values > 0
    noisy = depth.values + draws * noise_sigma(depth.values)
    noisy = np.maximum(noisy, NOISE_FLOOR)
    return DepthFrame(np.where(valid, noisy, 0.0))


def sparsify(depth_gt: DepthFrame, gray: GrayFrame, cfg: SparsifyConfig,
             frame_id: int = 0) -> DepthFrame:
    """Degrade a ground-truth depth frame into sparse sensor output.

    Steps: (1) invalidate out-of-range pixels, (2) keep exactly
    floor(p * count) in-range pixels with the largest gradient magnitude
    (ties to the smaller row-major index), (3) optionally reinstate
    invalidated in-range pixels 8-adjacent to a kept pixel, (4) optionally
    add range noise. Kept pixels carry their exact input depth.
    """
    _check_same_shape(depth_gt, gray)
    v = depth_gt.values
    in_range = (v > 0) & (v <= cfg.r_max)
    k = int(math.floor(cfg.p * int(in_range.sum())))
    grad = gradient_magnitude(gray, cfg.blur_sigma).ravel()
    cand = np.flatnonzero(in_range.ravel())
    # sort by descending gradient, then ascending row-major index
    order = np.lexsort((cand, -grad[cand]))
    kept_flat = cand[order[:k]]
    kept = np.zeros(v.size, dtype=bool)
    kept[kept_flat] = True
    kept = kept.reshape(v.shape)
    if cfg.dilate:
        grown = ndimage.binary_dilation(kept, structure=np.ones((3, 3), bool))
        kept = grown & in_range
    out = np.where(kept, v, 0.0)
    frame = DepthFrame(out)
    if cfg.noise:
        frame = apply_noise(frame, cfg.seed, frame_id)
    return frame
