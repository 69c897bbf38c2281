"""Voxel-level map quality: false positives, false negatives, coverage and
observed RMSE of a test TSDF against a ground-truth TSDF.

A false positive is a ground-truth-free voxel the test map calls occupied
or unobserved; a false negative is a ground-truth-occupied voxel the test
map calls free. Ground-truth-occupied voxels the test map never observed
are neither (the conservative planner treats them as obstacles anyway).
Voxels unobserved in ground truth carry no label and are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tsdf import (TsdfGrid, VOXEL_FREE, VOXEL_OCCUPIED, VOXEL_UNOBSERVED,
                   classify_grid)


class AlignmentError(ValueError):
    """The two grids do not share origin, voxel size and dims."""


@dataclass(frozen=True)
class MapComparison:
    false_pos_rate: float
    false_neg_rate: float
    coverage: float
    rmse_observed: float
    free_gt: int
    occ_gt: int
    observed_gt: int
    observed_both: int

    def to_dict(self) -> dict:
        return {
            "false_pos_rate": self.false_pos_rate,
            "false_neg_rate": self.false_neg_rate,
            "coverage": self.coverage,
            "rmse_observed": self.rmse_observed,
            "counts": {"free_gt": self.free_gt, "occ_gt": self.occ_gt,
                       "observed_gt": self.observed_gt,
                       "observed_both": self.observed_both},
        }


def compare_maps(test: TsdfGrid, gt: TsdfGrid, t: float,
                 strict_fn: bool = False) -> MapComparison:
    """Classify both grids at threshold `t` and compare voxel labels.

    `strict_fn` additionally counts gt-occupied voxels the test map left
    unobserved as false negatives (the reading the conservative planner
    does not care about; off by default).

    RMSE compares stored distances over voxels observed in both maps whose
    true-map distance lies strictly inside the truncation band (clamped
    voxels carry no geometry).
    """
    if not test.aligned_with(gt):
        raise AlignmentError("grids are not aligned")
    tc = classify_grid(test, t)
    gc = classify_grid(gt, t)
    gt_free = gc == VOXEL_FREE
    gt_occ = gc == VOXEL_OCCUPIED
    gt_obs = gc != VOXEL_UNOBSERVED
    test_obs = tc != VOXEL_UNOBSERVED

    n_free = int(gt_free.sum())
    n_occ = int(gt_occ.sum())
    n_obs = int(gt_obs.sum())
    n_both = int((gt_obs & test_obs).sum())

    fp = int((gt_free & (tc != VOXEL_FREE)).sum())
    if strict_fn:
        fn = int((gt_occ & (tc != VOXEL_OCCUPIED)).sum())
    else:
        fn = int((gt_occ & (tc == VOXEL_FREE)).sum())

    band = min(test.delta_trunc, gt.delta_trunc)
    common = (gt_obs & test_obs
              & (np.abs(gt.distance) < band - 1e-9)
              & (np.abs(test.distance) < band - 1e-9))
    if common.any():
        err = test.distance[common] - gt.distance[common]
        rmse = float(np.sqrt(np.mean(err ** 2)))
    else:
        rmse = 0.0

    return MapComparison(
        false_pos_rate=fp / n_free if n_free else 0.0,
        false_neg_rate=fn / n_occ if n_occ else 0.0,
        coverage=n_both / n_obs if n_obs else 0.0,
        rmse_observed=rmse,
        free_gt=n_free, occ_gt=n_occ, observed_gt=n_obs, observed_both=n_both,
    )
