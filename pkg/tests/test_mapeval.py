import numpy as np
import pytest

from depthplan import mapeval as M
from depthplan import tsdf as T


def make_grid(distance, weight, v=0.1, delta=0.4):
    d = np.asarray(distance, dtype=float)
    g = T.TsdfGrid((0, 0, 0), v, d.shape, delta_trunc=delta)
    g.distance = d
    g.weight = np.asarray(weight, dtype=float)
    return g


class TestCompareMaps:
    def test_identical_grids(self):
        rng = np.random.default_rng(0)
        d = rng.uniform(-0.4, 0.4, size=(6, 6, 6))
        w = (rng.random((6, 6, 6)) < 0.8).astype(float)
        g = make_grid(d, w)
        cmp = M.compare_maps(g, g, t=0.2)
        assert cmp.false_pos_rate == 0.0
        assert cmp.false_neg_rate == 0.0
        assert cmp.coverage == 1.0
        assert cmp.rmse_observed == 0.0

    def test_two_voxel_hand_example(self):
        # gt: voxel A free, voxel B occupied; test: A unobserved, B free
        gt = make_grid([[[0.3]], [[0.1]]], [[[1.0]], [[1.0]]])
        test = make_grid([[[0.0]], [[0.3]]], [[[0.0]], [[1.0]]])
        cmp = M.compare_maps(test, gt, t=0.2)
        assert cmp.false_pos_rate == 1.0
        assert cmp.false_neg_rate == 1.0
        assert cmp.coverage == 0.5

    def test_unobserved_test_not_false_negative(self):
        gt = make_grid([[[0.1]]], [[[1.0]]])  # occupied
        test = make_grid([[[0.0]]], [[[0.0]]])  # unobserved
        cmp = M.compare_maps(test, gt, t=0.2)
        assert cmp.false_neg_rate == 0.0
        strict = M.compare_maps(test, gt, t=0.2, strict_fn=True)
        assert strict.false_neg_rate == 1.0

    def test_gt_unobserved_excluded(self):
        gt = make_grid([[[0.3], [0.0]]], [[[1.0], [0.0]]])
        test = make_grid([[[0.3], [0.3]]], [[[1.0], [1.0]]])
        cmp = M.compare_maps(test, gt, t=0.2)
        assert cmp.free_gt == 1 and cmp.observed_gt == 1
        assert cmp.coverage == 1.0 and cmp.false_pos_rate == 0.0

    def test_rates_are_exact_counts(self):
        rng = np.random.default_rng(3)
        d_gt = rng.uniform(-0.39, 0.39, size=(8, 8, 8))
        w_gt = (rng.random((8, 8, 8)) < 0.9).astype(float)
        d_t = rng.uniform(-0.39, 0.39, size=(8, 8, 8))
        w_t = (rng.random((8, 8, 8)) < 0.7).astype(float)
        gt = make_grid(d_gt, w_gt)
        test = make_grid(d_t, w_t)
        cmp = M.compare_maps(test, gt, t=0.2)
        # brute force recount
        fp = fn = nfree = nocc = nobs = nboth = 0
        for i in range(8):
            for j in range(8):
                for k in range(8):
                    gcls = T.classify_voxel(d_gt[i, j, k], w_gt[i, j, k], 0.2)
                    tcls = T.classify_voxel(d_t[i, j, k], w_t[i, j, k], 0.2)
                    if gcls != T.VOXEL_UNOBSERVED:
                        nobs += 1
                        if tcls != T.VOXEL_UNOBSERVED:
                            nboth += 1
                    if gcls == T.VOXEL_FREE:
                        nfree += 1
                        if tcls != T.VOXEL_FREE:
                            fp += 1
                    if gcls == T.VOXEL_OCCUPIED:
                        nocc += 1
                        if tcls == T.VOXEL_FREE:
                            fn += 1
        assert cmp.false_pos_rate == fp / nfree
        assert cmp.false_neg_rate == fn / nocc
        assert cmp.coverage == nboth / nobs
        assert (cmp.free_gt, cmp.occ_gt) == (nfree, nocc)

    def test_self_coverage(self):
        rng = np.random.default_rng(5)
        d = rng.uniform(-0.3, 0.3, size=(5, 5, 5))
        w = np.ones((5, 5, 5))
        g = make_grid(d, w)
        assert M.compare_maps(g, g, t=0.2).coverage == 1.0

    def test_alignment_mismatch(self):
        a = make_grid(np.zeros((2, 2, 2)), np.ones((2, 2, 2)))
        b = make_grid(np.zeros((2, 2, 3)), np.ones((2, 2, 3)))
        with pytest.raises(M.AlignmentError):
            M.compare_maps(a, b, t=0.2)

    def test_rmse_on_common_band(self):
        gt = make_grid([[[0.1, 0.2]]], [[[1.0, 1.0]]])
        test = make_grid([[[0.15, 0.1]]], [[[1.0, 1.0]]])
        cmp = M.compare_maps(test, gt, t=0.2)
        expect = np.sqrt((0.05**2 + 0.1**2) / 2)
        assert cmp.rmse_observed == pytest.approx(expect, abs=1e-12)
