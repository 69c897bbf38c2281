import numpy as np
import pytest

from depthplan import sparsify as S
from depthplan.frames import DepthFrame, GrayFrame, ResolutionMismatchError


def brute_force_keep(depth, grad, p, r_max):
    """Oracle: exhaustive sort of in-range pixels by (-gradient, index)."""
    v = depth.ravel()
    g = grad.ravel()
    in_range = np.flatnonzero((v > 0) & (v <= r_max))
    k = int(np.floor(p * in_range.size))
    ranked = sorted(in_range, key=lambda i: (-g[i], i))
    return set(ranked[:k])


class TestGradientMagnitude:
    def test_constant_frame_zero(self):
        g = S.gradient_magnitude(GrayFrame(np.full((9, 7), 0.4)), 1.0)
        assert np.allclose(g, 0.0)

    def test_step_edge_unblurred(self):
        img = np.zeros((6, 10))
        img[:, 5:] = 1.0
        g = S.gradient_magnitude(GrayFrame(img), 0.0)
        # central differences peak on the two columns straddling the step
        assert np.allclose(g[:, 4], 0.5) and np.allclose(g[:, 5], 0.5)
        assert np.allclose(g[:, :3], 0.0) and np.allclose(g[:, 7:], 0.0)

    def test_kernel_mass_preserved(self):
        img = np.zeros((21, 21))
        img[10, 10] = 1.0
        k = S._gaussian_kernel(1.3)
        from scipy import ndimage
        blurred = ndimage.correlate1d(
            ndimage.correlate1d(img, k, axis=0, mode="nearest"),
            k, axis=1, mode="nearest")
        assert abs(blurred.sum() - 1.0) < 1e-6


class TestSparsify:
    def test_keep_everything(self):
        rng = np.random.default_rng(0)
        v = rng.uniform(0.5, 4.0, size=(12, 9))
        v[rng.random(v.shape) < 0.2] = 0.0
        gray = GrayFrame(rng.random(v.shape))
        cfg = S.SparsifyConfig(p=1.0, r_max=1e9, dilate=False)
        out = S.sparsify(DepthFrame(v), gray, cfg)
        assert np.array_equal(out.values, v)

    def test_range_cutoff_all_invalid(self):
        v = np.full((8, 8), 6.0)
        out = S.sparsify(DepthFrame(v), GrayFrame(np.zeros((8, 8))),
                         S.SparsifyConfig(p=1.0, r_max=5.0))
        assert not np.any(out.values > 0)

    def test_3x3_top2_survive(self):
        v = np.full((3, 3), 1.0)
        gray = GrayFrame(np.array([[0.0, 0.1, 0.2],
                                   [0.9, 0.3, 0.6],
                                   [0.05, 0.5, 0.4]]))
        cfg = S.SparsifyConfig(p=2 / 9, r_max=10.0, blur_sigma=0.0)
        out = S.sparsify(DepthFrame(v), gray, cfg)
        grad = S.gradient_magnitude(gray, 0.0)
        expect = brute_force_keep(v, grad, 2 / 9, 10.0)
        got = set(np.flatnonzero(out.values.ravel() > 0))
        assert got == expect and len(got) == 2

    def test_matches_oracle_on_random_frames(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            h, w = rng.integers(4, 32, size=2)
            v = rng.uniform(0, 8, size=(h, w))
            v[rng.random((h, w)) < 0.2] = 0.0
            gray = GrayFrame(rng.random((h, w)))
            p = float(rng.uniform(0.05, 1.0))
            r_max = float(rng.uniform(1.0, 9.0))
            sigma = float(rng.choice([0.0, 1.0]))
            cfg = S.SparsifyConfig(p=p, r_max=r_max, blur_sigma=sigma)
            out = S.sparsify(DepthFrame(v), gray, cfg)
            grad = S.gradient_magnitude(gray, sigma)
            expect = brute_force_keep(v, grad, p, r_max)
            got = set(np.flatnonzero(out.values.ravel() > 0))
            assert got == expect

    def test_retained_count_exact(self):
        rng = np.random.default_rng(3)
        v = rng.uniform(0, 8, size=(40, 30))
        gray = GrayFrame(rng.random((40, 30)))
        for p in (0.1, 0.25, 0.5, 0.99):
            cfg = S.SparsifyConfig(p=p, r_max=5.0)
            out = S.sparsify(DepthFrame(v), gray, cfg)
            in_range = int(((v > 0) & (v <= 5.0)).sum())
            assert int((out.values > 0).sum()) == int(np.floor(p * in_range))

    def test_dilation_reinstates_neighbors(self):
        v = np.full((5, 5), 2.0)
        gray_vals = np.zeros((5, 5))
        gray_vals[2, 2] = 1.0  # strong gradient only around the center
        gray = GrayFrame(gray_vals)
        cfg = S.SparsifyConfig(p=1 / 25, r_max=10.0, blur_sigma=0.0, dilate=True)
        out = S.sparsify(DepthFrame(v), gray, cfg)
        kept = out.values > 0
        # four equal-gradient maxima ring the impulse; the row-major tie rule
        # keeps (1, 2), and dilation reinstates exactly its 8-neighborhood
        expect = np.zeros((5, 5), dtype=bool)
        expect[0:3, 1:4] = True
        assert np.array_equal(kept, expect)
        # dilation keeps original depths
        assert np.all(out.values[kept] == 2.0)

    def test_dilated_count_bounded_by_in_range(self):
        rng = np.random.default_rng(9)
        v = rng.uniform(0, 8, size=(20, 20))
        v[rng.random((20, 20)) < 0.3] = 0.0
        gray = GrayFrame(rng.random((20, 20)))
        cfg = S.SparsifyConfig(p=0.3, r_max=5.0, dilate=True)
        out = S.sparsify(DepthFrame(v), gray, cfg)
        in_range = (v > 0) & (v <= 5.0)
        kept = out.values > 0
        assert kept.sum() <= in_range.sum()
        assert np.all(in_range[kept])

    def test_subset_property(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            v = rng.uniform(0, 6, size=(16, 16))
            v[rng.random((16, 16)) < 0.4] = 0.0
            gray = GrayFrame(rng.random((16, 16)))
            cfg = S.SparsifyConfig(p=0.4, r_max=4.0, dilate=bool(rng.integers(2)))
            out = S.sparsify(DepthFrame(v), gray, cfg)
            kept = out.values > 0
            assert np.all(v[kept] == out.values[kept])
            assert np.all(v[kept] > 0) and np.all(out.values[kept] <= 4.0)

    def test_resolution_mismatch(self):
        with pytest.raises(ResolutionMismatchError):
            S.sparsify(DepthFrame(np.ones((4, 4))), GrayFrame(np.zeros((4, 5))),
                       S.SparsifyConfig())


class TestNoise:
    def test_sigma_values(self):
        assert S.noise_sigma(0.4) == pytest.approx(0.0012)
        assert S.noise_sigma(2.4) == pytest.approx(0.0088)
        assert S.noise_sigma(5.0) == pytest.approx(0.0012 + 0.0019 * 4.6**2)

    def test_determinism(self):
        rng = np.random.default_rng(1)
        v = rng.uniform(0.5, 5, size=(20, 20))
        a = S.apply_noise(DepthFrame(v), seed=5, frame_id=3)
        b = S.apply_noise(DepthFrame(v), seed=5, frame_id=3)
        assert np.array_equal(a.values, b.values)
        c = S.apply_noise(DepthFrame(v), seed=5, frame_id=4)
        assert not np.array_equal(a.values, c.values)

    def test_invalid_pixels_untouched(self):
        v = np.array([[0.0, 2.0], [3.0, 0.0]])
        out = S.apply_noise(DepthFrame(v), seed=0)
        assert out.values[0, 0] == 0.0 and out.values[1, 1] == 0.0
        assert out.values[0, 1] != 2.0

    def test_sample_std_quick(self):
        v = np.full((100, 100), 2.4)
        out = S.apply_noise(DepthFrame(v), seed=2)
        resid = out.values - 2.4
        assert abs(resid.std() / 0.0088 - 1) < 0.05

    def test_clamped_above_zero(self):
        v = np.full((50, 50), 0.002)
        out = S.apply_noise(DepthFrame(v), seed=0)
        assert np.all(out.values >= S.NOISE_FLOOR)
