import numpy as np
import pytest

from trapkit.imaging import DepthMap, IntensityImage
from trapkit.stereo import (
    DisparityMap,
    RectifiedPair,
    StereoConfig,
    block_match,
    disparity_to_depth,
    project_dot_pattern,
    synthesize_right_view,
)

CFG = StereoConfig(block_size=7, max_disparity=32)


def textured(h, w, seed=0):
    rng = np.random.default_rng(seed)
    return IntensityImage(rng.integers(5000, 60000, (h, w)).astype(np.uint16))


def interior(h, w, cfg):
    """Region where full blocks and the whole disparity range fit."""
    r = cfg.block_size // 2
    box = np.zeros((h, w), dtype=bool)
    box[r:h - r, cfg.max_disparity + r:w - r - 1] = True
    return box


class TestBlockMatch:
    def test_identity_pair_all_zero(self):
        left = textured(40, 80)
        pair = RectifiedPair(left, left, baseline=0.05, focal=600)
        d = block_match(pair, CFG)
        inner = interior(40, 80, CFG) & d.valid
        assert inner.sum() > 500
        assert (d.disparity[inner] == 0).all()

    def test_exact_shift_recovered(self):
        left = textured(40, 96, seed=3)
        shift = 8
        right = np.empty_like(left.pixels)
        right[:, :96 - shift] = left.pixels[:, shift:]
        right[:, 96 - shift:] = left.pixels[:, :shift]
        pair = RectifiedPair(left, IntensityImage(right), baseline=0.05, focal=600)
        d = block_match(pair, CFG)
        inner = interior(40, 96, CFG) & d.valid
        assert inner.sum() > 800
        assert (d.disparity[inner] == shift).all()

    def test_textureless_all_invalid(self):
        flat = IntensityImage(np.full((24, 60), 30000, dtype=np.uint16))
        pair = RectifiedPair(flat, flat, baseline=0.05, focal=600)
        d = block_match(pair, CFG)
        assert not d.valid.any()

    def test_too_narrow_rejected(self):
        img = textured(10, 20)
        with pytest.raises(ValueError):
            block_match(RectifiedPair(img, img, 0.05, 600), CFG)


class TestDisparityToDepth:
    def test_all_invalid_gives_missing(self):
        d = DisparityMap(np.zeros((4, 4)), np.zeros((4, 4), bool))
        depth = disparity_to_depth(d, 0.05, 600)
        assert (depth.mm == 0).all()

    def test_scalar_formula(self):
        d = DisparityMap(np.full((2, 2), 10.0), np.ones((2, 2), bool))
        depth = disparity_to_depth(d, baseline=0.05, focal=600)
        assert (depth.mm == 3000).all()

    def test_max_disparity_uniform_minimum_depth(self):
        d = DisparityMap(np.full((3, 3), 64.0), np.ones((3, 3), bool))
        depth = disparity_to_depth(d, baseline=0.05, focal=600)
        expected = round(1000 * 600 * 0.05 / 64)
        assert (depth.mm == expected).all()

    def test_strictly_decreasing_in_disparity(self):
        disps = np.arange(1, 65, dtype=np.float64)
        d = DisparityMap(disps.reshape(1, -1), np.ones((1, 64), bool))
        mm = disparity_to_depth(d, 0.05, 600).mm[0]
        assert (np.diff(mm.astype(np.int64)) < 0).all()

    def test_out_of_range_maps_to_missing(self):
        d = DisparityMap(np.full((1, 1), 0.001), np.ones((1, 1), bool))
        assert disparity_to_depth(d, 1.0, 600).mm[0, 0] == 0


class TestDotPattern:
    def test_zero_density_identity(self):
        img = textured(10, 10)
        assert project_dot_pattern(img, 1, 0.0, 20000) is img

    def test_zero_amplitude_identity(self):
        img = textured(10, 10)
        assert project_dot_pattern(img, 1, 0.5, 0) is img

    def test_dot_count_near_density(self):
        img = IntensityImage(np.zeros((100, 100), dtype=np.uint16))
        out = project_dot_pattern(img, seed=77, density=0.05, amplitude=20000)
        dotted = int((out.pixels > 0).sum())
        assert abs(dotted - 500) <= 50

    def test_same_seed_same_pattern(self):
        img = textured(20, 20)
        a = project_dot_pattern(img, 5, 0.1, 10000)
        b = project_dot_pattern(img, 5, 0.1, 10000)
        assert np.array_equal(a.pixels, b.pixels)

    def test_saturating_add(self):
        img = IntensityImage(np.full((50, 50), 60000, dtype=np.uint16))
        out = project_dot_pattern(img, 9, 0.5, 30000)
        assert out.pixels.max() == 65535


def shifted_with_clamp(img: np.ndarray, dx: int) -> np.ndarray:
    out = np.empty_like(img)
    out[:, : img.shape[1] - dx] = img[:, dx:]
    out[:, img.shape[1] - dx:] = img[:, -1:]
    return out


class TestSynthesizeRightView:
    def test_uniform_depth_is_pure_shift(self):
        left = textured(20, 60, seed=8)
        depth = DepthMap(np.full((20, 60), 2500, dtype=np.uint16))
        out = synthesize_right_view(left, depth, baseline=0.05, focal=600)
        dx = round(1000 * 600 * 0.05 / 2500)
        assert np.array_equal(out.pixels, shifted_with_clamp(left.pixels, dx))

    def test_all_invalid_depth_identity(self):
        left = textured(12, 30)
        depth = DepthMap(np.zeros((12, 30), dtype=np.uint16))
        out = synthesize_right_view(left, depth, 0.05, 600)
        assert np.array_equal(out.pixels, left.pixels)

    def test_two_plane_occlusion(self):
        h, w = 16, 80
        left = textured(h, w, seed=4)
        mm = np.full((h, w), 6000, dtype=np.uint16)
        mm[:, 30:50] = 1500   # near slab
        depth = DepthMap(mm)
        out = synthesize_right_view(left, depth, baseline=0.05, focal=600)
        d_far = round(30000 / 6000)   # 5 px
        d_near = round(30000 / 1500)  # 20 px
        got = out.pixels[0]
        src = left.pixels[0]
        # far plane left of the slab's landing zone
        assert np.array_equal(got[0:30 - d_near], src[d_far:30 - d_near + d_far])
        # slab pixels land shifted by their own disparity and occlude the
        # far-plane pixels that mapped into the same interval
        assert np.array_equal(got[30 - d_near:50 - d_near], src[30:50])
        # far plane resumes to the right of the disocclusion gap
        assert np.array_equal(got[50 - d_far:w - d_far], src[50:w])


class TestRoundTrip:
    def test_piecewise_constant_depth_recovery(self):
        rng = np.random.default_rng(100)
        h, w = 48, 120
        left = IntensityImage(rng.integers(5000, 60000, (h, w)).astype(np.uint16))
        mm = np.full((h, w), 4000, dtype=np.uint16)
        mm[10:30, 40:90] = 1800
        depth = DepthMap(mm)
        right = synthesize_right_view(left, depth, baseline=0.05, focal=600)
        d = block_match(RectifiedPair(left, right, 0.05, 600), CFG)
        gt = np.rint(30000.0 / mm.astype(np.float64))
        inner = interior(h, w, CFG) & d.valid
        agree = np.abs(d.disparity[inner] - gt[inner]) <= 1.0
        assert inner.sum() > 1000
        assert agree.mean() >= 0.95

    def test_dot_pattern_rescues_textureless_scene(self):
        h, w = 48, 120
        flat = IntensityImage(np.full((h, w), 20000, dtype=np.uint16))
        depth = DepthMap(np.full((h, w), 3000, dtype=np.uint16))
        plain_right = synthesize_right_view(flat, depth, 0.05, 600)
        before = block_match(RectifiedPair(flat, plain_right, 0.05, 600), CFG)
        dotted = project_dot_pattern(flat, seed=13, density=0.05, amplitude=25700)
        dotted_right = synthesize_right_view(dotted, depth, 0.05, 600)
        after = block_match(RectifiedPair(dotted, dotted_right, 0.05, 600), CFG)
        inner = interior(h, w, CFG)
        was_invalid = inner & ~before.valid
        recovered = was_invalid & after.valid
        assert was_invalid.sum() > 1000
        assert recovered.sum() / was_invalid.sum() >= 0.8
