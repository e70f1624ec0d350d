"""Depth from rectified stereo pairs.

Block matching is plain SAD winner-take-all over integer disparities with
three invalidation gates (texture, uniqueness, left-right consistency).
The projector dot pattern used for active stereo and a forward-warping view
synthesizer (for building test pairs from known depth) live here too.

Matching runs on the 0-255-equivalent luminance scale, so the texture
threshold reads like an 8-bit gradient sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import LUMA_SCALE, DepthMap, IntensityImage

MAX_DEPTH_MM = 65535


@dataclass(frozen=True)
class StereoConfig:
    block_size: int = 7
    max_disparity: int = 64
    uniqueness_ratio: float = 0.8
    lr_consistency_tol: float = 1.0
    min_texture: float = 10.0

    def __post_init__(self):
        if self.block_size < 3 or self.block_size % 2 == 0:
            raise ValueError("block_size must be odd and >= 3")
        if self.max_disparity < 1:
            raise ValueError("max_disparity must be >= 1")


@dataclass(frozen=True)
class RectifiedPair:
    left: IntensityImage
    right: IntensityImage
    baseline: float     # meters
    focal: float        # pixels

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise ValueError("left/right dimensions differ")
        if self.baseline <= 0 or self.focal <= 0:
            raise ValueError("baseline and focal length must be positive")


@dataclass(frozen=True)
class DisparityMap:
    """Per-pixel disparity (pixels) with a validity flag; both read-only."""

    disparity: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        d = np.array(self.disparity, dtype=np.float32, copy=True)
        v = np.array(self.valid, dtype=bool, copy=True)
        if d.shape != v.shape or d.ndim != 2:
            raise ValueError("disparity/valid shape mismatch")
        d.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "disparity", d)
        object.__setattr__(self, "valid", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.disparity.shape


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over (2r+1)^2 windows; positions without a full window get nan."""
    h, w = a.shape
    k = 2 * radius + 1
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=ii[1:, 1:])
    out = np.full((h, w), np.nan)
    core = (
        ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k]
    )
    out[radius:h - radius, radius:w - radius] = core
    return out


def block_match(pair: RectifiedPair, cfg: StereoConfig) -> DisparityMap:
    """Winner-take-all SAD block matching on the left image.

    A pixel is invalidated when its block has too little horizontal texture,
    when the best cost is not clearly below the runner-up (disparities within
    1 px of the winner do not count as runners-up), or when matching the right
    image back disagrees by more than the configured tolerance.
    """
    h, w = pair.left.shape
    if w < cfg.block_size + cfg.max_disparity:
        raise ValueError(
            f"image width {w} too small for block {cfg.block_size} "
            f"+ disparity range {cfg.max_disparity}"
        )
    left = pair.left.pixels.astype(np.float64) / LUMA_SCALE
    right = pair.right.pixels.astype(np.float64) / LUMA_SCALE
    r = cfg.block_size // 2
    ndisp = cfg.max_disparity + 1

    # cost[d, y, x] = SAD between left block at x and right block at x-d
    cost = np.full((ndisp, h, w), np.inf)
    for d in range(ndisp):
        ad = np.full((h, w), np.nan)
        ad[:, d:] = np.abs(left[:, d:] - right[:, : w - d]) if d else np.abs(left - right)
        sad = _box_sum(np.nan_to_num(ad, nan=0.0), r)
        # blocks touching columns < d looked at padding, not pixels
        sad[:, : d + r] = np.nan
        cost[d] = np.where(np.isnan(sad), np.inf, sad)

    best = np.argmin(cost, axis=0)
    ys, xs = np.indices((h, w), sparse=True)
    c1 = cost[best, ys, xs]
    valid = np.isfinite(c1)

    # texture gate: horizontal gradient mass inside the block
    grad = np.zeros_like(left)
    grad[:, 1:] = np.abs(np.diff(left, axis=1))
    tex = _box_sum(grad, r)
    valid &= np.nan_to_num(tex, nan=-1.0) >= cfg.min_texture

    # uniqueness gate: runner-up outside +-1 px of the winner
    dgrid = np.arange(ndisp)[:, None, None]
    far = np.abs(dgrid - best[None, :, :]) > 1
    c2 = np.min(np.where(far, cost, np.inf), axis=0)
    with np.errstate(invalid="ignore"):
        ratio = np.where(c2 > 0, c1 / np.where(c2 > 0, c2, 1.0), 1.0)
        valid &= np.isfinite(c1) & (ratio <= cfg.uniqueness_ratio)

    # left-right gate: match the right image against the left and compare
    cost_r = np.full((ndisp, h, w), np.inf)
    for d in range(ndisp):
        cost_r[d, :, : w - d] = cost[d, :, d:]
    best_r = np.argmin(cost_r, axis=0)
    xr = xs - best
    xr_ok = xr >= 0
    d_back = np.where(xr_ok, best_r[ys, np.maximum(xr, 0)], -1)
    valid &= xr_ok & (np.abs(d_back - best) <= cfg.lr_consistency_tol)

    return DisparityMap(best.astype(np.float32), valid)


def disparity_to_depth(d: DisparityMap, baseline: float, focal: float) -> DepthMap:
    """Triangulate: depth_mm = 1000 * focal * baseline / disparity, 0 if unknown.

    Zero/invalid disparities and depths beyond the 16-bit range map to 0.
    """
    if baseline <= 0 or focal <= 0:
        raise ValueError("baseline and focal length must be positive")
    disp = d.disparity.astype(np.float64)
    ok = d.valid & (disp > 0)
    mm = np.zeros(d.shape, dtype=np.float64)
    np.divide(1000.0 * focal * baseline, disp, out=mm, where=ok)
    mm = np.rint(mm)
    mm[(mm > MAX_DEPTH_MM) | ~ok] = 0
    return DepthMap(mm.astype(np.uint16))


def project_dot_pattern(img: IntensityImage, seed: int, density: float, amplitude: int) -> IntensityImage:
    """Add a seeded sparse dot field (saturating) to simulate the IR projector.

    The same seed always produces the same pattern; density is the per-pixel
    dot probability and amplitude is in raw 16-bit luminance units.
    """
    if not 0.0 <= density < 1.0:
        raise ValueError("density outside [0,1)")
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    if density == 0.0 or amplitude == 0:
        return img
    rng = np.random.default_rng(seed)
    dots = rng.random(img.shape) < density
    bumped = img.pixels.astype(np.int64) + np.int64(amplitude) * dots
    return IntensityImage(np.minimum(bumped, MAX_DEPTH_MM).astype(np.uint16))


def synthesize_right_view(left: IntensityImage, depth: DepthMap, baseline: float, focal: float) -> IntensityImage:
    """Forward-warp the left view by its per-pixel disparity to fake a right view.

    Disparities are rounded to whole pixels; nearer surfaces win collisions;
    unknown depth warps with zero shift so an all-invalid map is the identity.
    Holes inherit the nearest filled pixel in the same scanline.
    """
    if left.shape != depth.shape:
        raise ValueError("left/depth dimensions differ")
    if baseline <= 0 or focal <= 0:
        raise ValueError("baseline and focal length must be positive")
    h, w = left.shape
    mm = depth.mm.astype(np.float64)
    known = mm > 0
    disp = np.zeros((h, w), dtype=np.int64)
    np.rint(1000.0 * focal * baseline / np.where(known, mm, 1.0), out=mm, where=known)
    disp[known] = mm[known].astype(np.int64)

    ys, xs = np.indices((h, w))
    tx = xs - disp
    inside = (tx >= 0) & (tx < w)
    # z-buffer via a unique sortable key: nearest depth wins a collision,
    # ties resolve to the right-most source pixel; unknown depth counts as far
    n = h * w
    zkey = np.where(known, depth.mm, np.int64(MAX_DEPTH_MM) + 1).ravel().astype(np.int64)
    key = zkey * np.int64(n + 1) - np.arange(n, dtype=np.int64)
    target = (ys.ravel() * w + tx.ravel())[inside.ravel()]
    key = key[inside.ravel()]
    src = np.nonzero(inside.ravel())[0]
    keybuf = np.full(n, np.iinfo(np.int64).max)
    np.minimum.at(keybuf, target, key)
    won = key == keybuf[target]

    out = np.zeros((h, w), dtype=np.uint16)
    filled = np.zeros((h, w), dtype=bool)
    out.ravel()[target[won]] = left.pixels.ravel()[src[won]]
    filled.ravel()[target[won]] = True

    if not filled.all():
        out = _fill_scanline_holes(out, filled, left.pixels)
    return IntensityImage(out)


def _fill_scanline_holes(out: np.ndarray, filled: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    h, w = out.shape
    cols = np.arange(w)
    res = out.copy()
    for y in range(h):
        f = filled[y]
        if not f.any():
            res[y] = fallback[y]
            continue
        idx = np.where(f, cols, -1)
        left_near = np.maximum.accumulate(idx)
        idx_r = np.where(f, cols, w + w)
        right_near = np.minimum.accumulate(idx_r[::-1])[::-1]
        # prefer the left neighbor on ties; fall back to whichever exists
        dl = np.where(left_near >= 0, cols - left_near, np.iinfo(np.int64).max)
        dr = np.where(right_near < w, right_near - cols, np.iinfo(np.int64).max)
        pick = np.where(dl <= dr, left_near, right_near)
        res[y] = out[y, pick]
    return res
