"""Motion triggering: frame differencing, mixture-of-Gaussians background
subtraction, their OR-combination behind a visitor-area mask, and a simulated
PIR edge detector for nighttime.

Luminance statistics are reported on the 0-255-equivalent scale regardless of
the 16-bit storage (raw / 257), so thresholds read like familiar 8-bit values.
All detectors are deterministic given (initial state, frames, config).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .imaging import LUMA_SCALE, BinaryMask, IntensityImage


class Trigger(enum.Enum):
    DIFF = "diff"
    GMM = "gmm"
    BOTH = "both"
    PIR = "pir"


@dataclass(frozen=True)
class DiffConfig:
    """Mean absolute luminance change threshold (0-255-equivalent units)."""

    mean_change_threshold: float = 4.0

    def __post_init__(self):
        if self.mean_change_threshold <= 0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class GmmConfig:
    """Per-pixel adaptive mixture parameters (0-255-equivalent luminance units)."""

    max_components: int = 4
    learning_rate: float = 0.005
    match_threshold: float = 3.0          # Mahalanobis distance
    initial_variance: float = 15.0 ** 2
    background_weight_fraction: float = 0.9
    complexity_prior: float = 0.05
    foreground_ratio_threshold: float = 0.02
    min_variance: float = 4.0
    max_variance: float = 5.0 * 15.0 ** 2

    def __post_init__(self):
        if self.max_components < 1:
            raise ValueError("need at least one component")
        if not 0.0 < self.learning_rate < 1.0:
            raise ValueError("learning_rate outside (0,1)")
        if min(self.match_threshold, self.initial_variance,
               self.background_weight_fraction, self.complexity_prior) <= 0:
            raise ValueError("all mixture parameters must be positive")
        if not 0.0 < self.foreground_ratio_threshold < 1.0:
            raise ValueError("foreground_ratio_threshold outside (0,1)")


@dataclass
class GmmState:
    """Mixture state: (K, h, w) arrays; weight 0 marks an unused slot."""

    weight: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    @classmethod
    def empty(cls, height: int, width: int, cfg: GmmConfig) -> "GmmState":
        k = cfg.max_components
        return cls(
            weight=np.zeros((k, height, width)),
            mean=np.zeros((k, height, width)),
            variance=np.full((k, height, width), cfg.initial_variance),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape[1:]


@dataclass(frozen=True)
class RoiMask:
    """Pixels the detectors may look at; visitor areas are cleared bits."""

    mask: BinaryMask

    def __post_init__(self):
        if self.mask.count() == 0:
            raise ValueError("ROI has no set bits")

    @classmethod
    def full(cls, height: int, width: int) -> "RoiMask":
        return cls(BinaryMask(np.ones((height, width), dtype=bool)))


@dataclass(frozen=True)
class MotionEvent:
    frame_index: int
    timestamp: datetime
    trigger: Trigger
    mean_abs_diff: float
    foreground_ratio: float

    def __post_init__(self):
        if not 0.0 <= self.foreground_ratio <= 1.0:
            raise ValueError("foreground_ratio outside [0,1]")


@dataclass(frozen=True)
class DiffStats:
    mean_abs_diff: float
    fired: bool


def _as_luma(frame: IntensityImage) -> np.ndarray:
    return frame.pixels.astype(np.float64) / LUMA_SCALE


def diff_detect(prev: IntensityImage, curr: IntensityImage, roi: RoiMask, cfg: DiffConfig) -> DiffStats:
    """Mean absolute per-pixel change over the ROI; fires at or above threshold."""
    if prev.shape != curr.shape:
        raise ValueError(f"frame dimensions differ: {prev.shape} vs {curr.shape}")
    if roi.mask.shape != curr.shape:
        raise ValueError("ROI dimensions do not match the frames")
    bits = roi.mask.bits
    diff = np.abs(prev.pixels.astype(np.int64) - curr.pixels.astype(np.int64))
    mean = float(diff[bits].mean()) / LUMA_SCALE
    return DiffStats(mean_abs_diff=mean, fired=mean >= cfg.mean_change_threshold)


def gmm_step(state: GmmState, frame: IntensityImage, roi: RoiMask, cfg: GmmConfig):
    """Advance the per-pixel mixture by one frame; mutates ``state`` in place.

    Returns ``(foreground: BinaryMask, foreground_ratio: float, fired: bool)``.
    A pixel counts as background exactly when it matches one of the
    highest-weight components whose cumulative weight reaches the configured
    background fraction; everything else (including unmatched pixels) is
    foreground. The ratio is taken over ROI pixels only.
    """
    if state.shape != frame.shape:
        raise ValueError(f"state dimensions {state.shape} do not match frame {frame.shape}")
    if roi.mask.shape != frame.shape:
        raise ValueError("ROI dimensions do not match the frame")

    x = _as_luma(frame)
    w, mu, var = state.weight, state.mean, state.variance
    active = w > 0.0

    d2 = (x[None, :, :] - mu) ** 2
    maha2 = np.where(active, d2 / var, np.inf)
    within = maha2 <= cfg.match_threshold ** 2
    best = np.argmin(maha2, axis=0)                      # candidate per pixel
    rows, cols = np.indices(x.shape, sparse=True)
    matched = within[best, rows, cols]                   # candidate actually close enough

    # background membership is decided against the pre-update mixture
    order = np.argsort(-w, axis=0, kind="stable")
    w_sorted = np.take_along_axis(w, order, axis=0)
    cum = np.cumsum(w_sorted, axis=0)
    need = cfg.background_weight_fraction
    # component is background iff everything strictly above it sums to < need
    bg_sorted = (cum - w_sorted) < need
    bg_flag = np.empty_like(bg_sorted)
    np.put_along_axis(bg_flag, order, bg_sorted, axis=0)
    bg_flag &= active
    is_background = matched & bg_flag[best, rows, cols]
    foreground = ~is_background

    # ownership update: matched component absorbs the sample
    owner = np.zeros_like(w)
    np.put_along_axis(owner, best[None, :, :], matched[None, :, :].astype(float), axis=0)
    lr, cp = cfg.learning_rate, cfg.complexity_prior
    w += lr * (owner - w) - lr * cp * active
    np.clip(w, 0.0, None, out=w)

    rho = np.zeros_like(w)
    upd = owner > 0
    rho[upd] = np.minimum(1.0, lr / np.maximum(w[upd], 1e-12))
    delta = x[None, :, :] - mu
    mu += rho * delta
    var += rho * (delta ** 2 - var)
    np.clip(var, cfg.min_variance, cfg.max_variance, out=var)

    # unmatched pixels: recycle the weakest slot as a fresh component
    miss = ~matched
    if miss.any():
        weakest = np.argmin(np.where(active, w, -1.0), axis=0)
        sel = weakest[None, :, :] == np.arange(w.shape[0])[:, None, None]
        sel &= miss[None, :, :]
        w[sel] = lr
        mu[sel] = np.broadcast_to(x, w.shape)[sel]
        var[sel] = cfg.initial_variance

    total = w.sum(axis=0)
    np.divide(w, total[None, :, :], out=w, where=total[None, :, :] > 0)

    bits = roi.mask.bits
    fg_roi = int(np.logical_and(foreground, bits).sum())
    ratio = fg_roi / int(bits.sum())
    return BinaryMask(foreground), ratio, ratio >= cfg.foreground_ratio_threshold


@dataclass
class MotionDetector:
    """Daytime image-based detector: differencing OR mixture subtraction.

    Frames are pre-masked so that pixels outside the ROI can never influence
    the event stream. The detector owns its mixture state and previous frame;
    one instance serves one stream.
    """

    roi: RoiMask
    diff_cfg: DiffConfig = field(default_factory=DiffConfig)
    gmm_cfg: GmmConfig = field(default_factory=GmmConfig)
    _prev: Optional[IntensityImage] = None
    _state: Optional[GmmState] = None
    _index: int = 0

    def step(self, frame: IntensityImage, timestamp: datetime) -> Optional[MotionEvent]:
        masked = IntensityImage(np.where(self.roi.mask.bits, frame.pixels, 0))
        if self._state is None:
            self._state = GmmState.empty(frame.height, frame.width, self.gmm_cfg)

        if self._prev is None:
            diff = DiffStats(0.0, False)
        else:
            diff = diff_detect(self._prev, masked, self.roi, self.diff_cfg)
        _, ratio, gmm_fired = gmm_step(self._state, masked, self.roi, self.gmm_cfg)

        index = self._index
        self._prev = masked
        self._index += 1

        if not (diff.fired or gmm_fired):
            return None
        if diff.fired and gmm_fired:
            trigger = Trigger.BOTH
        elif diff.fired:
            trigger = Trigger.DIFF
        else:
            trigger = Trigger.GMM
        return MotionEvent(index, timestamp, trigger, diff.mean_abs_diff, ratio)


def pir_source(schedule: Sequence[tuple[datetime, bool]]) -> Iterator[MotionEvent]:
    """One event per rising edge of a (timestamp, presence) schedule."""
    last = None
    previous = False
    for i, (ts, present) in enumerate(schedule):
        if last is not None and ts <= last:
            raise ValueError("PIR timestamps must be strictly increasing")
        last = ts
        if present and not previous:
            yield MotionEvent(i, ts, Trigger.PIR, 0.0, 0.0)
        previous = present
