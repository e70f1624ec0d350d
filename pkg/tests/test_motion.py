from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from trapkit.imaging import BinaryMask, IntensityImage
from trapkit.motion import (
    DiffConfig,
    GmmConfig,
    GmmState,
    MotionDetector,
    RoiMask,
    Trigger,
    diff_detect,
    gmm_step,
    pir_source,
)

T0 = datetime(2021, 6, 21, 12, 0, tzinfo=timezone.utc)


def grey(h, w, value_255):
    v = min(max(value_255, 0.0), 255.0)
    return IntensityImage(np.full((h, w), int(round(v * 257)), dtype=np.uint16))


def ts(i):
    return T0 + timedelta(seconds=i)


class TestDiffDetect:
    def test_identical_frames(self):
        f = grey(10, 10, 100)
        stats = diff_detect(f, f, RoiMask.full(10, 10), DiffConfig())
        assert stats.mean_abs_diff == 0.0
        assert not stats.fired

    def test_full_scale_change_fires(self):
        a = grey(10, 10, 0)
        b = IntensityImage(np.full((10, 10), 65535, dtype=np.uint16))
        stats = diff_detect(a, b, RoiMask.full(10, 10), DiffConfig())
        assert stats.mean_abs_diff == pytest.approx(255.0)
        assert stats.fired

    def test_small_patch_below_threshold(self):
        # 10x10 patch changing by 100 units in a 100x100 frame: mean exactly 1.0
        base = np.full((100, 100), 50 * 257, dtype=np.uint16)
        changed = base.copy()
        changed[:10, :10] += 100 * 257
        stats = diff_detect(IntensityImage(base), IntensityImage(changed),
                            RoiMask.full(100, 100), DiffConfig(mean_change_threshold=4.0))
        assert stats.mean_abs_diff == pytest.approx(1.0, abs=1e-12)
        assert not stats.fired

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(5)
        a = IntensityImage(rng.integers(0, 65536, (8, 8)).astype(np.uint16))
        b = IntensityImage(rng.integers(0, 65536, (8, 8)).astype(np.uint16))
        roi = RoiMask.full(8, 8)
        cfg = DiffConfig()
        assert diff_detect(a, b, roi, cfg) == diff_detect(b, a, roi, cfg)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            diff_detect(grey(4, 4, 0), grey(4, 5, 0), RoiMask.full(4, 4), DiffConfig())

    def test_empty_roi_rejected(self):
        with pytest.raises(ValueError):
            RoiMask(BinaryMask(np.zeros((4, 4), bool)))


class TestGmm:
    def test_static_scene_goes_quiet(self):
        cfg = GmmConfig()
        state = GmmState.empty(16, 16, cfg)
        roi = RoiMask.full(16, 16)
        frame = grey(16, 16, 90)
        fired_after_warmup = []
        for i in range(200):
            _, ratio, fired = gmm_step(state, frame, roi, cfg)
            if i >= 50:
                fired_after_warmup.append(fired)
        assert not any(fired_after_warmup)
        assert ratio == 0.0

    def test_global_shift_fires(self):
        cfg = GmmConfig(initial_variance=25.0)
        state = GmmState.empty(8, 8, cfg)
        roi = RoiMask.full(8, 8)
        for _ in range(100):
            gmm_step(state, grey(8, 8, 80), roi, cfg)
        sigma = float(np.sqrt(state.variance[0, 0, 0]))
        jump = grey(8, 8, 80 + 10 * cfg.match_threshold * sigma)
        _, ratio, fired = gmm_step(state, jump, roi, cfg)
        assert ratio == pytest.approx(1.0)
        assert fired

    def test_small_square_ratio(self):
        cfg = GmmConfig(foreground_ratio_threshold=0.005)
        state = GmmState.empty(200, 200, cfg)
        roi = RoiMask.full(200, 200)
        background = grey(200, 200, 60)
        for _ in range(80):
            gmm_step(state, background, roi, cfg)
        bright = background.pixels.copy()
        bright[90:110, 90:110] = 200 * 257
        _, ratio, fired = gmm_step(state, IntensityImage(bright), roi, cfg)
        assert ratio == pytest.approx(0.01, abs=0.005)
        assert fired

    def test_weights_stay_normalized_over_random_sequences(self):
        # 100x100 pixels x 30 random frames = 3e5 per-pixel update sequences
        cfg = GmmConfig()
        state = GmmState.empty(100, 100, cfg)
        roi = RoiMask.full(100, 100)
        rng = np.random.default_rng(9)
        for _ in range(30):
            frame = IntensityImage(rng.integers(0, 65536, (100, 100)).astype(np.uint16))
            gmm_step(state, frame, roi, cfg)
            assert (state.weight >= 0.0).all()
            assert (state.weight.sum(axis=0) <= 1.0 + 1e-6).all()

    def test_state_dimension_mismatch(self):
        cfg = GmmConfig()
        state = GmmState.empty(4, 4, cfg)
        with pytest.raises(ValueError):
            gmm_step(state, grey(4, 5, 0), RoiMask.full(4, 5), cfg)


def run_detector(frames, roi):
    det = MotionDetector(roi)
    events = []
    for i, f in enumerate(frames):
        ev = det.step(f, ts(i))
        if ev is not None:
            events.append(ev)
    return events


class TestCombinedDetector:
    def test_static_scene_after_warmup(self):
        frames = [grey(16, 16, 70)] * 60
        events = run_detector(frames, RoiMask.full(16, 16))
        # the cold-start frame may fire; nothing afterwards
        assert all(e.frame_index == 0 for e in events)

    def test_diff_only_trigger(self):
        # tiny per-frame global drift: large mean change, GMM tracks it
        frames = [grey(16, 16, 60)] * 30
        drift = grey(16, 16, 66)
        events = run_detector(frames + [drift], RoiMask.full(16, 16))
        late = [e for e in events if e.frame_index == 30]
        assert len(late) == 1
        assert late[0].trigger is Trigger.DIFF
        assert late[0].mean_abs_diff == pytest.approx(6.0, abs=0.01)

    def test_both_trigger_on_large_object(self):
        base = np.full((32, 32), 60 * 257, dtype=np.uint16)
        frames = [IntensityImage(base)] * 40
        obj = base.copy()
        obj[4:28, 4:28] = 220 * 257
        events = run_detector(frames + [IntensityImage(obj)], RoiMask.full(32, 32))
        late = [e for e in events if e.frame_index == 40]
        assert len(late) == 1
        assert late[0].trigger is Trigger.BOTH

    def test_events_deterministic_across_runs(self):
        rng = np.random.default_rng(21)
        frames = [IntensityImage((rng.random((16, 16)) * 65535).astype(np.uint16)) for _ in range(100)]
        roi = RoiMask.full(16, 16)
        assert run_detector(frames, roi) == run_detector(frames, roi)

    def test_roi_shields_visitor_area(self):
        bits = np.ones((24, 24), dtype=bool)
        bits[:, :8] = False   # visitor strip
        roi = RoiMask(BinaryMask(bits))
        rng = np.random.default_rng(17)
        base = np.full((24, 24), 90 * 257, dtype=np.uint16)
        clean, noisy = [], []
        for i in range(120):
            f = base.copy()
            if 60 <= i < 70:   # a passing animal inside the ROI
                f[6:14, 12:20] = 200 * 257
            clean.append(IntensityImage(f))
            g = f.copy()
            g[:, :8] = rng.integers(0, 65536, (24, 8))
            noisy.append(IntensityImage(g))
        assert run_detector(clean, roi) == run_detector(noisy, roi)


class TestPirSource:
    def test_empty_schedule(self):
        assert list(pir_source([])) == []

    def test_always_present_single_event(self):
        sched = [(ts(i), True) for i in range(5)]
        events = list(pir_source(sched))
        assert len(events) == 1
        assert events[0].timestamp == ts(0)
        assert events[0].trigger is Trigger.PIR

    def test_two_rising_edges(self):
        sched = [(ts(0), False), (ts(1), True), (ts(2), False), (ts(3), True)]
        events = list(pir_source(sched))
        assert [e.frame_index for e in events] == [1, 3]

    def test_non_monotone_rejected(self):
        sched = [(ts(1), False), (ts(0), True)]
        with pytest.raises(ValueError):
            list(pir_source(sched))
