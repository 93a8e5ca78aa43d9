import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lipdet.core import DetectorConfig, FaceObservation, PersonTrack, VideoMeta
from lipdet.detector import (
    InvalidWindow,
    LengthMismatch,
    analyze_track,
    detect_intervals,
    deviation,
    extract_lip_series,
    smooth,
    smoothing_window,
)
from lipdet.synth import FaceSpec, SceneSpec, generate_scene, score_intervals
from lipdet.tracking import build_tracks

from conftest import make_obs, static_track


def smooth_oracle(series, window):
    """Direct convolution with edge replication; the reference for smooth()."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.size == 0:
        return arr.copy()
    pad = window // 2
    padded = np.pad(arr, pad, mode="edge")
    return np.convolve(padded, np.full(window, 1.0 / window), mode="valid")


def lip_track(t_values, b_values, frames=None, fps=25.0, height=200.0, center=(400.0, 300.0)):
    """Track whose normalized lip series equal the given values exactly."""
    cx, cy = center
    frames = list(frames) if frames is not None else list(range(len(t_values)))
    obs = []
    for f, tv, bv in zip(frames, t_values, b_values):
        overrides = {51: (cx, tv * height + cy), 57: (cx, bv * height + cy)}
        obs.append(make_obs(f, fps=fps, height=height, center=center, overrides=overrides))
    return PersonTrack(person_id=0, observations=tuple(obs))


class TestExtractLipSeries:
    def test_direct_arithmetic(self, meta):
        track = PersonTrack(
            person_id=0,
            observations=(
                make_obs(0, height=200.0, center=(50.0, 120.0), overrides={51: (50.0, 110.0), 57: (50.0, 140.0)}),
            ),
        )
        t, b, valid = extract_lip_series(track, meta)
        assert t[0] == pytest.approx(-0.05)
        assert b[0] == pytest.approx(0.10)
        assert valid.all()

    def test_linear_interpolation_of_short_gap(self, meta):
        track = lip_track([0.0, 0.1], [0.0, 0.2], frames=[0, 2])
        t, b, valid = extract_lip_series(track, meta)
        assert valid.tolist() == [True, True, True]
        assert t[1] == pytest.approx(0.05)
        assert b[1] == pytest.approx(0.10)

    def test_long_gap_stays_invalid(self, meta):
        track = lip_track([0.0, 0.1], [0.0, 0.1], frames=[0, 20])
        t, b, valid = extract_lip_series(track, meta, DetectorConfig(interp_max_gap=12))
        assert valid[0] and valid[20]
        assert not valid[1:20].any()
        assert np.isnan(t[1:20]).all()

    def test_gap_exactly_at_limit_interpolates(self, meta):
        track = lip_track([0.0, 0.1], [0.0, 0.1], frames=[0, 13])
        _, _, valid = extract_lip_series(track, meta, DetectorConfig(interp_max_gap=12))
        assert valid.all()

    def test_configurable_lip_indices(self, meta):
        config = DetectorConfig(upper_lip_index=62, lower_lip_index=66)
        track = static_track(frames=range(1))
        t, b, _ = extract_lip_series(track, meta, config)
        # inner-lip middles straddle the mouth center symmetrically in the template
        assert t[0] == pytest.approx(-b[0])


class TestSmooth:
    def test_constant_series_preserved_exactly(self):
        series = np.full(10, 0.2)
        for window in (1, 3, 9, 51):
            assert (smooth(series, window) == series).all()

    def test_window_one_is_identity(self):
        series = np.array([0.3, -1.2, 4.5, 0.0])
        assert (smooth(series, 1) == series).all()

    def test_hand_checked_convolution(self):
        out = smooth(np.array([0.0, 0.0, 3.0, 0.0, 0.0]), 3)
        assert np.allclose(out, [0.0, 1.0, 1.0, 1.0, 0.0])

    def test_invalid_windows(self):
        for window in (0, -3, 2, 10):
            with pytest.raises(InvalidWindow):
                smooth(np.zeros(5), window)

    @settings(max_examples=80, deadline=None)
    @given(st.data())
    def test_matches_direct_convolution(self, data):
        n = data.draw(st.integers(1, 400))
        window = data.draw(st.integers(0, 100)) * 2 + 1
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        series = rng.normal(scale=data.draw(st.floats(1e-3, 10.0)), size=n)
        assert np.max(np.abs(smooth(series, window) - smooth_oracle(series, window))) < 1e-9

    def test_window_longer_than_series(self):
        series = np.array([1.0, 2.0, 7.0])
        assert np.allclose(smooth(series, 501), smooth_oracle(series, 501))


class TestSmoothingWindow:
    def test_values(self):
        assert smoothing_window(2.0, 25.0) == 51  # exact tie rounds up
        assert smoothing_window(1.0, 25.0) == 25
        assert smoothing_window(1.984, 25.0) == 49
        assert smoothing_window(0.01, 25.0) == 1
        assert smoothing_window(2.0, 24.0) == 49  # 48 -> nearest odd ties up
        assert smoothing_window(1.0, 29.97) == 29


class TestDeviation:
    def test_zero_when_equal(self):
        t = np.array([0.1, 0.2, 0.3])
        d, e, c = deviation(t, t * 2, t, t * 2)
        assert (d == 0).all() and (e == 0).all() and (c == 0).all()

    def test_direct_arithmetic(self):
        d, e, c = deviation([0.02], [0.04], [0.0], [0.0])
        assert d[0] == pytest.approx(0.02)
        assert e[0] == pytest.approx(0.04)
        assert c[0] == pytest.approx(0.03)

    def test_swap_symmetry(self):
        t, ts = np.array([0.1, 0.5]), np.array([0.2, 0.4])
        b, bs = np.array([-0.3, 0.0]), np.array([0.3, 0.1])
        _, _, c1 = deviation(t, b, ts, bs)
        _, _, c2 = deviation(b, t, bs, ts)
        assert np.array_equal(c1, c2)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            deviation([1.0], [1.0, 2.0], [1.0], [1.0])


def _config(threshold=0.3, merge_gap_s=0.0, min_duration_s=0.0):
    return DetectorConfig(threshold_T=threshold, merge_gap_s=merge_gap_s, min_duration_s=min_duration_s)


class TestDetectIntervals:
    # fps=1 makes one frame equal one second, so gaps/durations read directly
    meta1 = VideoMeta(fps=1.0, width=10, height=10)

    def valid(self, c):
        return np.ones(len(c), dtype=bool)

    def test_direct_thresholding(self):
        c = np.array([0.0, 0.0, 0.5, 0.5, 0.5, 0.0])
        ivs = detect_intervals(c, self.valid(c), _config(), self.meta1)
        assert [(iv.start_frame, iv.end_frame) for iv in ivs] == [(2, 4)]

    def test_closing_merges_across_small_gap(self):
        c = np.array([0.5, 0.5, 0.0, 0.5, 0.5])
        ivs = detect_intervals(c, self.valid(c), _config(merge_gap_s=1.0), self.meta1)
        assert [(iv.start_frame, iv.end_frame) for iv in ivs] == [(0, 4)]

    def test_no_merge_when_gap_exceeds_limit(self):
        c = np.array([0.5, 0.5, 0.0, 0.0, 0.5, 0.5])
        ivs = detect_intervals(c, self.valid(c), _config(merge_gap_s=1.0), self.meta1)
        assert len(ivs) == 2

    def test_everything_below_threshold(self):
        c = np.full(20, 0.1)
        assert detect_intervals(c, self.valid(c), _config(), self.meta1) == []

    def test_threshold_is_inclusive(self):
        c = np.array([0.0, 0.3, 0.0])
        ivs = detect_intervals(c, self.valid(c), _config(threshold=0.3), self.meta1)
        assert [(iv.start_frame, iv.end_frame) for iv in ivs] == [(1, 1)]

    def test_min_duration_drops_short_intervals(self):
        c = np.array([0.5, 0.0, 0.5, 0.5, 0.5, 0.5])
        ivs = detect_intervals(c, self.valid(c), _config(min_duration_s=3.0), self.meta1)
        assert [(iv.start_frame, iv.end_frame) for iv in ivs] == [(2, 5)]

    def test_invalid_frames_never_speak_and_block_merging(self):
        c = np.array([0.5, 0.5, np.nan, 0.5, 0.5])
        valid = np.array([True, True, False, True, True])
        ivs = detect_intervals(c, valid, _config(merge_gap_s=2.0), self.meta1)
        assert [(iv.start_frame, iv.end_frame) for iv in ivs] == [(0, 1), (3, 4)]

    def test_frame_offset_and_person_id(self):
        c = np.array([0.5, 0.5])
        ivs = detect_intervals(c, self.valid(c), _config(), VideoMeta(fps=25.0, width=10, height=10),
                               first_frame=50, person_id=7)
        assert ivs[0].person_id == 7
        assert (ivs[0].start_frame, ivs[0].end_frame) == (50, 51)
        assert ivs[0].start_s == pytest.approx(2.0)

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_threshold_monotonicity(self, data):
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        c = rng.uniform(0.0, 0.05, size=data.draw(st.integers(1, 200)))
        valid = rng.random(len(c)) < 0.9
        t_low = data.draw(st.floats(1e-4, 0.05))
        t_high = data.draw(st.floats(1e-4, 0.05))
        if t_low > t_high:
            t_low, t_high = t_high, t_low
        meta = VideoMeta(fps=25.0, width=10, height=10)
        frames_low = _speaking_frames(c, valid, t_low, meta)
        frames_high = _speaking_frames(c, valid, t_high, meta)
        assert frames_high <= frames_low

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_qualifying_runs_are_contained_in_one_interval(self, data):
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        n = data.draw(st.integers(1, 300))
        c = rng.uniform(0.0, 0.03, size=n)
        valid = rng.random(n) < 0.85
        config = DetectorConfig(threshold_T=0.015, merge_gap_s=0.2, min_duration_s=0.4)
        meta = VideoMeta(fps=25.0, width=10, height=10)
        ivs = detect_intervals(c, valid, config, meta)
        min_frames = config.min_duration_s * meta.fps

        speaking = valid & (c >= config.threshold_T)
        run_start = None
        for i, flag in enumerate(list(speaking) + [False]):
            if flag and run_start is None:
                run_start = i
            elif not flag and run_start is not None:
                run_len = i - run_start
                if run_len >= min_frames:
                    containing = [iv for iv in ivs if iv.start_frame <= run_start and i - 1 <= iv.end_frame]
                    assert len(containing) == 1
                run_start = None


def _speaking_frames(c, valid, threshold, meta):
    config = DetectorConfig(threshold_T=threshold, merge_gap_s=0.0, min_duration_s=0.0)
    frames = set()
    for iv in detect_intervals(c, valid, config, meta):
        frames.update(range(iv.start_frame, iv.end_frame + 1))
    return frames


class TestAnalyzeTrack:
    def test_static_face_has_no_intervals(self, meta):
        signal, intervals = analyze_track(static_track(frames=range(300)), meta)
        assert intervals == []
        assert np.max(signal.c) == 0.0

    def test_synthetic_speech_recovered(self):
        face = FaceSpec(path=((600.0, 400.0),), face_height_px=150.0,
                        speech_segments=((2.0, 6.0),), noise_sigma=0.002)
        spec = SceneSpec(fps=25.0, duration_s=10.0, faces=(face,), seed=5)
        meta, observations, truth = generate_scene(spec)
        tracks = build_tracks(meta, observations)
        assert len(tracks) == 1
        _, intervals = analyze_track(tracks[0], meta)
        assert len(intervals) == 1
        ious, mean_iou = score_intervals(intervals, truth[0])
        assert mean_iou >= 0.8

    def test_track_shorter_than_min_duration(self, meta):
        track = lip_track([0.0, 0.3, -0.3, 0.3, -0.3, 0.0], [0.0, -0.3, 0.3, -0.3, 0.3, 0.0])
        _, intervals = analyze_track(track, meta)  # 6 frames << 0.5 s * 25 fps
        assert intervals == []

    def test_smoothing_respects_segment_boundaries(self, meta):
        values = [0.0, 0.2, 0.4, 0.1, 0.3, 0.5]
        track = lip_track(values, values, frames=[0, 1, 2, 40, 41, 42])
        config = DetectorConfig(interp_max_gap=5, window_s=0.12)  # window of 3 frames
        signal, _ = analyze_track(track, meta, config)
        left = smooth(np.array(values[:3]), 3)
        right = smooth(np.array(values[3:]), 3)
        assert np.allclose(signal.t_smooth[:3], left)
        assert np.allclose(signal.t_smooth[40:], right)
        assert np.isnan(signal.t_smooth[3:40]).all()
        assert not signal.valid[3:40].any()

    def test_intervals_carry_person_id(self, meta):
        face = FaceSpec(path=((600.0, 400.0),), face_height_px=150.0, speech_segments=((1.0, 3.0),))
        spec = SceneSpec(fps=25.0, duration_s=5.0, faces=(face,), seed=1)
        vmeta, observations, _ = generate_scene(spec)
        tracks = build_tracks(vmeta, observations)
        _, intervals = analyze_track(tracks[0], vmeta)
        assert intervals and all(iv.person_id == tracks[0].person_id for iv in intervals)

    def test_end_to_end_similarity_invariance(self, meta):
        face = FaceSpec(path=((300.0, 300.0), (500.0, 420.0)), face_height_px=130.0,
                        speech_segments=((1.0, 4.0),), noise_sigma=0.002)
        spec = SceneSpec(fps=25.0, duration_s=6.0, faces=(face,), seed=9)
        vmeta, observations, _ = generate_scene(spec)

        def run(obs_list):
            tracks = build_tracks(vmeta, obs_list)
            assert len(tracks) == 1
            return analyze_track(tracks[0], vmeta)

        signal, intervals = run(observations)
        moved = [
            FaceObservation(
                frame=o.frame, time_s=o.time_s,
                bbox=(o.bbox[0] * 3.0 - 400.0, o.bbox[1] * 3.0 + 250.0, o.bbox[2] * 3.0, o.bbox[3] * 3.0),
                confidence=o.confidence,
                landmarks=o.landmarks * 3.0 + (-400.0, 250.0),
            )
            for o in observations
        ]
        signal2, intervals2 = run(moved)
        assert np.max(np.abs(signal.c - signal2.c)) < 1e-9
        assert intervals == intervals2
