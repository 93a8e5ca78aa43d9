"""Per-track lip-movement analysis and speaking-interval extraction.

For each track the normalized y-coordinates of the upper- and lower-lip
landmarks form two per-frame series.  Each series is compared against a
heavily smoothed version of itself; the per-frame absolute deviations of the
two series are averaged into a combined deviation signal, and frames where
that signal reaches the detection threshold are grouped into speaking
intervals.  A speaking person repeatedly opens and closes the mouth, so the
lip series oscillate around their local mean and the combined deviation
stays high for the duration of speech.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from lipdet.core import (
    DetectorConfig,
    LipdetError,
    PersonTrack,
    SpeakingInterval,
    VideoMeta,
    face_height,
    mouth_center,
)


class InvalidWindow(LipdetError):
    """Smoothing window is not an odd count of at least one frame."""


class LengthMismatch(LipdetError):
    """Signal vectors that must share a length do not."""


@dataclass(frozen=True)
class LipSignal:
    """Per-frame lip series for one track over its contiguous frame range.

    All arrays share the length ``last_frame - first_frame + 1``.  Entries
    on frames without evidence (gaps too long to interpolate) are NaN and
    flagged ``False`` in ``valid``.
    """

    first_frame: int
    fps: float
    t: np.ndarray
    b: np.ndarray
    t_smooth: np.ndarray
    b_smooth: np.ndarray
    d: np.ndarray
    e: np.ndarray
    c: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        for name in ("b", "t_smooth", "b_smooth", "d", "e", "c", "valid"):
            if len(getattr(self, name)) != n:
                raise LengthMismatch(f"signal array {name!r} has length {len(getattr(self, name))}, expected {n}")

    @property
    def n_frames(self) -> int:
        return len(self.t)

    @property
    def last_frame(self) -> int:
        return self.first_frame + self.n_frames - 1

    @property
    def frames(self) -> np.ndarray:
        return np.arange(self.first_frame, self.first_frame + self.n_frames)


def smoothing_window(window_s: float, fps: float) -> int:
    """Convert a window length in seconds to an odd frame count.

    The odd integer nearest to ``window_s * fps``, never below 1; exact ties
    between two odd neighbors round up.
    """
    span = window_s * fps
    w = int(round(span))
    if w % 2 == 0:
        w += 1 if span >= w else -1
    return max(w, 1)


def extract_lip_series(
    track: PersonTrack, meta: VideoMeta, config: DetectorConfig | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build the upper/lower lip series for a track.

    For every observed frame the track's landmarks are normalized (mouth
    center at the origin, divided by face height) and the y-coordinates of
    the configured upper- and lower-lip landmarks are taken.  Interior runs
    of missing frames no longer than ``config.interp_max_gap`` are filled by
    linear interpolation and count as valid; longer runs stay NaN/invalid
    and split downstream smoothing into independent segments.

    Parameters
    ----------
    track: PersonTrack
        Track with strictly increasing frame indices.
    meta: VideoMeta
        Video header; unused here beyond API symmetry with the other stages.
    config: DetectorConfig
        Supplies ``interp_max_gap`` and the lip landmark indices.

    Returns
    -------
    t: array of float
        Normalized upper-lip y per frame of ``[first..last]``.
    b: array of float
        Normalized lower-lip y per frame.
    valid: array of bool
        True on observed or interpolated frames.

    Raises
    ------
    DegenerateFace
        If any observation's face height is degenerate (carries the frame
        index in its message).
    """
    del meta
    config = config or DetectorConfig()
    first = track.first_frame
    n = track.last_frame - first + 1

    t = np.full(n, np.nan)
    b = np.full(n, np.nan)
    observed = np.zeros(n, dtype=bool)
    for obs in track.observations:
        i = obs.frame - first
        height = face_height(obs.landmarks)
        center_y = mouth_center(obs.landmarks)[1]
        t[i] = (obs.landmarks[config.upper_lip_index, 1] - center_y) / height
        b[i] = (obs.landmarks[config.lower_lip_index, 1] - center_y) / height
        observed[i] = True

    valid = observed.copy()
    obs_idx = np.flatnonzero(observed)
    for left, right in zip(obs_idx, obs_idx[1:]):
        gap = right - left - 1
        if gap == 0 or gap > config.interp_max_gap:
            continue
        inside = np.arange(left + 1, right)
        frac = (inside - left) / (right - left)
        t[inside] = t[left] + frac * (t[right] - t[left])
        b[inside] = b[left] + frac * (b[right] - b[left])
        valid[inside] = True

    return t, b, valid


def smooth(series, window: int) -> np.ndarray:
    """Centered moving average with edge replication.

    Equivalent to padding the series with ``window // 2`` copies of each end
    value and taking the mean over every length-``window`` slice.  Runs in
    O(n) independent of window size.

    Parameters
    ----------
    series: 1-D array of float
        Input values; must be finite.
    window: int
        Averaging width in frames; odd, at least 1.  A window of 1 returns
        the input unchanged.

    Returns
    -------
    array of float
        Smoothed series, same length as the input.

    Raises
    ------
    InvalidWindow
        If ``window`` is even or smaller than 1.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidWindow(f"window must be an odd count >= 1, got {window}")
    arr = np.asarray(series, dtype=np.float64)
    if window == 1 or arr.size == 0:
        return arr.copy()
    # Anchoring at the first sample keeps constant series exactly constant
    # (averaging w equal values rounds at the last ulp otherwise).
    base = arr[0]
    return base + uniform_filter1d(arr - base, size=window, mode="nearest")


def deviation(t, b, t_smooth, b_smooth) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Absolute deviations of both lip series and their combination.

    Returns
    -------
    d: array
        ``|t - t_smooth|`` elementwise.
    e: array
        ``|b - b_smooth|`` elementwise.
    c: array
        ``(d + e) / 2``, the combined deviation.

    Raises
    ------
    LengthMismatch
        If the four inputs do not share one length.
    """
    t, b, t_smooth, b_smooth = (np.asarray(v, dtype=np.float64) for v in (t, b, t_smooth, b_smooth))
    lengths = {len(t), len(b), len(t_smooth), len(b_smooth)}
    if len(lengths) != 1:
        raise LengthMismatch(f"signal lengths differ: {sorted(lengths)}")
    d = np.abs(t - t_smooth)
    e = np.abs(b - b_smooth)
    return d, e, (d + e) / 2.0


def detect_intervals(
    c,
    valid,
    config: DetectorConfig,
    meta: VideoMeta,
    first_frame: int = 0,
    person_id: int = 0,
) -> list[SpeakingInterval]:
    """Threshold the combined deviation signal into speaking intervals.

    A frame is speaking when it is valid and ``c >= threshold_T``.  Runs of
    speaking frames separated by gaps of at most ``merge_gap_s * fps``
    frames are merged, provided every frame in the gap is valid (frames
    without evidence are never labeled speaking).  Intervals shorter than
    ``min_duration_s * fps`` frames are then dropped.

    ``first_frame`` offsets the returned frame indices (and the second
    bounds derived from them); ``person_id`` labels the intervals.
    """
    c = np.asarray(c, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if len(c) != len(valid):
        raise LengthMismatch(f"c has length {len(c)}, valid has length {len(valid)}")

    speaking = np.zeros(len(c), dtype=bool)
    speaking[valid] = c[valid] >= config.threshold_T

    runs = _runs(speaking)
    if not runs:
        return []

    merge_gap = config.merge_gap_s * meta.fps
    merged = [runs[0]]
    for start, end in runs[1:]:
        prev_start, prev_end = merged[-1]
        gap = start - prev_end - 1
        if gap <= merge_gap and valid[prev_end + 1 : start].all():
            merged[-1] = (prev_start, end)
        else:
            merged.append((start, end))

    min_frames = config.min_duration_s * meta.fps
    intervals = []
    for start, end in merged:
        if end - start + 1 < min_frames:
            continue
        s, e = start + first_frame, end + first_frame
        intervals.append(
            SpeakingInterval(
                person_id=person_id,
                start_frame=s,
                end_frame=e,
                start_s=s / meta.fps,
                end_s=e / meta.fps,
            )
        )
    return intervals


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, end] index runs where ``mask`` is True."""
    padded = np.concatenate(([False], mask, [False]))
    diff = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def analyze_track(
    track: PersonTrack, meta: VideoMeta, config: DetectorConfig | None = None
) -> tuple[LipSignal, list[SpeakingInterval]]:
    """Run the full lip-deviation pipeline on one track.

    Composes lip-series extraction, smoothing (each maximal run of valid
    frames is smoothed independently so long dropouts never leak across),
    deviation, and interval detection.  Returned intervals carry the track's
    ``person_id``; the full signal is returned for debugging dumps.
    """
    config = config or DetectorConfig()
    t, b, valid = extract_lip_series(track, meta, config)
    window = smoothing_window(config.window_s, meta.fps)

    t_smooth = np.full_like(t, np.nan)
    b_smooth = np.full_like(b, np.nan)
    for start, end in _runs(valid):
        t_smooth[start : end + 1] = smooth(t[start : end + 1], window)
        b_smooth[start : end + 1] = smooth(b[start : end + 1], window)

    d, e, c = deviation(t, b, t_smooth, b_smooth)
    intervals = detect_intervals(
        c, valid, config, meta, first_frame=track.first_frame, person_id=track.person_id
    )
    signal = LipSignal(
        first_frame=track.first_frame,
        fps=meta.fps,
        t=t,
        b=b,
        t_smooth=t_smooth,
        b_smooth=b_smooth,
        d=d,
        e=e,
        c=c,
        valid=valid,
    )
    return signal, intervals
