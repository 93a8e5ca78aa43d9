"""Domain types and landmark geometry shared by all lipdet modules.

Landmarks follow the standard iBUG 68-point layout (jaw 0-16, brows 17-26,
nose 27-35, eyes 36-47, mouth 48-67) in image pixel coordinates with y
growing downward.
"""

from dataclasses import dataclass, field

import numpy as np

N_LANDMARKS = 68

# Mouth landmarks of interest (iBUG, 0-based).
OUTER_LIP_TOP = 51
OUTER_LIP_BOTTOM = 57
INNER_LIP_TOP = 62
INNER_LIP_BOTTOM = 66

# Faces shorter than this are rejected at ingestion.  The tiny slack keeps
# exactly-unit heights (e.g. of already-normalized sets) valid despite
# floating-point rounding.
MIN_FACE_HEIGHT_PX = 1.0
_HEIGHT_SLACK = 1e-9


class LipdetError(Exception):
    """Base class for all lipdet errors."""


class DegenerateFace(LipdetError):
    """Face landmarks span less than the minimum face height."""


class ConfigError(LipdetError):
    """A configuration value violates its documented constraints."""


def as_landmark_array(points) -> np.ndarray:
    """Return ``points`` as a read-only float64 array of shape (68, 2).

    Raises
    ------
    ValueError
        If the shape is not (68, 2) or any coordinate is non-finite.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.shape != (N_LANDMARKS, 2):
        raise ValueError(f"expected {N_LANDMARKS} (x, y) landmark pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("landmark coordinates must be finite")
    if arr.base is not None or arr.flags.writeable:
        arr = arr.copy()
    arr.setflags(write=False)
    return arr


def mouth_center(landmarks) -> np.ndarray:
    """Midpoint of the inner-lip middle landmarks (62 and 66), shape (2,)."""
    arr = np.asarray(landmarks, dtype=np.float64)
    return 0.5 * (arr[INNER_LIP_TOP] + arr[INNER_LIP_BOTTOM])


def face_height(landmarks) -> float:
    """Vertical extent max(y) - min(y) over all 68 landmarks, in pixels.

    Raises
    ------
    DegenerateFace
        If the extent falls below ``MIN_FACE_HEIGHT_PX``.
    """
    ys = np.asarray(landmarks, dtype=np.float64)[:, 1]
    height = float(ys.max() - ys.min())
    if height < MIN_FACE_HEIGHT_PX - _HEIGHT_SLACK:
        raise DegenerateFace(f"face height {height:.6g} px is below the {MIN_FACE_HEIGHT_PX} px minimum")
    return height


def normalize_landmarks(landmarks) -> np.ndarray:
    """Translate landmarks to the mouth center and scale by face height.

    The result is dimensionless (face-height units) and invariant under any
    translation and uniform positive scaling of the input.  Rotation is not
    compensated.

    Raises
    ------
    DegenerateFace
        Propagated from :func:`face_height`.
    """
    arr = np.asarray(landmarks, dtype=np.float64)
    return (arr - mouth_center(arr)) / face_height(arr)


@dataclass(frozen=True)
class VideoMeta:
    """Per-video header data: frame rate, frame dimensions, optional length."""

    fps: float
    width: int
    height: int
    frame_count: int | None = None

    def __post_init__(self):
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame dimensions must be positive, got {self.width}x{self.height}")
        if self.frame_count is not None and self.frame_count < 0:
            raise ValueError(f"frame_count must be non-negative, got {self.frame_count}")


@dataclass(frozen=True, eq=False)
class FaceObservation:
    """One detected face in one frame."""

    frame: int
    time_s: float
    bbox: tuple[float, float, float, float]
    confidence: float
    landmarks: np.ndarray

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"frame index must be non-negative, got {self.frame}")
        if not (np.isfinite(self.time_s) and self.time_s >= 0):
            raise ValueError(f"time_s must be non-negative, got {self.time_s}")
        bbox = tuple(float(v) for v in self.bbox)
        if len(bbox) != 4 or not all(np.isfinite(v) for v in bbox):
            raise ValueError(f"bbox must be 4 finite numbers (x, y, w, h), got {self.bbox}")
        if bbox[2] < 0 or bbox[3] < 0:
            raise ValueError(f"bbox width/height must be non-negative, got {self.bbox}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        object.__setattr__(self, "bbox", bbox)
        object.__setattr__(self, "landmarks", as_landmark_array(self.landmarks))
        face_height(self.landmarks)  # rejects degenerate faces at ingestion

    @classmethod
    def at(cls, frame, fps, bbox, confidence, landmarks) -> "FaceObservation":
        """Build an observation with ``time_s`` derived from ``frame / fps``."""
        return cls(frame=frame, time_s=frame / fps, bbox=bbox, confidence=confidence, landmarks=landmarks)

    def __eq__(self, other):
        if not isinstance(other, FaceObservation):
            return NotImplemented
        return (
            self.frame == other.frame
            and self.time_s == other.time_s
            and self.bbox == other.bbox
            and self.confidence == other.confidence
            and np.array_equal(self.landmarks, other.landmarks)
        )


@dataclass(frozen=True)
class PersonTrack:
    """Time-ordered face observations attributed to one person label."""

    person_id: int
    observations: tuple[FaceObservation, ...]

    def __post_init__(self):
        if self.person_id < 0:
            raise ValueError(f"person_id must be non-negative, got {self.person_id}")
        obs = tuple(self.observations)
        if not obs:
            raise ValueError("a track must contain at least one observation")
        frames = [o.frame for o in obs]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("track frames must be strictly increasing")
        object.__setattr__(self, "observations", obs)

    @property
    def first_frame(self) -> int:
        return self.observations[0].frame

    @property
    def last_frame(self) -> int:
        return self.observations[-1].frame


@dataclass(frozen=True)
class SpeakingInterval:
    """Inclusive frame span in which one person is detected as speaking."""

    person_id: int
    start_frame: int
    end_frame: int
    start_s: float
    end_s: float

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValueError(f"empty interval: [{self.start_frame}, {self.end_frame}]")
        if self.start_s > self.end_s:
            raise ValueError(f"interval seconds out of order: [{self.start_s}, {self.end_s}]")

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class TrackerParams:
    """Association parameters for grouping observations into tracks.

    max_dist_factor is a fraction of face height; max_gap is the largest
    frame gap a track survives before being closed.
    """

    max_dist_factor: float = 0.5
    max_gap: int = 25

    def __post_init__(self):
        if not (np.isfinite(self.max_dist_factor) and self.max_dist_factor > 0):
            raise ConfigError(f"max_dist_factor must be positive, got {self.max_dist_factor}")
        if self.max_gap < 0:
            raise ConfigError(f"max_gap must be non-negative, got {self.max_gap}")


@dataclass(frozen=True)
class DetectorConfig:
    """All detector tunables, in seconds and face-height units."""

    window_s: float = 2.0
    threshold_T: float = 0.01
    merge_gap_s: float = 0.3
    min_duration_s: float = 0.5
    interp_max_gap: int = 12
    tracker: TrackerParams = field(default_factory=TrackerParams)
    upper_lip_index: int = OUTER_LIP_TOP
    lower_lip_index: int = OUTER_LIP_BOTTOM

    def __post_init__(self):
        if not (np.isfinite(self.window_s) and self.window_s > 0):
            raise ConfigError(f"window_s must be positive, got {self.window_s}")
        if not (np.isfinite(self.threshold_T) and self.threshold_T > 0):
            raise ConfigError(f"threshold_T must be positive, got {self.threshold_T}")
        if self.merge_gap_s < 0:
            raise ConfigError(f"merge_gap_s must be non-negative, got {self.merge_gap_s}")
        if self.min_duration_s < 0:
            raise ConfigError(f"min_duration_s must be non-negative, got {self.min_duration_s}")
        if self.interp_max_gap < 0:
            raise ConfigError(f"interp_max_gap must be non-negative, got {self.interp_max_gap}")
        for name in ("upper_lip_index", "lower_lip_index"):
            idx = getattr(self, name)
            if not (0 <= idx < N_LANDMARKS):
                raise ConfigError(f"{name} must be in [0, {N_LANDMARKS}), got {idx}")
