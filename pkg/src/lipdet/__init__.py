"""lipdet: detect speaking persons from per-frame facial-landmark trajectories.

The pipeline clusters face observations into person tracks, normalizes lip
landmarks for position and face height, and thresholds an accumulated
lip-deviation signal to emit speaking intervals.
"""

from lipdet.core import (
    ConfigError,
    DegenerateFace,
    DetectorConfig,
    FaceObservation,
    LipdetError,
    PersonTrack,
    SpeakingInterval,
    TrackerParams,
    VideoMeta,
    face_height,
    mouth_center,
    normalize_landmarks,
)
from lipdet.detector import LipSignal, analyze_track, deviation, detect_intervals, extract_lip_series, smooth
from lipdet.io import read_landmark_file, write_debug_signals, write_landmark_file, write_results
from lipdet.synth import SceneSpec, FaceSpec, generate_scene, score_intervals
from lipdet.tracking import association_distance, build_tracks

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateFace",
    "DetectorConfig",
    "FaceObservation",
    "FaceSpec",
    "LipSignal",
    "LipdetError",
    "PersonTrack",
    "SceneSpec",
    "SpeakingInterval",
    "TrackerParams",
    "VideoMeta",
    "analyze_track",
    "association_distance",
    "build_tracks",
    "detect_intervals",
    "deviation",
    "extract_lip_series",
    "face_height",
    "generate_scene",
    "mouth_center",
    "normalize_landmarks",
    "read_landmark_file",
    "score_intervals",
    "smooth",
    "write_debug_signals",
    "write_landmark_file",
    "write_results",
]
