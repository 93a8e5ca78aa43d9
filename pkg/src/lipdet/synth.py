"""Synthetic landmark scenes with ground-truth speaking labels.

Scenes place a neutral 68-point face template (a committed data asset with
unit face height and mouth-centered origin) along piecewise-linear motion
paths.  During speech segments the outer-lip landmarks oscillate vertically
in opposite directions, mimicking a mouth repeatedly opening and closing;
Gaussian jitter models extractor noise.  Generation is deterministic given
the scene seed (numpy PCG64), and the generator records the RNG name in the
truth file so scenes stay reproducible.
"""

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from lipdet.core import FaceObservation, LipdetError, SpeakingInterval, VideoMeta

RNG_ALGORITHM = "numpy-pcg64"

# Indices whose y oscillates during speech: full amplitude on the outer-lip
# middles, half amplitude on their direct neighbors.
_UPPER_FULL, _UPPER_HALF = 51, (50, 52)
_LOWER_FULL, _LOWER_HALF = 57, (56, 58)


class SpecError(LipdetError):
    """A scene specification violates its invariants."""


@lru_cache(maxsize=1)
def face_template() -> np.ndarray:
    """The neutral 68-point template: unit face height, mouth at the origin."""
    with resources.files("lipdet.data").joinpath("face_template_68.json").open("r") as fh:
        pts = np.array(json.load(fh)["points"], dtype=np.float64)
    pts.setflags(write=False)
    return pts


def _check_segments(segments, duration_s: float, name: str, disjoint: bool):
    for seg in segments:
        if len(seg) != 2:
            raise SpecError(f"{name} entries must be [start_s, end_s] pairs, got {seg!r}")
        s, e = seg
        if not (0 <= s <= e <= duration_s):
            raise SpecError(f"{name} [{s}, {e}] outside scene duration [0, {duration_s}]")
    if disjoint:
        spans = sorted((float(s), float(e)) for s, e in segments)
        for (_, e0), (s1, _) in zip(spans, spans[1:]):
            if s1 < e0:
                raise SpecError(f"{name} overlap near t={s1}")


@dataclass(frozen=True)
class FaceSpec:
    """One synthetic face: motion path, size, speech and dropout schedule.

    ``path`` waypoints (pixels) are traversed at even time spacing over the
    scene; a single waypoint keeps the face static.  ``face_height_px`` is a
    constant or a (start, end) pair ramped linearly over the scene.
    Amplitudes and noise are fractions of face height.
    """

    path: tuple = ((960.0, 540.0),)
    face_height_px: float | tuple = 120.0
    speech_segments: tuple = ()
    lip_amplitude: float = 0.03
    lip_freq_hz: float = 4.0
    noise_sigma: float = 0.002
    dropout_segments: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "path", tuple((float(x), float(y)) for x, y in self.path))
        object.__setattr__(self, "speech_segments", tuple((float(s), float(e)) for s, e in self.speech_segments))
        object.__setattr__(self, "dropout_segments", tuple((float(s), float(e)) for s, e in self.dropout_segments))
        if not self.path:
            raise SpecError("face path needs at least one waypoint")
        heights = self.face_height_px if isinstance(self.face_height_px, tuple) else (self.face_height_px,)
        if not all(h > 0 for h in heights):
            raise SpecError(f"face_height_px must be positive, got {self.face_height_px}")
        if self.lip_amplitude < 0 or self.noise_sigma < 0:
            raise SpecError("lip_amplitude and noise_sigma must be non-negative")
        if self.lip_freq_hz <= 0:
            raise SpecError(f"lip_freq_hz must be positive, got {self.lip_freq_hz}")

    def height_at(self, t: float, duration_s: float) -> float:
        if not isinstance(self.face_height_px, tuple):
            return float(self.face_height_px)
        h0, h1 = self.face_height_px
        return float(h0 + (h1 - h0) * (t / duration_s))

    def position_at(self, t: float, duration_s: float) -> np.ndarray:
        way = np.asarray(self.path, dtype=np.float64)
        if len(way) == 1:
            return way[0]
        u = np.clip(t / duration_s, 0.0, 1.0) * (len(way) - 1)
        i = min(int(u), len(way) - 2)
        return way[i] + (u - i) * (way[i + 1] - way[i])

    def speech_phase(self, t: float) -> float | None:
        """Seconds since the enclosing speech segment started, or None."""
        for s, e in self.speech_segments:
            if s <= t <= e:
                return t - s
        return None

    def dropped_at(self, t: float) -> bool:
        return any(s <= t <= e for s, e in self.dropout_segments)


@dataclass(frozen=True)
class SceneSpec:
    """A full synthetic scene: timing, canvas, faces, and the RNG seed."""

    fps: float = 25.0
    duration_s: float = 10.0
    faces: tuple = ()
    seed: int = 0
    width: int = 1920
    height: int = 1080

    def __post_init__(self):
        object.__setattr__(self, "faces", tuple(self.faces))
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise SpecError(f"fps must be positive, got {self.fps}")
        if not (math.isfinite(self.duration_s) and self.duration_s > 0):
            raise SpecError(f"duration_s must be positive, got {self.duration_s}")
        if self.width <= 0 or self.height <= 0:
            raise SpecError(f"canvas must be positive, got {self.width}x{self.height}")
        for face in self.faces:
            _check_segments(face.speech_segments, self.duration_s, "speech_segments", disjoint=True)
            _check_segments(face.dropout_segments, self.duration_s, "dropout_segments", disjoint=False)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps))


def generate_scene(spec: SceneSpec) -> tuple[VideoMeta, list[FaceObservation], list[list[SpeakingInterval]]]:
    """Render a scene spec into observations plus per-face ground truth.

    Observations are emitted frame-ordered (faces in spec order within each
    frame) at full float precision; quantization to file precision happens
    only when they are serialized.  Ground truth is one interval list per
    face, labeled with the face index.

    Raises
    ------
    SpecError
        Propagated from spec validation.
    """
    rng = np.random.default_rng(spec.seed)
    template = face_template()
    meta = VideoMeta(fps=spec.fps, width=spec.width, height=spec.height, frame_count=spec.n_frames)

    observations: list[FaceObservation] = []
    for frame in range(spec.n_frames):
        t = frame / spec.fps
        for face in spec.faces:
            if face.dropped_at(t):
                continue
            h = face.height_at(t, spec.duration_s)
            pts = template * h + face.position_at(t, spec.duration_s)
            phase = face.speech_phase(t)
            if phase is not None and face.lip_amplitude > 0:
                disp = face.lip_amplitude * h * math.sin(2.0 * math.pi * face.lip_freq_hz * phase)
                pts[_UPPER_FULL, 1] -= disp
                pts[list(_UPPER_HALF), 1] -= 0.5 * disp
                pts[_LOWER_FULL, 1] += disp
                pts[list(_LOWER_HALF), 1] += 0.5 * disp
            if face.noise_sigma > 0:
                pts = pts + rng.normal(0.0, face.noise_sigma * h, size=pts.shape)
            x0, y0 = pts.min(axis=0)
            x1, y1 = pts.max(axis=0)
            observations.append(
                FaceObservation.at(
                    frame=frame,
                    fps=spec.fps,
                    bbox=(x0, y0, x1 - x0, y1 - y0),
                    confidence=0.99,
                    landmarks=pts,
                )
            )

    truth = [
        _truth_intervals(face, index, spec) for index, face in enumerate(spec.faces)
    ]
    return meta, observations, truth


def _truth_intervals(face: FaceSpec, face_index: int, spec: SceneSpec) -> list[SpeakingInterval]:
    intervals = []
    for s, e in sorted(face.speech_segments):
        start = max(0, math.ceil(s * spec.fps - 1e-9))
        end = min(spec.n_frames - 1, math.floor(e * spec.fps + 1e-9))
        if start > end:
            continue
        intervals.append(
            SpeakingInterval(
                person_id=face_index,
                start_frame=start,
                end_frame=end,
                start_s=start / spec.fps,
                end_s=end / spec.fps,
            )
        )
    return intervals


def _overlap_frames(a: SpeakingInterval, b: SpeakingInterval) -> int:
    return max(0, min(a.end_frame, b.end_frame) - max(a.start_frame, b.start_frame) + 1)


def score_intervals(predicted, truth) -> tuple[list[float], float]:
    """Temporal IoU of each truth segment against its best-overlapping prediction.

    Each truth segment is matched to the predicted interval with maximal
    frame overlap; its IoU is overlap frames over union frames (inclusive
    counting).  Truth segments with no overlapping prediction score 0.
    Returns the per-segment IoUs and their mean (0.0 when truth is empty).
    """
    ious = []
    for tv in truth:
        best_overlap, best_iou = 0, 0.0
        for pv in predicted:
            ov = _overlap_frames(tv, pv)
            if ov == 0:
                continue
            iou = ov / (tv.n_frames + pv.n_frames - ov)
            if ov > best_overlap or (ov == best_overlap and iou > best_iou):
                best_overlap, best_iou = ov, iou
        ious.append(best_iou)
    return ious, (sum(ious) / len(ious) if ious else 0.0)


def sample_scene_spec(
    seed: int,
    fps: float = 25.0,
    duration_s: float = 60.0,
    n_faces: int | None = None,
    width: int = 1920,
    height: int = 1080,
    silent_face_prob: float = 0.3,
    segment_len_s: tuple[float, float] = (1.0, 5.0),
    segment_gap_s: tuple[float, float] = (1.0, 3.0),
    lip_amplitude: float = 0.03,
    lip_freq_hz: float = 4.0,
    noise_sigma: float = 0.002,
) -> SceneSpec:
    """Draw a random multi-face scene with well-separated motion lanes.

    Faces wander slowly inside vertical lanes spaced across the canvas, so
    paths never intersect and greedy tracking is unambiguous.  Each face is
    silent with probability ``silent_face_prob``; otherwise its speech
    segments have lengths in ``segment_len_s`` and are separated by at least
    ``segment_gap_s`` of silence.  Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    count = int(n_faces) if n_faces is not None else int(rng.integers(1, 4))

    faces = []
    for i in range(count):
        lane_x = width * (i + 1) / (count + 1)
        n_way = int(rng.integers(2, 5))
        way = [
            (
                lane_x + rng.uniform(-0.04, 0.04) * width,
                height * rng.uniform(0.35, 0.65),
            )
            for _ in range(n_way)
        ]
        h = float(rng.uniform(90, 160))

        segments = []
        if rng.random() >= silent_face_prob:
            k = int(rng.integers(1, 5))
            cursor = float(rng.uniform(1.0, 3.0))
            while len(segments) < k:
                length = float(rng.uniform(*segment_len_s))
                if cursor + length > duration_s - 1.0:
                    break
                segments.append((cursor, cursor + length))
                cursor += length + float(rng.uniform(*segment_gap_s))

        faces.append(
            FaceSpec(
                path=tuple(way),
                face_height_px=h,
                speech_segments=tuple(segments),
                lip_amplitude=lip_amplitude,
                lip_freq_hz=lip_freq_hz,
                noise_sigma=noise_sigma,
            )
        )

    return SceneSpec(fps=fps, duration_s=duration_s, faces=tuple(faces), seed=seed, width=width, height=height)


def load_scene_spec(source) -> SceneSpec:
    """Read a scene spec document (JSON mirroring the SceneSpec fields)."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = json.load(source)
    return scene_spec_from_dict(doc)


def scene_spec_from_dict(doc: dict) -> SceneSpec:
    if not isinstance(doc, dict):
        raise SpecError(f"scene spec must be an object, got {type(doc).__name__}")
    try:
        faces = []
        for fdoc in doc.get("faces", []):
            height = fdoc.get("face_height_px", 120.0)
            if isinstance(height, list):
                height = tuple(height)
            faces.append(
                FaceSpec(
                    path=tuple(tuple(p) for p in fdoc.get("path", [(960.0, 540.0)])),
                    face_height_px=height,
                    speech_segments=tuple(tuple(s) for s in fdoc.get("speech_segments", [])),
                    lip_amplitude=fdoc.get("lip_amplitude", 0.03),
                    lip_freq_hz=fdoc.get("lip_freq_hz", 4.0),
                    noise_sigma=fdoc.get("noise_sigma", 0.002),
                    dropout_segments=tuple(tuple(s) for s in fdoc.get("dropout_segments", [])),
                )
            )
        return SceneSpec(
            fps=doc.get("fps", 25.0),
            duration_s=doc.get("duration_s", 10.0),
            faces=tuple(faces),
            seed=doc.get("seed", 0),
            width=doc.get("width", 1920),
            height=doc.get("height", 1080),
        )
    except SpecError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise SpecError(f"malformed scene spec: {exc}") from exc


def scene_spec_to_dict(spec: SceneSpec) -> dict:
    return {
        "fps": spec.fps,
        "duration_s": spec.duration_s,
        "seed": spec.seed,
        "width": spec.width,
        "height": spec.height,
        "faces": [
            {
                "path": [list(p) for p in face.path],
                "face_height_px": list(face.face_height_px)
                if isinstance(face.face_height_px, tuple)
                else face.face_height_px,
                "speech_segments": [list(s) for s in face.speech_segments],
                "lip_amplitude": face.lip_amplitude,
                "lip_freq_hz": face.lip_freq_hz,
                "noise_sigma": face.noise_sigma,
                "dropout_segments": [list(s) for s in face.dropout_segments],
            }
            for face in spec.faces
        ],
    }


def write_truth(truth, spec: SceneSpec, dest) -> None:
    """Write per-face ground-truth intervals plus the RNG provenance."""
    doc = {
        "rng": RNG_ALGORITHM,
        "seed": spec.seed,
        "faces": [
            {
                "face_index": index,
                "intervals": [
                    {
                        "start_frame": iv.start_frame,
                        "end_frame": iv.end_frame,
                        "start_s": iv.start_s,
                        "end_s": iv.end_s,
                    }
                    for iv in intervals
                ],
            }
            for index, intervals in enumerate(truth)
        ],
    }
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    else:
        json.dump(doc, dest, indent=2)
        dest.write("\n")


def load_truth(source) -> list[list[SpeakingInterval]]:
    """Read a truth file back into per-face interval lists."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = json.load(source)
    faces = sorted(doc["faces"], key=lambda f: f["face_index"])
    return [
        [
            SpeakingInterval(
                person_id=fdoc["face_index"],
                start_frame=iv["start_frame"],
                end_frame=iv["end_frame"],
                start_s=iv["start_s"],
                end_s=iv["end_s"],
            )
            for iv in fdoc["intervals"]
        ]
        for fdoc in faces
    ]
