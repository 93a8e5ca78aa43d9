"""Streaming reader/writer for landmark files and for detector outputs.

Landmark files are line-oriented: one self-describing JSON record per line,
a single header record first, then observation records in non-decreasing
frame order:

    {"type":"meta","fps":25.0,"width":1920,"height":1080}
    {"type":"obs","frame":0,"bbox":[x,y,w,h],"conf":0.98,"landmarks":[[x0,y0],...,[x67,y67]]}

Coordinates are serialized with at most 3 fractional digits (sub-millipixel
precision is extractor noise), so a value already quantized to 0.001 px
round-trips exactly.
"""

import io as _stdio
import json
import math
from collections.abc import Iterable, Iterator
from pathlib import Path

import numpy as np

from lipdet.core import (
    N_LANDMARKS,
    DegenerateFace,
    FaceObservation,
    LipdetError,
    PersonTrack,
    SpeakingInterval,
    VideoMeta,
)

# Largest tolerated |time_s - frame / fps| when a record carries its own timestamp.
TIME_TOLERANCE_S = 1e-6

DEBUG_SIGNAL_COLUMNS = ("frame", "time_s", "t", "b", "t_smooth", "b_smooth", "d", "e", "c", "valid")


class LandmarkFileError(LipdetError):
    """Base error for landmark-file problems; carries a 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ParseError(LandmarkFileError):
    """A line is not a valid JSON record."""


class SchemaError(LandmarkFileError):
    """A record does not match the landmark-file schema."""


class OrderError(LandmarkFileError):
    """Observation frame indices decrease across records."""


def _as_text_lines(source):
    """Yield text lines from a path, a text stream, or a byte stream."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
        return
    first = True
    for line in source:
        if first and isinstance(line, bytes):
            source = _chain_decoded(line, source)
            yield from source
            return
        first = False
        yield line


def _chain_decoded(first_line: bytes, rest):
    yield first_line.decode("utf-8")
    for line in rest:
        yield line.decode("utf-8")


def _require(record: dict, key: str, line: int):
    if key not in record:
        raise SchemaError(line, f"missing field {key!r}")
    return record[key]


def _number(value, name: str, line: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(line, f"{name} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(line, f"{name} must be finite, got {value!r}")
    return float(value)


def _parse_meta(record: dict, line: int) -> VideoMeta:
    fps = _number(_require(record, "fps", line), "fps", line)
    width = _require(record, "width", line)
    height = _require(record, "height", line)
    if isinstance(width, bool) or isinstance(height, bool) or not isinstance(width, int) or not isinstance(height, int):
        raise SchemaError(line, "width and height must be integers")
    frame_count = record.get("frame_count")
    if frame_count is not None and (isinstance(frame_count, bool) or not isinstance(frame_count, int)):
        raise SchemaError(line, f"frame_count must be an integer, got {frame_count!r}")
    try:
        return VideoMeta(fps=fps, width=width, height=height, frame_count=frame_count)
    except ValueError as exc:
        raise SchemaError(line, str(exc)) from exc


def _parse_observation(record: dict, meta: VideoMeta, line: int) -> FaceObservation:
    frame = _require(record, "frame", line)
    if isinstance(frame, bool) or not isinstance(frame, int):
        raise SchemaError(line, f"frame must be an integer, got {frame!r}")
    bbox = _require(record, "bbox", line)
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise SchemaError(line, f"bbox must be a list of 4 numbers, got {bbox!r}")
    bbox = tuple(_number(v, "bbox value", line) for v in bbox)
    conf = _number(_require(record, "conf", line), "conf", line)
    landmarks = _require(record, "landmarks", line)
    if not isinstance(landmarks, list) or len(landmarks) != N_LANDMARKS:
        got = len(landmarks) if isinstance(landmarks, list) else type(landmarks).__name__
        raise SchemaError(line, f"landmarks must contain exactly {N_LANDMARKS} pairs, got {got}")
    for pair in landmarks:
        if not isinstance(pair, list) or len(pair) != 2:
            raise SchemaError(line, f"each landmark must be an [x, y] pair, got {pair!r}")
        _number(pair[0], "landmark x", line)
        _number(pair[1], "landmark y", line)

    derived_time = frame / meta.fps
    time_s = record.get("time_s")
    if time_s is not None:
        time_s = _number(time_s, "time_s", line)
        if abs(time_s - derived_time) > TIME_TOLERANCE_S:
            raise SchemaError(
                line, f"time_s {time_s} disagrees with frame {frame} at fps {meta.fps} (expected {derived_time:.6f})"
            )
    else:
        time_s = derived_time

    try:
        return FaceObservation(frame=frame, time_s=time_s, bbox=bbox, confidence=conf, landmarks=landmarks)
    except (ValueError, DegenerateFace) as exc:
        raise SchemaError(line, f"frame {frame}: {exc}") from exc


def read_landmark_file(source) -> tuple[VideoMeta, Iterator[FaceObservation]]:
    """Read a landmark file, returning its header and a lazy observation stream.

    ``source`` may be a path or an open text/byte stream.  The header is
    parsed eagerly; observations are yielded one line at a time so files
    larger than memory stream through.  All errors carry the 1-based line
    number of the offending record.

    Raises
    ------
    ParseError, SchemaError, OrderError
    """
    lines = enumerate(_as_text_lines(source), start=1)

    meta = None
    for lineno, raw in lines:
        if not raw.strip():
            continue
        record = _parse_record(raw, lineno)
        if record.get("type") != "meta":
            raise SchemaError(lineno, "first record must be the meta header")
        meta = _parse_meta(record, lineno)
        break
    if meta is None:
        raise SchemaError(1, "missing header: file has no records")

    def observations() -> Iterator[FaceObservation]:
        last_frame = -1
        for lineno, raw in lines:
            if not raw.strip():
                continue
            record = _parse_record(raw, lineno)
            kind = record.get("type")
            if kind == "meta":
                raise SchemaError(lineno, "duplicate meta header")
            if kind != "obs":
                raise SchemaError(lineno, f"unknown record type {kind!r}")
            obs = _parse_observation(record, meta, lineno)
            if obs.frame < last_frame:
                raise OrderError(lineno, f"frame {obs.frame} after frame {last_frame}: frames must be non-decreasing")
            last_frame = obs.frame
            yield obs

    return meta, observations()


def load_landmark_file(source) -> tuple[VideoMeta, list[FaceObservation]]:
    """Read a landmark file fully into memory."""
    meta, obs = read_landmark_file(source)
    return meta, list(obs)


def _parse_record(raw: str, lineno: int) -> dict:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(lineno, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(record, dict):
        raise SchemaError(lineno, f"record must be a JSON object, got {type(record).__name__}")
    return record


def _round3(value: float) -> float:
    return round(float(value), 3)


def _meta_record(meta: VideoMeta) -> dict:
    record = {"type": "meta", "fps": float(meta.fps), "width": meta.width, "height": meta.height}
    if meta.frame_count is not None:
        record["frame_count"] = meta.frame_count
    return record


def _obs_record(obs: FaceObservation) -> dict:
    return {
        "type": "obs",
        "frame": obs.frame,
        "bbox": [_round3(v) for v in obs.bbox],
        "conf": float(obs.confidence),
        "landmarks": [[_round3(x), _round3(y)] for x, y in obs.landmarks],
    }


def _dump_line(record: dict) -> str:
    return json.dumps(record, separators=(",", ":")) + "\n"


class _TextSink:
    """Adapt a path or text/byte stream into a text write target."""

    def __init__(self, dest):
        self._owned = None
        self._wrapper = None
        if isinstance(dest, (str, Path)):
            self._owned = open(dest, "w", encoding="utf-8", newline="")
            self.write = self._owned.write
        elif isinstance(dest, _stdio.TextIOBase) or hasattr(dest, "encoding"):
            self.write = dest.write
        else:
            self._wrapper = _stdio.TextIOWrapper(dest, encoding="utf-8", newline="")
            self.write = self._wrapper.write

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self._wrapper is not None:
            self._wrapper.flush()
            self._wrapper.detach()
        if self._owned is not None:
            self._owned.close()
        return False


def write_landmark_file(meta: VideoMeta, observations: Iterable[FaceObservation], dest) -> None:
    """Write a landmark file: header line, then one observation per line.

    Observations must be frame-ordered (non-decreasing).  Output is
    deterministic: identical input yields byte-identical files.
    """
    with _TextSink(dest) as sink:
        sink.write(_dump_line(_meta_record(meta)))
        last_frame = -1
        for obs in observations:
            if obs.frame < last_frame:
                raise ValueError(f"observations out of frame order: {obs.frame} after {last_frame}")
            last_frame = obs.frame
            sink.write(_dump_line(_obs_record(obs)))


def write_results(tracks: Iterable[PersonTrack], intervals: Iterable[SpeakingInterval], dest) -> None:
    """Write the detector results document.

    Persons appear sorted by ``person_id``; each person's intervals are
    sorted by ``start_frame``.  Every track is listed, including tracks with
    no speaking intervals.
    """
    by_person: dict[int, list[SpeakingInterval]] = {}
    for iv in intervals:
        by_person.setdefault(iv.person_id, []).append(iv)

    persons = []
    for track in sorted(tracks, key=lambda t: t.person_id):
        ivs = sorted(by_person.get(track.person_id, []), key=lambda iv: iv.start_frame)
        persons.append(
            {
                "person_id": track.person_id,
                "first_frame": track.first_frame,
                "last_frame": track.last_frame,
                "intervals": [
                    {
                        "start_frame": iv.start_frame,
                        "end_frame": iv.end_frame,
                        "start_s": iv.start_s,
                        "end_s": iv.end_s,
                    }
                    for iv in ivs
                ],
            }
        )

    with _TextSink(dest) as sink:
        sink.write(json.dumps({"persons": persons}, indent=2))
        sink.write("\n")


def _fmt_signal(value: float) -> str:
    return "" if not np.isfinite(value) else format(value, ".9g")


def write_debug_signals(track_id: int, signal, dest) -> None:
    """Dump a track's per-frame lip signal as CSV for offline plotting.

    One row per frame of the track's range with columns
    ``frame,time_s,t,b,t_smooth,b_smooth,d,e,c,valid``.  Frames without
    evidence keep their row with ``valid=0`` and empty signal cells.
    """
    del track_id  # identification lives in the output path; columns are fixed
    with _TextSink(dest) as sink:
        sink.write(",".join(DEBUG_SIGNAL_COLUMNS) + "\n")
        for i in range(signal.n_frames):
            frame = signal.first_frame + i
            valid = bool(signal.valid[i])
            cells = [str(frame), format(frame / signal.fps, ".9g")]
            for series in (signal.t, signal.b, signal.t_smooth, signal.b_smooth, signal.d, signal.e, signal.c):
                cells.append(_fmt_signal(series[i]) if valid else "")
            cells.append("1" if valid else "0")
            sink.write(",".join(cells) + "\n")
