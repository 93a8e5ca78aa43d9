"""Command-line interface: detect / track / synth / signals subcommands.

Temporal flags take seconds and are converted through the input header's
fps, so configurations carry across frame rates.  Data goes to the path
given with -o (or stdout with `-o -`); logs go to stderr.  Exit codes:
0 success, 1 internal error, 2 input validation, 3 configuration.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

from lipdet.core import ConfigError, DegenerateFace, DetectorConfig, LipdetError, TrackerParams
from lipdet.detector import InvalidWindow, analyze_track
from lipdet.io import LandmarkFileError, read_landmark_file, write_debug_signals, write_landmark_file, write_results
from lipdet.synth import SceneSpec, FaceSpec, SpecError, generate_scene, load_scene_spec, write_truth
from lipdet.tracking import build_tracks

log = logging.getLogger("lipdet")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_CONFIG = 3

_DEFAULTS = DetectorConfig()


def _add_detector_flags(parser):
    parser.add_argument("--config", metavar="FILE", help="JSON config file; flags override its values")
    parser.add_argument("--threshold", type=float, metavar="T",
                        help=f"detection threshold in face heights (default: {_DEFAULTS.threshold_T})")
    parser.add_argument("--window-s", type=float, metavar="S",
                        help=f"smoothing/accumulation window in seconds (default: {_DEFAULTS.window_s} s)")
    parser.add_argument("--merge-gap-s", type=float, metavar="S",
                        help=f"merge speaking runs separated by gaps up to this many seconds (default: {_DEFAULTS.merge_gap_s} s)")
    parser.add_argument("--min-dur-s", type=float, metavar="S",
                        help=f"drop intervals shorter than this many seconds (default: {_DEFAULTS.min_duration_s} s)")
    parser.add_argument("--interp-max-gap", type=int, metavar="FRAMES",
                        help=f"interpolate missing runs up to this many frames (default: {_DEFAULTS.interp_max_gap} frames)")
    _add_tracker_flags(parser)


def _add_tracker_flags(parser):
    parser.add_argument("--max-dist", type=float, metavar="F",
                        help=f"association gate as a fraction of face height (default: {_DEFAULTS.tracker.max_dist_factor})")
    parser.add_argument("--max-gap", type=int, metavar="FRAMES",
                        help=f"close tracks idle longer than this many frames (default: {_DEFAULTS.tracker.max_gap} frames)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipdet", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="increase log verbosity (stderr)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect speaking intervals per person")
    p.add_argument("-i", "--input", required=True, metavar="FILE", help="landmark file")
    p.add_argument("-o", "--output", required=True, metavar="FILE", help="results file ('-' for stdout)")
    _add_detector_flags(p)
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel per-track analyses (default: 1)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("track", help="group observations into person tracks")
    p.add_argument("-i", "--input", required=True, metavar="FILE", help="landmark file")
    p.add_argument("-o", "--output", required=True, metavar="FILE", help="track report ('-' for stdout)")
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    p.add_argument("--spec", metavar="FILE", help="scene spec file (JSON)")
    p.add_argument("-o", "--output", required=True, metavar="FILE", help="landmark file ('-' for stdout)")
    p.add_argument("--truth", required=True, metavar="FILE", help="ground-truth intervals file")
    p.add_argument("--seed", type=int, metavar="N", help="override the spec's RNG seed")
    p.add_argument("--fps", type=float, default=25.0, metavar="FPS", help="inline scene fps (default: 25)")
    p.add_argument("--duration-s", type=float, metavar="S", help="inline scene duration in seconds")
    p.add_argument("--speak", action="append", default=[], metavar="START:END",
                   help="inline speech segment in seconds, repeatable (e.g. --speak 2:4)")
    p.add_argument("--face-height", type=float, default=120.0, metavar="PX",
                   help="inline face height in pixels (default: 120)")
    p.add_argument("--amplitude", type=float, default=0.03, metavar="F",
                   help="inline lip amplitude in face heights (default: 0.03)")
    p.add_argument("--freq", type=float, default=4.0, metavar="HZ", help="inline lip frequency (default: 4 Hz)")
    p.add_argument("--noise", type=float, default=0.002, metavar="F",
                   help="inline landmark noise sigma in face heights (default: 0.002)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("signals", help="dump one person's per-frame lip signal as CSV")
    p.add_argument("-i", "--input", required=True, metavar="FILE", help="landmark file")
    p.add_argument("--person", type=int, required=True, metavar="ID", help="person id from the track report")
    p.add_argument("-o", "--output", required=True, metavar="FILE", help="CSV file ('-' for stdout)")
    _add_detector_flags(p)
    p.set_defaults(func=cmd_signals)

    return parser


def _load_config(args) -> DetectorConfig:
    values = asdict(_DEFAULTS)
    tracker = values.pop("tracker")

    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        file_tracker = doc.pop("tracker", {})
        if not isinstance(file_tracker, dict):
            raise ConfigError("config 'tracker' must be an object")
        for key, value in doc.items():
            if key not in values:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
        for key, value in file_tracker.items():
            if key not in tracker:
                raise ConfigError(f"unknown tracker config key {key!r}")
            tracker[key] = value

    flag_map = {
        "threshold": "threshold_T",
        "window_s": "window_s",
        "merge_gap_s": "merge_gap_s",
        "min_dur_s": "min_duration_s",
        "interp_max_gap": "interp_max_gap",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = value
    if getattr(args, "max_dist", None) is not None:
        tracker["max_dist_factor"] = args.max_dist
    if getattr(args, "max_gap", None) is not None:
        tracker["max_gap"] = args.max_gap

    try:
        return DetectorConfig(tracker=TrackerParams(**tracker), **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _out(path: str):
    return sys.stdout if path == "-" else path


def cmd_detect(args) -> int:
    config = _load_config(args)
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
    meta, observations = read_landmark_file(args.input)
    tracks = build_tracks(meta, observations, config.tracker)
    log.info("built %d tracks", len(tracks))

    def analyze(track):
        return analyze_track(track, meta, config)[1]

    if args.jobs == 1 or len(tracks) < 2:
        results = [analyze(t) for t in tracks]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(analyze, tracks))

    intervals = [iv for track_intervals in results for iv in track_intervals]
    write_results(tracks, intervals, _out(args.output))
    return EXIT_OK


def cmd_track(args) -> int:
    params = TrackerParams(
        max_dist_factor=args.max_dist if args.max_dist is not None else _DEFAULTS.tracker.max_dist_factor,
        max_gap=args.max_gap if args.max_gap is not None else _DEFAULTS.tracker.max_gap,
    )
    meta, observations = read_landmark_file(args.input)
    tracks = build_tracks(meta, observations, params)
    report = {
        "tracks": [
            {
                "person_id": t.person_id,
                "first_frame": t.first_frame,
                "last_frame": t.last_frame,
                "observations": len(t.observations),
            }
            for t in tracks
        ]
    }
    dest = _out(args.output)
    if dest is sys.stdout:
        json.dump(report, dest, indent=2)
        dest.write("\n")
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _parse_speak(flags) -> list[tuple[float, float]]:
    segments = []
    for item in flags:
        try:
            start, _, end = item.partition(":")
            segments.append((float(start), float(end)))
        except ValueError as exc:
            raise ConfigError(f"--speak expects START:END seconds, got {item!r}") from exc
    return segments


def cmd_synth(args) -> int:
    if args.spec:
        spec = load_scene_spec(args.spec)
        if args.seed is not None:
            spec = SceneSpec(
                fps=spec.fps, duration_s=spec.duration_s, faces=spec.faces,
                seed=args.seed, width=spec.width, height=spec.height,
            )
    else:
        if args.duration_s is None:
            raise ConfigError("either --spec or --duration-s is required")
        face = FaceSpec(
            path=((960.0, 540.0),),
            face_height_px=args.face_height,
            speech_segments=tuple(_parse_speak(args.speak)),
            lip_amplitude=args.amplitude,
            lip_freq_hz=args.freq,
            noise_sigma=args.noise,
        )
        spec = SceneSpec(
            fps=args.fps, duration_s=args.duration_s, faces=(face,),
            seed=args.seed if args.seed is not None else 0,
        )

    meta, observations, truth = generate_scene(spec)
    write_landmark_file(meta, observations, _out(args.output))
    write_truth(truth, spec, args.truth)
    log.info("generated %d observations for %d faces", len(observations), len(spec.faces))
    return EXIT_OK


def cmd_signals(args) -> int:
    config = _load_config(args)
    meta, observations = read_landmark_file(args.input)
    tracks = build_tracks(meta, observations, config.tracker)
    matches = [t for t in tracks if t.person_id == args.person]
    if not matches:
        known = ", ".join(str(t.person_id) for t in tracks) or "none"
        print(f"lipdet: person id {args.person} not found (known ids: {known})", file=sys.stderr)
        return EXIT_INPUT
    signal, _ = analyze_track(matches[0], meta, config)
    write_debug_signals(args.person, signal, _out(args.output))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidWindow) as exc:
        print(f"lipdet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LandmarkFileError, SpecError, DegenerateFace) as exc:
        print(f"lipdet: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"lipdet: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BrokenPipeError:
        return EXIT_OK
    except LipdetError as exc:
        print(f"lipdet: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - safety net
        log.exception("unhandled error")
        print(f"lipdet: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
