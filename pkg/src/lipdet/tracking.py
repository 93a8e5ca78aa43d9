"""Grouping per-frame face observations into per-person tracks.

Association is frame-by-frame greedy nearest-centroid matching on the
mouth-center distance, normalized by face height so one parameter set works
across resolutions.  Tracks idle for more than ``max_gap`` frames are
closed; their ids are never reused.
"""

from dataclasses import dataclass, field

import numpy as np

from lipdet.core import FaceObservation, LipdetError, PersonTrack, TrackerParams, VideoMeta, face_height, mouth_center


class FrameOrderError(LipdetError):
    """Observations were fed out of frame order."""


def association_distance(a, b) -> float:
    """Mouth-center distance between two landmark sets, in face heights.

    Euclidean distance between the mouth centers divided by the mean of the
    two face heights.  Symmetric, zero for identical sets.
    """
    gap = float(np.linalg.norm(mouth_center(a) - mouth_center(b)))
    return gap / (0.5 * (face_height(a) + face_height(b)))


@dataclass
class _ActiveTrack:
    track_id: int
    last_obs: FaceObservation
    observations: list[FaceObservation]

    @property
    def last_frame(self) -> int:
        return self.last_obs.frame


@dataclass
class TrackerState:
    """Mutable association state: active tracks plus the id counter."""

    params: TrackerParams = field(default_factory=TrackerParams)
    active: list[_ActiveTrack] = field(default_factory=list)
    closed: list[_ActiveTrack] = field(default_factory=list)
    next_id: int = 0

    def _expire(self, frame: int) -> None:
        still_active = []
        for track in self.active:
            if frame - track.last_frame > self.params.max_gap:
                self.closed.append(track)
            else:
                still_active.append(track)
        self.active = still_active

    def close_all(self) -> None:
        self.closed.extend(self.active)
        self.active = []


def associate_frame(state: TrackerState, frame_obs: list[FaceObservation]) -> dict[int, int]:
    """Assign one frame's observations to tracks, updating ``state`` in place.

    All observations must share one frame index strictly greater than every
    active track's last frame.  Matching is greedy: repeatedly take the
    globally smallest (track, observation) distance not exceeding
    ``max_dist_factor``, with ties broken toward the smaller track id and
    then the smaller observation index.  Unmatched observations open new
    tracks with fresh ids, in observation order.

    Returns a map from observation index (within ``frame_obs``) to track id.

    Raises
    ------
    FrameOrderError
        If the frame index is not ahead of all active tracks.
    """
    if not frame_obs:
        return {}
    frames = {obs.frame for obs in frame_obs}
    if len(frames) != 1:
        raise FrameOrderError(f"observations span multiple frames: {sorted(frames)}")
    frame = frame_obs[0].frame
    behind = [t.track_id for t in state.active if t.last_frame >= frame]
    if behind:
        raise FrameOrderError(f"frame {frame} is not ahead of active tracks {behind}")

    state._expire(frame)

    candidates = []
    for track in state.active:
        for obs_idx, obs in enumerate(frame_obs):
            dist = association_distance(track.last_obs.landmarks, obs.landmarks)
            if dist <= state.params.max_dist_factor:
                candidates.append((dist, track.track_id, obs_idx, track))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))

    assignments: dict[int, int] = {}
    taken_tracks: set[int] = set()
    for dist, track_id, obs_idx, track in candidates:
        if track_id in taken_tracks or obs_idx in assignments:
            continue
        assignments[obs_idx] = track_id
        taken_tracks.add(track_id)
        track.last_obs = frame_obs[obs_idx]
        track.observations.append(frame_obs[obs_idx])

    for obs_idx, obs in enumerate(frame_obs):
        if obs_idx not in assignments:
            track = _ActiveTrack(track_id=state.next_id, last_obs=obs, observations=[obs])
            state.next_id += 1
            state.active.append(track)
            assignments[obs_idx] = track.track_id

    return assignments


def build_tracks(
    meta: VideoMeta,
    observations,
    params: TrackerParams | None = None,
) -> list[PersonTrack]:
    """Fold greedy association over a frame-ordered observation stream.

    Every input observation lands in exactly one output track.  Tracks are
    returned sorted by first frame, then id; ids reflect creation order and
    are never reused.

    Raises
    ------
    FrameOrderError
        Propagated when the stream is not frame-ordered.
    """
    del meta  # tracking is resolution-free; the header travels with the caller
    state = TrackerState(params=params or TrackerParams())

    frame_obs: list[FaceObservation] = []
    current_frame = -1
    for obs in observations:
        if obs.frame != current_frame:
            if obs.frame < current_frame:
                raise FrameOrderError(f"frame {obs.frame} after frame {current_frame}")
            associate_frame(state, frame_obs)
            frame_obs = []
            current_frame = obs.frame
        frame_obs.append(obs)
    associate_frame(state, frame_obs)
    state.close_all()

    tracks = [
        PersonTrack(person_id=t.track_id, observations=tuple(t.observations))
        for t in state.closed
    ]
    tracks.sort(key=lambda t: (t.first_frame, t.person_id))
    return tracks
