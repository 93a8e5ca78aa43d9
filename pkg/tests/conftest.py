import numpy as np
import pytest

from lipdet.core import FaceObservation, PersonTrack, VideoMeta
from lipdet.synth import face_template


def make_landmarks(height=200.0, center=(400.0, 300.0), overrides=None):
    """A plausible 68-point set: the neutral template scaled and placed.

    ``overrides`` maps landmark index to an (x, y) pair applied afterwards.
    """
    pts = face_template() * height + np.asarray(center, dtype=np.float64)
    pts = pts.copy()
    if overrides:
        for idx, xy in overrides.items():
            pts[idx] = xy
    return pts


def make_obs(frame, fps=25.0, height=200.0, center=(400.0, 300.0), overrides=None, confidence=0.9):
    pts = make_landmarks(height=height, center=center, overrides=overrides)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return FaceObservation.at(
        frame=frame, fps=fps, bbox=(x0, y0, x1 - x0, y1 - y0), confidence=confidence, landmarks=pts
    )


def static_track(person_id=0, frames=range(10), fps=25.0, height=200.0, center=(400.0, 300.0)):
    obs = tuple(make_obs(f, fps=fps, height=height, center=center) for f in frames)
    return PersonTrack(person_id=person_id, observations=obs)


@pytest.fixture
def meta():
    return VideoMeta(fps=25.0, width=1920, height=1080)
