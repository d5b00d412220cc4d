"""Frame-level lifting of unit predictions and late fusion by averaging.

Unit scores are upsampled to frames by piecewise-constant replication; any
nonempty set of frame tracks is fused with an unweighted frame-wise mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features, timeline as tl
from .errors import InvalidInputError

@dataclass
class FrameScoreTrack:
    """Per-frame trailerness likelihoods plus the contributing stream tags."""

    scores: np.ndarray
    streams: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.streams = tuple(sorted(set(self.streams)))

    @property
    def frame_count(self) -> int:
        return int(self.scores.size)


def upsample_to_frames(scores, bounds, frame_count: int, streams=()) -> FrameScoreTrack:
    """Replicate each unit score over its [start, end) frame interval."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    bounds = tl.validate_tiling(bounds, frame_count)
    if scores.size != bounds.shape[0]:
        raise InvalidInputError(
            f"{scores.size} scores for {bounds.shape[0]} intervals"
        )
    out = np.repeat(scores, bounds[:, 1] - bounds[:, 0])
    return FrameScoreTrack(out, streams)


def _pairwise_sum(tracks: list[np.ndarray]) -> np.ndarray:
    # balanced tree keeps the mean of k identical tracks bitwise exact for
    # power-of-two k
    if len(tracks) == 1:
        return tracks[0].copy()
    mid = len(tracks) // 2
    return _pairwise_sum(tracks[:mid]) + _pairwise_sum(tracks[mid:])


def fuse(tracks) -> FrameScoreTrack:
    """Frame-wise arithmetic mean of the given tracks; contributing stream
    tags are unioned."""
    tracks = list(tracks)
    if not tracks:
        raise InvalidInputError("cannot fuse an empty track set")
    n = tracks[0].frame_count
    for t in tracks:
        if t.frame_count != n:
            raise InvalidInputError(
                f"track lengths differ: {t.frame_count} vs {n}"
            )
    total = _pairwise_sum([t.scores for t in tracks])
    streams = tuple(tag for t in tracks for tag in t.streams)
    return FrameScoreTrack(total / len(tracks), streams)


def save_track(path, track: FrameScoreTrack) -> None:
    """Store as the feature binary layout with D=1 plus a JSON sidecar naming
    the contributing streams."""
    path = Path(path)
    fs = features.FeatureSequence(
        modality="fused",
        scale="frame",
        matrix=track.scores[:, None].astype(np.float32),
    )
    features.save_features(path, fs)
    sidecar = {"streams": list(track.streams), "frame_count": track.frame_count}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_track(path) -> FrameScoreTrack:
    path = Path(path)
    fs = features.load_features(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    streams: tuple[str, ...] = ()
    if sidecar_path.exists():
        streams = tuple(json.loads(sidecar_path.read_text(encoding="utf-8"))["streams"])
    return FrameScoreTrack(fs.matrix[:, 0].astype(np.float64), streams)
