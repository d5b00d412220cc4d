"""Video segmentation into clips and shots, label aggregation, subtitle alignment.

Clips are fixed 64-frame units (with a shorter final remainder kept as its own
unit); shots are variable-length units bounded by detected cuts. A unit is
positive iff at least one third of its sub-units are positive, evaluated in
exact integer arithmetic.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FileFormatError, InvalidInputError

log = logging.getLogger(__name__)

CLIP_LEN = 64
DEFAULT_FPS = 25.0


def validate_tiling(bounds: np.ndarray, frame_count: int) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=np.int64).reshape(-1, 2)
    if bounds.size == 0:
        raise InvalidInputError("empty interval list")
    if bounds[0, 0] != 0 or bounds[-1, 1] != frame_count:
        raise InvalidInputError(
            f"intervals must tile [0, {frame_count}), got {bounds[0, 0]}..{bounds[-1, 1]}"
        )
    if np.any(bounds[:, 1] <= bounds[:, 0]) or np.any(bounds[1:, 0] != bounds[:-1, 1]):
        raise InvalidInputError("intervals must be nonempty, sorted, and contiguous")
    return bounds


def segment_clips(frame_count: int, clip_len: int = CLIP_LEN) -> np.ndarray:
    """Consecutive half-open [start, end) clip intervals of fixed length.

    A final partial clip shorter than ``clip_len`` is kept as its own unit.
    """
    if frame_count < 1:
        raise InvalidInputError("frame_count must be >= 1")
    if clip_len < 1:
        raise InvalidInputError("clip_len must be >= 1")
    starts = np.arange(0, frame_count, clip_len, dtype=np.int64)
    ends = np.minimum(starts + clip_len, frame_count)
    return np.stack([starts, ends], axis=1)


def detect_shots_naive(frames: np.ndarray, cut_threshold: float) -> np.ndarray:
    """Shot intervals from mean absolute frame difference.

    A cut is declared between frames j and j+1 iff the mean absolute pixel
    difference exceeds ``cut_threshold``.
    """
    frames = np.asarray(frames)
    if frames.ndim != 3 or frames.shape[0] == 0:
        raise InvalidInputError("expected a nonempty (F, H, W) frame stack")
    if frames.shape[0] == 1:
        return np.array([[0, 1]], dtype=np.int64)
    a = frames.astype(np.int16)
    diffs = np.abs(a[1:] - a[:-1]).mean(axis=(1, 2))
    cuts = np.flatnonzero(diffs > cut_threshold) + 1
    return cuts_to_bounds(cuts, frames.shape[0])


def cuts_to_bounds(cuts, frame_count: int) -> np.ndarray:
    """Convert cut indices (cut at j = boundary between j-1 and j) to intervals."""
    cuts = np.asarray(cuts, dtype=np.int64).reshape(-1)
    if np.any(cuts <= 0) or np.any(cuts >= frame_count):
        raise InvalidInputError("cut indices must lie strictly inside (0, frame_count)")
    edges = np.concatenate(([0], np.unique(cuts), [frame_count]))
    return np.stack([edges[:-1], edges[1:]], axis=1)


def bounds_to_cuts(bounds: np.ndarray) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=np.int64).reshape(-1, 2)
    return bounds[1:, 0].copy()


def aggregate_labels(frame_labels: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """One-third rule over frames: unit = 1 iff 3 * positives >= unit size."""
    frame_labels = np.asarray(frame_labels)
    bounds = validate_tiling(bounds, frame_labels.size)
    csum = np.concatenate(([0], np.cumsum(frame_labels, dtype=np.int64)))
    pos = csum[bounds[:, 1]] - csum[bounds[:, 0]]
    size = bounds[:, 1] - bounds[:, 0]
    return (3 * pos >= size).astype(np.uint8)


def assign_clips_to_shots(clip_bounds: np.ndarray, shot_bounds: np.ndarray) -> np.ndarray:
    """Shot index owning each clip, by clip midpoint.

    Clip [a, b) belongs to the shot whose interval contains (a + b) / 2; with
    tiling shot intervals every clip gets exactly one shot.
    """
    clip_bounds = np.asarray(clip_bounds, dtype=np.int64)
    shot_bounds = np.asarray(shot_bounds, dtype=np.int64)
    mid2 = clip_bounds[:, 0] + clip_bounds[:, 1]  # 2x midpoint, exact
    return np.searchsorted(2 * shot_bounds[:, 1], mid2, side="right").astype(np.int64)


def aggregate_shot_labels(
    clip_labels: np.ndarray,
    clip_bounds: np.ndarray,
    shot_bounds: np.ndarray,
    frame_labels: np.ndarray,
) -> np.ndarray:
    """One-third rule over the clips midpoint-assigned to each shot.

    A shot that owns no clip midpoint (possible for very short shots) falls
    back to the one-third rule over its own frames.
    """
    clip_labels = np.asarray(clip_labels)
    shot_bounds = np.asarray(shot_bounds, dtype=np.int64)
    owner = assign_clips_to_shots(clip_bounds, shot_bounds)
    n_shots = shot_bounds.shape[0]
    totals = np.bincount(owner, minlength=n_shots)
    positives = np.bincount(owner, weights=clip_labels.astype(np.float64), minlength=n_shots)
    positives = np.rint(positives).astype(np.int64)

    out = np.zeros(n_shots, dtype=np.uint8)
    filled = totals > 0
    out[filled] = (3 * positives[filled] >= totals[filled]).astype(np.uint8)
    if not filled.all():
        frame_labels = np.asarray(frame_labels)
        csum = np.concatenate(([0], np.cumsum(frame_labels, dtype=np.int64)))
        for s in np.flatnonzero(~filled):
            a, b = shot_bounds[s]
            out[s] = 1 if 3 * (csum[b] - csum[a]) >= b - a else 0
    return out


# ---------------------------------------------------------------------------
# timeline container
# ---------------------------------------------------------------------------


@dataclass
class VideoTimeline:
    frame_count: int
    fps: float = DEFAULT_FPS
    clip_len: int = CLIP_LEN
    cuts: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    shot_source: str = "ingested"

    def __post_init__(self):
        if self.frame_count < 1:
            raise InvalidInputError("frame_count must be >= 1")
        self.cuts = np.asarray(self.cuts, dtype=np.int64).reshape(-1)
        if self.shot_source not in ("ingested", "naive-detector"):
            raise InvalidInputError(f"unknown shot_source {self.shot_source!r}")

    @property
    def clip_bounds(self) -> np.ndarray:
        return segment_clips(self.frame_count, self.clip_len)

    @property
    def shot_bounds(self) -> np.ndarray:
        return cuts_to_bounds(self.cuts, self.frame_count)

    def bounds(self, scale: str) -> np.ndarray:
        if scale == "clip":
            return self.clip_bounds
        if scale == "shot":
            return self.shot_bounds
        raise InvalidInputError(f"unknown scale {scale!r}")

    def unit_count(self, scale: str) -> int:
        return int(self.bounds(scale).shape[0])


def save_timeline(path, tl: VideoTimeline) -> None:
    doc = {
        "frame_count": tl.frame_count,
        "fps": tl.fps,
        "clip_len": tl.clip_len,
        "cuts": [int(c) for c in tl.cuts],
        "shot_source": tl.shot_source,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_timeline(path) -> VideoTimeline:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return VideoTimeline(
            frame_count=doc["frame_count"],
            fps=doc["fps"],
            clip_len=doc["clip_len"],
            cuts=np.array(doc["cuts"], dtype=np.int64),
            shot_source=doc["shot_source"],
        )
    except (KeyError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: bad timeline file ({exc})") from exc


def save_cuts(path, cuts) -> None:
    """Shot boundaries as a JSON array of cut frame indices."""
    Path(path).write_text(json.dumps([int(c) for c in cuts]) + "\n", encoding="utf-8")


def load_cuts(path) -> np.ndarray:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return np.asarray(doc, dtype=np.int64)


# ---------------------------------------------------------------------------
# subtitles
# ---------------------------------------------------------------------------


@dataclass
class SubtitleTrack:
    """Subtitle entries as (start_frame, end_frame_exclusive, text), sorted by start."""

    entries: list[tuple[int, int, str]] = field(default_factory=list)

    def __post_init__(self):
        for s, e, _ in self.entries:
            if s >= e:
                raise InvalidInputError(f"subtitle with start {s} >= end {e}")
        self.entries = sorted(self.entries, key=lambda t: (t[0], t[1]))


def align_subtitles(subs: SubtitleTrack, bounds: np.ndarray, frame_count: int) -> list[str]:
    """Per-unit concatenation of every subtitle with temporal overlap.

    Overlap is any nonempty intersection; texts are joined in start order with
    single spaces. Units with no overlapping subtitle get the empty string.
    """
    bounds = validate_tiling(bounds, frame_count)
    parts: list[list[str]] = [[] for _ in range(bounds.shape[0])]
    for s, e, text in subs.entries:
        if e > frame_count:
            log.warning("subtitle [%d, %d) extends past frame %d; clamping", s, e, frame_count)
            e = frame_count
            if s >= e:
                continue
        first = int(np.searchsorted(bounds[:, 1], s, side="right"))
        last = int(np.searchsorted(bounds[:, 0], e, side="left"))
        for u in range(first, last):
            parts[u].append(text)
    return [" ".join(p) for p in parts]


_SRT_TIME = re.compile(
    r"(\d+):(\d{1,2}):(\d{1,2})[,.](\d{1,3})\s*-->\s*(\d+):(\d{1,2}):(\d{1,2})[,.](\d{1,3})"
)


def _frame_of(h, m, s, ms, fps: float) -> int:
    seconds = int(h) * 3600 + int(m) * 60 + int(s) + int(ms.ljust(3, "0")) / 1000.0
    return int(math.floor(seconds * fps + 0.5))  # round half up


def subtitles_from_srt(text: str, fps: float = DEFAULT_FPS) -> SubtitleTrack:
    """Parse an SRT subset (index, timestamp line, text lines, blank separator)."""
    entries = []
    for block in re.split(r"\n\s*\n", text.strip()):
        lines = [ln.strip("﻿").strip() for ln in block.splitlines() if ln.strip()]
        if not lines:
            continue
        if lines[0].isdigit():
            lines = lines[1:]
        if not lines:
            continue
        m = _SRT_TIME.match(lines[0])
        if m is None:
            raise FileFormatError(f"bad SRT timestamp line: {lines[0]!r}")
        start = _frame_of(m[1], m[2], m[3], m[4], fps)
        end = _frame_of(m[5], m[6], m[7], m[8], fps)
        body = " ".join(lines[1:])
        if end <= start:
            log.warning("dropping SRT entry collapsing to zero frames at %s", lines[0])
            continue
        entries.append((start, end, body))
    return SubtitleTrack(entries)


def write_subtitles_jsonl(path, subs: SubtitleTrack) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s, e, text in subs.entries:
            fh.write(
                json.dumps({"start_frame": int(s), "end_frame": int(e), "text": text}) + "\n"
            )


def read_subtitles_jsonl(path) -> SubtitleTrack:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entries.append((int(rec["start_frame"]), int(rec["end_frame"]), rec["text"]))
    return SubtitleTrack(entries)
