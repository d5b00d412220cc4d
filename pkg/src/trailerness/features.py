"""Feature ingestion, shot-level pooling, and synthetic dataset generation.

Feature files are a small binary format: magic ``TRLF``, a version byte, a
modality byte, a scale byte, little-endian uint32 D and N, then N*D
little-endian float32 values row-major.

The synthetic generator plants ground truth: an episode is a sequence of
shots rendered as smooth drifting wave textures with high-contrast cuts, a
subset of whole shots is designated trailer material, the trailer archive is
a verbatim (optionally salt-and-pepper noised) copy of those frames, and unit
features are standard Gaussians with a mean shift on positive units.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import hashmatch
from . import timeline as tl
from .errors import (
    BadMagicError,
    CountMismatchError,
    FileFormatError,
    InvalidInputError,
    NonFiniteValuesError,
    TruncatedPayloadError,
)

MAGIC = b"TRLF"
FORMAT_VERSION = 1

MODALITY_CODES = {"visual": 0, "textual": 1, "fused": 2}
SCALE_CODES = {"clip": 0, "shot": 1, "frame": 2}
_MODALITY_NAMES = {v: k for k, v in MODALITY_CODES.items()}
_SCALE_NAMES = {v: k for k, v in SCALE_CODES.items()}

MODALITIES = ("visual", "textual")
SCALES = ("clip", "shot")
STREAMS = tuple(f"{m}_{s}" for s in SCALES for m in MODALITIES)


def stream_key(modality: str, scale: str) -> str:
    if modality not in MODALITIES or scale not in SCALES:
        raise InvalidInputError(f"unknown stream ({modality}, {scale})")
    return f"{modality}_{scale}"


def split_stream_key(key: str) -> tuple[str, str]:
    modality, _, scale = key.partition("_")
    stream_key(modality, scale)
    return modality, scale


@dataclass
class FeatureSequence:
    """N units x D values for one (modality, scale) stream."""

    modality: str
    scale: str
    matrix: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        if self.modality not in MODALITY_CODES:
            raise InvalidInputError(f"unknown modality {self.modality!r}")
        if self.scale not in SCALE_CODES:
            raise InvalidInputError(f"unknown scale {self.scale!r}")
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2:
            raise InvalidInputError("feature matrix must be 2-D (units x dims)")
        if not np.isfinite(self.matrix).all():
            raise NonFiniteValuesError("feature matrix contains NaN or Inf")

    @property
    def n_units(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])


def save_features(path, fs: FeatureSequence) -> None:
    n, d = fs.matrix.shape
    header = MAGIC + struct.pack(
        "<BBBII",
        FORMAT_VERSION,
        MODALITY_CODES[fs.modality],
        SCALE_CODES[fs.scale],
        d,
        n,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(fs.matrix, dtype="<f4").tobytes())


def load_features(path, video: tl.VideoTimeline | None = None) -> FeatureSequence:
    """Load and validate a feature file.

    When ``video`` is given, the unit count must match the unit count of the
    file's scale in that timeline.
    """
    data = Path(path).read_bytes()
    if len(data) < 15:
        raise TruncatedPayloadError(f"{path}: shorter than the 15-byte header")
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}")
    version, modality_code, scale_code, d, n = struct.unpack("<BBBII", data[4:15])
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if modality_code not in _MODALITY_NAMES or scale_code not in _SCALE_NAMES:
        raise FileFormatError(
            f"{path}: bad modality/scale bytes ({modality_code}, {scale_code})"
        )
    expected = 4 * d * n
    payload = data[15:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload {len(payload)} bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise FileFormatError(f"{path}: {len(payload) - expected} trailing bytes")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    if not np.isfinite(matrix).all():
        raise NonFiniteValuesError(f"{path}: payload contains NaN or Inf")
    scale = _SCALE_NAMES[scale_code]
    if video is not None and scale in SCALES:
        expected_n = video.unit_count(scale)
        if n != expected_n:
            raise CountMismatchError(
                f"{path}: {n} units but timeline has {expected_n} {scale} units"
            )
    return FeatureSequence(
        modality=_MODALITY_NAMES[modality_code],
        scale=scale,
        matrix=matrix.copy(),
        provenance=str(path),
    )


def pool_shot_features(clip_feats: FeatureSequence, video: tl.VideoTimeline) -> FeatureSequence:
    """Shot features as the arithmetic mean of midpoint-assigned clip rows.

    Means are accumulated in float64 and stored at float32. A shot owning no
    clip midpoint falls back to the mean of the clips overlapping it.
    """
    if clip_feats.scale != "clip":
        raise InvalidInputError("pool_shot_features expects clip-scale features")
    clip_bounds = video.clip_bounds
    if clip_feats.n_units != clip_bounds.shape[0]:
        raise CountMismatchError(
            f"{clip_feats.n_units} clip rows but timeline has {clip_bounds.shape[0]} clips"
        )
    shot_bounds = video.shot_bounds
    owner = tl.assign_clips_to_shots(clip_bounds, shot_bounds)
    x = clip_feats.matrix.astype(np.float64)
    n_shots = shot_bounds.shape[0]
    sums = np.zeros((n_shots, x.shape[1]))
    np.add.at(sums, owner, x)
    counts = np.bincount(owner, minlength=n_shots).astype(np.float64)

    out = np.empty_like(sums)
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled, None]
    for s in np.flatnonzero(~filled):
        s0, s1 = shot_bounds[s]
        overlap = (clip_bounds[:, 0] < s1) & (s0 < clip_bounds[:, 1])
        out[s] = x[overlap].mean(axis=0)
    return FeatureSequence(
        modality=clip_feats.modality,
        scale="shot",
        matrix=out.astype(np.float32),
        provenance=f"pooled({clip_feats.provenance})",
    )


# ---------------------------------------------------------------------------
# synthetic data with planted ground truth
# ---------------------------------------------------------------------------

MIN_SHOT_LEN = 8
_LOW_BAND = (55.0, 80.0)
_HIGH_BAND = (170.0, 200.0)
_RIDGE_STEP = 12.0
_RIDGE_MAX = 36.0
DEFAULT_CUT_THRESHOLD = 20.0


@dataclass
class SynthConfig:
    n_frames: int = 1920
    n_shots: int = 12
    trailer_fraction: float = 0.2
    signal_strength: float = 1.0
    noise_rate: float = 0.0
    d_visual: int = 16
    d_text: int = 12
    frame_height: int = 64
    frame_width: int = 64
    clip_len: int = tl.CLIP_LEN
    fps: float = tl.DEFAULT_FPS

    def validate(self) -> None:
        if min(self.n_frames, self.n_shots, self.d_visual, self.d_text) < 1:
            raise InvalidInputError("frame, shot, and dimension counts must be positive")
        if self.n_shots < 2:
            raise InvalidInputError("need at least 2 shots (one planted, one not)")
        if not 0.0 < self.trailer_fraction < 1.0:
            raise InvalidInputError("trailer_fraction must be in (0, 1)")
        if self.signal_strength < 0 or not 0.0 <= self.noise_rate <= 1.0:
            raise InvalidInputError("bad signal_strength or noise_rate")
        if self.frame_height < 8 or self.frame_width < 9:
            raise InvalidInputError("frames must be at least 9x8 for hashing")

    def planted_shot_count(self) -> int:
        return min(max(1, round(self.n_shots * self.trailer_fraction)), self.n_shots - 1)

    def planted_frame_count(self) -> int:
        return int(round(self.trailer_fraction * self.n_frames))


@dataclass
class SyntheticEpisode:
    config: SynthConfig
    seed: int
    frames: np.ndarray
    trailer_frames: np.ndarray
    trailer_source_indices: np.ndarray
    video: tl.VideoTimeline
    subtitles: tl.SubtitleTrack
    frame_labels: np.ndarray
    clip_labels: np.ndarray
    shot_labels: np.ndarray
    features: dict[str, FeatureSequence]


def _ridge_mosaic(rng) -> np.ndarray:
    """An 8x9 cell pattern whose horizontally adjacent cells always differ by
    at least one lattice step, with signs drawn independently per cell."""
    levels = np.arange(-_RIDGE_MAX, _RIDGE_MAX + 1, _RIDGE_STEP)
    steps = np.array([-2.0, -1.0, 1.0, 2.0]) * _RIDGE_STEP
    mosaic = np.empty((8, 9))
    for r in range(8):
        v = float(levels[rng.integers(0, levels.size)])
        mosaic[r, 0] = v
        for c in range(1, 9):
            options = steps[(np.abs(v + steps) <= _RIDGE_MAX)]
            v += float(options[rng.integers(0, options.size)])
            mosaic[r, c] = v
    return mosaic


def _composition(total: int, parts: int, min_len: int, rng) -> np.ndarray:
    """Random composition of ``total`` into ``parts`` parts, each >= min_len."""
    extra = total - parts * min_len
    if extra < 0:
        raise InvalidInputError(
            f"cannot split {total} frames into {parts} shots of >= {min_len}"
        )
    if parts == 1:
        return np.array([total], dtype=np.int64)
    cutpoints = np.sort(rng.integers(0, extra + 1, size=parts - 1))
    edges = np.concatenate(([0], cutpoints, [extra]))
    return np.diff(edges) + min_len


def _unit_labels_by_counting(frame_labels, bounds) -> np.ndarray:
    out = np.zeros(len(bounds), dtype=np.uint8)
    for i, (a, b) in enumerate(bounds):
        pos = 0
        for j in range(a, b):
            pos += int(frame_labels[j])
        if 3 * pos >= b - a:
            out[i] = 1
    return out


def _shot_labels_by_counting(clip_labels, clip_bounds, shot_bounds, frame_labels) -> np.ndarray:
    out = np.zeros(len(shot_bounds), dtype=np.uint8)
    for i, (s0, s1) in enumerate(shot_bounds):
        members = [
            k
            for k, (a, b) in enumerate(clip_bounds)
            if 2 * s0 <= a + b < 2 * s1
        ]
        if members:
            pos = sum(int(clip_labels[k]) for k in members)
            out[i] = 1 if 3 * pos >= len(members) else 0
        else:
            pos = sum(int(frame_labels[j]) for j in range(s0, s1))
            out[i] = 1 if 3 * pos >= s1 - s0 else 0
    return out


def synth_episode(config: SynthConfig, seed: int) -> SyntheticEpisode:
    """Deterministically generate one episode with planted trailer material."""
    config.validate()
    rng = np.random.default_rng(seed)
    n = config.n_frames
    h, w = config.frame_height, config.frame_width
    n_shots = config.n_shots

    target = config.planted_frame_count()
    k = config.planted_shot_count()
    if target < k * MIN_SHOT_LEN:
        raise InvalidInputError(
            f"trailer allocation of {target} frames cannot fill {k} shots"
        )
    if n - target < (n_shots - k) * MIN_SHOT_LEN:
        raise InvalidInputError("trailer fraction leaves too few body frames")

    planted_lengths = _composition(target, k, MIN_SHOT_LEN, rng)
    other_lengths = _composition(n - target, n_shots - k, MIN_SHOT_LEN, rng)
    planted_pos = np.sort(rng.choice(n_shots, size=k, replace=False))

    lengths = np.empty(n_shots, dtype=np.int64)
    planted_mask = np.zeros(n_shots, dtype=bool)
    planted_mask[planted_pos] = True
    lengths[planted_mask] = planted_lengths
    lengths[~planted_mask] = other_lengths
    edges = np.concatenate(([0], np.cumsum(lengths)))
    shot_bounds = np.stack([edges[:-1], edges[1:]], axis=1)

    # Per-shot texture: a base level alternating between dark and bright bands
    # (so every cut is a large brightness jump), a random ridge mosaic aligned
    # to the hash grid (horizontal cell gaps of at least one lattice step, and
    # an essentially independent 64-bit signature per shot), a vertical wave
    # drifting over time (temporal motion that cancels exactly in horizontal
    # cell comparisons), and per-frame pixel grain.
    high_first = bool(rng.random() < 0.5)
    levels = np.empty(n_shots)
    for s in range(n_shots):
        band = _HIGH_BAND if (s % 2 == 0) == high_first else _LOW_BAND
        levels[s] = rng.uniform(*band)
    mosaics = [_ridge_mosaic(rng) for _ in range(n_shots)]
    ay = rng.uniform(6.0, 12.0, size=n_shots)
    fy = rng.uniform(1.0, 3.0, size=n_shots)
    py = rng.uniform(0.0, 2 * np.pi, size=n_shots)
    wy = rng.uniform(0.05, 0.12, size=n_shots)

    frames = np.empty((n, h, w), dtype=np.uint8)
    row_map = np.arange(h) * 8 // h
    col_map = np.arange(w) * 9 // w
    yy = np.arange(h)[None, :, None] / h
    for s in range(n_shots):
        a, b = shot_bounds[s]
        t = np.arange(b - a)[:, None, None]
        mosaic_px = mosaics[s][row_map][:, col_map][None, :, :]
        wave = ay[s] * np.sin(2 * np.pi * fy[s] * yy + py[s] + wy[s] * t)
        detail = rng.integers(-3, 4, size=(b - a, h, w))
        block = np.rint(levels[s] + mosaic_px + wave + detail)
        frames[a:b] = np.clip(block, 0, 255).astype(np.uint8)

    frame_labels = np.zeros(n, dtype=np.uint8)
    for s in planted_pos:
        frame_labels[shot_bounds[s, 0] : shot_bounds[s, 1]] = 1
    trailer_idx = np.flatnonzero(frame_labels)
    trailer_frames = frames[trailer_idx].copy()
    if config.noise_rate > 0:
        flip = rng.random(trailer_frames.shape) < config.noise_rate
        salt = rng.random(trailer_frames.shape) < 0.5
        noisy = np.where(salt, 0, 255).astype(np.uint8)
        trailer_frames = np.where(flip, noisy, trailer_frames)

    video = tl.VideoTimeline(
        frame_count=n,
        fps=config.fps,
        clip_len=config.clip_len,
        cuts=tl.bounds_to_cuts(shot_bounds),
        shot_source="ingested",
    )
    clip_bounds = video.clip_bounds
    clip_labels = _unit_labels_by_counting(frame_labels, clip_bounds)
    shot_labels = _shot_labels_by_counting(
        clip_labels, clip_bounds, shot_bounds, frame_labels
    )

    feats: dict[str, FeatureSequence] = {}
    for modality, dim in (("visual", config.d_visual), ("textual", config.d_text)):
        for scale, labels in (("clip", clip_labels), ("shot", shot_labels)):
            m = rng.standard_normal((labels.size, dim))
            m = m + config.signal_strength * labels[:, None]
            feats[stream_key(modality, scale)] = FeatureSequence(
                modality=modality,
                scale=scale,
                matrix=m.astype(np.float32),
                provenance=f"synthetic(seed={seed})",
            )

    entries = []
    for i, (a, b) in enumerate(clip_bounds):
        if clip_labels[i] == 0 and rng.random() < 0.3:
            continue
        n_tok = 2 + int(rng.poisson(4.0 if clip_labels[i] else 1.0))
        words = " ".join(f"tok{rng.integers(0, 9999)}" for _ in range(n_tok))
        span = int(b - a)
        start = int(a) + int(rng.integers(0, max(1, span // 4)))
        end = min(start + int(rng.integers(max(1, span // 3), max(2, span))), n)
        if end > start:
            entries.append((start, end, words))
    subtitles = tl.SubtitleTrack(entries)

    return SyntheticEpisode(
        config=config,
        seed=seed,
        frames=frames,
        trailer_frames=trailer_frames,
        trailer_source_indices=trailer_idx,
        video=video,
        subtitles=subtitles,
        frame_labels=frame_labels,
        clip_labels=clip_labels,
        shot_labels=shot_labels,
        features=feats,
    )


# ---------------------------------------------------------------------------
# dataset manifests
# ---------------------------------------------------------------------------

MANIFEST_FORMAT = "trailerness-manifest-v1"
SPLITS = ("train", "val", "test")


def split_counts(n: int) -> tuple[int, int, int]:
    """60/20/20 split sizes: train share rounded half up, validation share
    floored, remainder to test."""
    if n < 1:
        raise InvalidInputError("need at least one episode")
    train = int(np.floor(0.6 * n + 0.5))
    val = int(np.floor(0.2 * n))
    return train, val, n - train - val


def split_assignment(n: int) -> list[str]:
    train, val, _ = split_counts(n)
    return ["train"] * train + ["val"] * val + ["test"] * (n - train - val)


@dataclass
class EpisodeRecord:
    id: str
    split: str
    frame_count: int
    root: Path
    timeline_path: Path
    subtitles_path: Path
    labels_path: Path
    feature_paths: dict[str, Path]
    frames_dir: Path | None = None
    trailer_dir: Path | None = None

    def load_timeline(self) -> tl.VideoTimeline:
        return tl.load_timeline(self.timeline_path)


@dataclass
class Manifest:
    path: Path
    seed: int
    fps: float
    clip_len: int
    cut_threshold: float
    config: dict
    episodes: list[EpisodeRecord] = field(default_factory=list)

    def episodes_in(self, split: str | None) -> list[EpisodeRecord]:
        if split is None or split == "all":
            return list(self.episodes)
        if split not in SPLITS:
            raise InvalidInputError(f"unknown split {split!r}")
        return [e for e in self.episodes if e.split == split]


def build_dataset(
    out_dir,
    config: SynthConfig,
    episodes: int = 63,
    seed: int = 0,
    write_frames: bool = True,
) -> Path:
    """Generate a full dataset on disk and return the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    assignment = split_assignment(episodes)

    records = []
    for idx in range(episodes):
        ep_seed = int(np.random.SeedSequence((seed, idx)).generate_state(1)[0])
        ep = synth_episode(config, ep_seed)
        ep_id = f"ep{idx:03d}"
        ep_dir = out_dir / "episodes" / ep_id
        ep_dir.mkdir(parents=True, exist_ok=True)

        rel = f"episodes/{ep_id}"
        tl.save_timeline(ep_dir / "timeline.json", ep.video)
        tl.write_subtitles_jsonl(ep_dir / "subtitles.jsonl", ep.subtitles)
        hashmatch.write_label_runs(ep_dir / "labels.jsonl", ep.frame_labels)
        feature_rel = {}
        for key, fs in ep.features.items():
            fname = f"features_{key}.trlf"
            save_features(ep_dir / fname, fs)
            feature_rel[key] = f"{rel}/{fname}"
        rec = {
            "id": ep_id,
            "split": assignment[idx],
            "frame_count": ep.config.n_frames,
            "seed": ep_seed,
            "timeline": f"{rel}/timeline.json",
            "subtitles": f"{rel}/subtitles.jsonl",
            "labels": f"{rel}/labels.jsonl",
            "features": feature_rel,
            "frames_dir": None,
            "trailer_dir": None,
        }
        if write_frames:
            hashmatch.write_frames_dir(ep_dir / "frames", ep.frames)
            hashmatch.write_frames_dir(ep_dir / "trailer", ep.trailer_frames)
            rec["frames_dir"] = f"{rel}/frames"
            rec["trailer_dir"] = f"{rel}/trailer"
        records.append(rec)

    doc = {
        "format": MANIFEST_FORMAT,
        "seed": seed,
        "fps": config.fps,
        "clip_len": config.clip_len,
        "cut_threshold": DEFAULT_CUT_THRESHOLD,
        "config": asdict(config),
        "episodes": records,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8")
    return manifest_path


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: cannot read manifest ({exc})") from exc
    if doc.get("format") != MANIFEST_FORMAT:
        raise BadMagicError(f"{path}: not a {MANIFEST_FORMAT} file")
    root = path.parent
    episodes = []
    for rec in doc["episodes"]:
        episodes.append(
            EpisodeRecord(
                id=rec["id"],
                split=rec["split"],
                frame_count=rec["frame_count"],
                root=root,
                timeline_path=root / rec["timeline"],
                subtitles_path=root / rec["subtitles"],
                labels_path=root / rec["labels"],
                feature_paths={k: root / v for k, v in rec["features"].items()},
                frames_dir=root / rec["frames_dir"] if rec.get("frames_dir") else None,
                trailer_dir=root / rec["trailer_dir"] if rec.get("trailer_dir") else None,
            )
        )
    return Manifest(
        path=path,
        seed=doc["seed"],
        fps=doc["fps"],
        clip_len=doc["clip_len"],
        cut_threshold=doc.get("cut_threshold", DEFAULT_CUT_THRESHOLD),
        config=doc.get("config", {}),
        episodes=episodes,
    )
