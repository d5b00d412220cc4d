"""Frame hashing and editor-label generation by Hamming matching.

An episode frame is labeled trailer-worthy iff the minimum Hamming distance
between its 64-bit difference hash and any trailer-frame hash is strictly
below a threshold ``tau``.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    FileFormatError,
    InvalidInputError,
    TruncatedPayloadError,
)

SENTINEL = kernels.SENTINEL

_LUMA = np.array([0.299, 0.587, 0.114])


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """8-bit luma of an image; color input uses round(0.299R + 0.587G + 0.114B)."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise InvalidInputError(f"expected an 8-bit raster, got dtype {image.dtype}")
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 3:
        luma = np.rint(image.astype(np.float64) @ _LUMA)
        return luma.astype(np.uint8)
    raise InvalidInputError(f"expected HxW or HxWx3 image, got shape {image.shape}")


def _check_hashable(h: int, w: int) -> None:
    if h < kernels.HASH_ROWS or w < kernels.HASH_COLS:
        raise InvalidInputError(
            f"image {w}x{h} is smaller than the {kernels.HASH_COLS}x{kernels.HASH_ROWS} hash grid"
        )


def compute_dhash(image: np.ndarray) -> int:
    """64-bit difference hash of a single image (grayscale or RGB)."""
    gray = to_grayscale(image)
    _check_hashable(*gray.shape)
    return int(kernels.dhash_batch(gray[None, :, :])[0])


def hash_frames(frames: np.ndarray) -> np.ndarray:
    """Hash a (F, H, W) uint8 stack into a uint64 vector."""
    frames = np.asarray(frames)
    if frames.ndim != 3 or frames.shape[0] == 0:
        raise InvalidInputError(f"expected nonempty (F, H, W) stack, got {frames.shape}")
    if frames.dtype != np.uint8:
        raise InvalidInputError(f"expected an 8-bit stack, got dtype {frames.dtype}")
    _check_hashable(frames.shape[1], frames.shape[2])
    return kernels.dhash_batch(frames)


def hamming(a: int, b: int) -> int:
    """Number of differing bits between two 64-bit hashes."""
    return ((int(a) ^ int(b)) & 0xFFFFFFFFFFFFFFFF).bit_count()


def _as_hash_array(hashes, name: str) -> np.ndarray:
    arr = np.asarray(hashes, dtype=np.uint64).reshape(-1)
    if arr.size == 0:
        raise InvalidInputError(f"{name} hash sequence is empty")
    return arr


def _check_tau(tau: int) -> int:
    tau = int(tau)
    if not 0 <= tau <= 64:
        raise InvalidInputError(f"tau must be in [0, 64], got {tau}")
    return tau


def min_distance_table(episode, trailer) -> np.ndarray:
    """Exhaustive per-frame minimum Hamming distance to any trailer hash."""
    ep = _as_hash_array(episode, "episode")
    tr = _as_hash_array(trailer, "trailer")
    return kernels.min_distance_table(ep, tr)


def min_distance_table_mih(episode, trailer, tau: int) -> np.ndarray:
    """Accelerated distance table, exact for entries <= tau.

    Entries whose exhaustive minimum exceeds ``tau`` are reported as the
    integer sentinel ``SENTINEL`` (65).
    """
    ep = _as_hash_array(episode, "episode")
    tr = _as_hash_array(trailer, "trailer")
    return kernels.mih_min_distance_table(ep, tr, _check_tau(tau))


def label_frames(table: np.ndarray, tau: int) -> np.ndarray:
    """Binary frame labels: 1 iff the minimum distance is strictly below tau."""
    tau = _check_tau(tau)
    table = np.asarray(table)
    return (table < tau).astype(np.uint8)


# ---------------------------------------------------------------------------
# frame archives (PGM / PNG directories)
# ---------------------------------------------------------------------------

_FRAME_SUFFIXES = (".pgm", ".png")
_PGM_TOKEN = re.compile(rb"^(?:\s|#[^\n]*\n)*(\S+)")


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(image.tobytes())


def _read_pgm_token(data: bytes, pos: int) -> tuple[bytes, int]:
    m = _PGM_TOKEN.match(data[pos:])
    if m is None:
        raise TruncatedPayloadError("unexpected end of PGM header")
    return m.group(1), pos + m.end()


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, pos = _read_pgm_token(data, 0)
    if magic != b"P5":
        raise FileFormatError(f"{path}: not a binary PGM (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _read_pgm_token(data, pos)
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise FileFormatError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace after maxval
    pixels = data[pos : pos + w * h]
    if len(pixels) < w * h:
        raise TruncatedPayloadError(f"{path}: PGM payload shorter than {w}x{h}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)


def read_frame(path) -> np.ndarray:
    """Load one frame file (PGM or PNG) as an 8-bit grayscale array."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(path) as img:
            if img.mode == "L":
                return np.asarray(img, dtype=np.uint8)
            if img.mode in ("RGB", "RGBA"):
                rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
                return to_grayscale(rgb)
            raise FileFormatError(f"{path}: unsupported PNG mode {img.mode}")
    raise FileFormatError(f"{path}: unsupported frame format")


def list_frame_files(directory) -> list[Path]:
    directory = Path(directory)
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in _FRAME_SUFFIXES
    )
    if not files:
        raise InvalidInputError(f"no frame files in {directory}")
    return files


def read_frames_dir(directory) -> np.ndarray:
    """Load a frame directory into a (F, H, W) stack, lexicographic order."""
    files = list_frame_files(directory)
    frames = [read_frame(p) for p in files]
    shape = frames[0].shape
    for p, f in zip(files, frames):
        if f.shape != shape:
            raise InvalidInputError(f"{p}: frame shape {f.shape} != {shape}")
    return np.stack(frames)


def write_frames_dir(directory, frames: np.ndarray) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_pgm(directory / f"frame_{i:08d}.pgm", frame)


def hash_frames_dir(directory) -> np.ndarray:
    return hash_frames(read_frames_dir(directory))


# ---------------------------------------------------------------------------
# label tracks as JSON Lines of runs
# ---------------------------------------------------------------------------


def write_label_runs(path, labels: np.ndarray) -> None:
    """Serialize a binary label vector as one JSONL record per constant run."""
    labels = np.asarray(labels).astype(int)
    edges = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [labels.size]))
    with open(path, "w", encoding="utf-8") as fh:
        for s, e in zip(starts, ends):
            rec = {
                "start_frame": int(s),
                "end_frame_exclusive": int(e),
                "label": int(labels[s]),
            }
            fh.write(json.dumps(rec) + "\n")


def read_label_runs(path) -> np.ndarray:
    runs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                runs.append(json.loads(line))
    if not runs:
        raise FileFormatError(f"{path}: empty label file")
    expected = 0
    pieces = []
    for rec in runs:
        s, e, v = rec["start_frame"], rec["end_frame_exclusive"], rec["label"]
        if s != expected or e <= s or v not in (0, 1):
            raise FileFormatError(f"{path}: malformed run {rec}")
        pieces.append(np.full(e - s, v, dtype=np.uint8))
        expected = e
    return np.concatenate(pieces)
