"""Hot numeric kernels: difference-hash computation and Hamming search.

Each kernel has two interchangeable implementations that produce bitwise
identical results:

  * a numba ``@njit`` version (default when numba is importable), and
  * a pure-numpy fallback.

Set ``TRAILERNESS_NO_NUMBA=1`` to force the numpy path. The module-level
names (``dhash_batch``, ``min_distance_table``, ``mih_min_distance_table``)
dispatch to the active path; the ``*_numpy`` / ``*_numba`` variants stay
importable for tests and benchmarks.

Hash layout: 64-bit difference hash over a 9x8 area-average downsample,
bit (row r, col c) set iff cell(r, c) > cell(r, c + 1), packed row-major
with the (0, 0) comparison in the most significant bit.
"""

from __future__ import annotations

import itertools
import os

import numpy as np

HASH_ROWS = 8
HASH_COLS = 9
SENTINEL = 65  # distance value reported for "exceeds the search threshold"

_FORCE_NUMPY = os.environ.get("TRAILERNESS_NO_NUMBA", "").strip() not in ("", "0")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = HAS_NUMBA and not _FORCE_NUMPY


def cell_starts(size: int, n_cells: int) -> np.ndarray:
    """First source index of each downsample cell.

    Cell k covers the half-open real interval [k*size/n, (k+1)*size/n), so a
    source index i belongs to cell floor(i*n/size).
    """
    k = np.arange(n_cells, dtype=np.int64)
    return (k * size + n_cells - 1) // n_cells


def popcount64(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x)


# ---------------------------------------------------------------------------
# difference hash
# ---------------------------------------------------------------------------


def _pack_bits(bits: np.ndarray) -> np.ndarray:
    # bits: (F, 8, 8) bool, row-major, MSB first
    packed = np.packbits(bits.reshape(bits.shape[0], 64), axis=1)
    return packed.view(">u8").astype(np.uint64).reshape(-1)


def dhash_batch_numpy(frames: np.ndarray) -> np.ndarray:
    """dHash of a (F, H, W) uint8 stack, one uint64 per frame."""
    f, h, w = frames.shape
    row_starts = cell_starts(h, HASH_ROWS)
    col_starts = cell_starts(w, HASH_COLS)
    row_counts = np.diff(np.append(row_starts, h)).astype(np.float64)
    col_counts = np.diff(np.append(col_starts, w)).astype(np.float64)
    counts = row_counts[:, None] * col_counts[None, :]

    hashes = np.empty(f, dtype=np.uint64)
    block = max(1, (1 << 22) // (h * w))  # keep float64 scratch around 32 MiB
    for lo in range(0, f, block):
        chunk = frames[lo : lo + block].astype(np.float64)
        sums = np.add.reduceat(chunk, row_starts, axis=1)
        sums = np.add.reduceat(sums, col_starts, axis=2)
        means = sums / counts
        bits = means[:, :, : HASH_COLS - 1] > means[:, :, 1:]
        hashes[lo : lo + block] = _pack_bits(bits)
    return hashes


@njit(cache=True)
def _dhash_batch_jit(frames, row_map, col_map):  # pragma: no cover - jitted
    f = frames.shape[0]
    h = frames.shape[1]
    w = frames.shape[2]
    out = np.empty(f, dtype=np.uint64)
    for i in range(f):
        sums = np.zeros((HASH_ROWS, HASH_COLS), dtype=np.float64)
        counts = np.zeros((HASH_ROWS, HASH_COLS), dtype=np.float64)
        for y in range(h):
            r = row_map[y]
            for x in range(w):
                c = col_map[x]
                sums[r, c] += frames[i, y, x]
                counts[r, c] += 1.0
        hv = np.uint64(0)
        for r in range(HASH_ROWS):
            for c in range(HASH_COLS - 1):
                hv = hv << np.uint64(1)
                if sums[r, c] / counts[r, c] > sums[r, c + 1] / counts[r, c + 1]:
                    hv |= np.uint64(1)
        out[i] = hv
    return out


def dhash_batch_numba(frames: np.ndarray) -> np.ndarray:
    _, h, w = frames.shape
    row_map = np.arange(h, dtype=np.int64) * HASH_ROWS // h
    col_map = np.arange(w, dtype=np.int64) * HASH_COLS // w
    return _dhash_batch_jit(np.ascontiguousarray(frames), row_map, col_map)


# ---------------------------------------------------------------------------
# exhaustive minimum Hamming distance
# ---------------------------------------------------------------------------


def min_distance_table_numpy(episode: np.ndarray, trailer: np.ndarray) -> np.ndarray:
    out = np.empty(episode.size, dtype=np.int64)
    block = max(1, (1 << 23) // max(1, trailer.size))
    for lo in range(0, episode.size, block):
        xor = episode[lo : lo + block, None] ^ trailer[None, :]
        out[lo : lo + block] = np.bitwise_count(xor).min(axis=1)
    return out


@njit(cache=True)
def _popcount64_scalar(v):  # pragma: no cover - jitted
    v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
    v = (v & np.uint64(0x3333333333333333)) + ((v >> np.uint64(2)) & np.uint64(0x3333333333333333))
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (v * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True)
def _min_distance_table_jit(episode, trailer):  # pragma: no cover - jitted
    out = np.empty(episode.size, dtype=np.int64)
    for j in range(episode.size):
        best = np.uint64(64)
        h = episode[j]
        for r in range(trailer.size):
            d = _popcount64_scalar(h ^ trailer[r])
            if d < best:
                best = d
                if best == np.uint64(0):
                    break
        out[j] = best
    return out


def min_distance_table_numba(episode: np.ndarray, trailer: np.ndarray) -> np.ndarray:
    return _min_distance_table_jit(
        np.ascontiguousarray(episode, dtype=np.uint64),
        np.ascontiguousarray(trailer, dtype=np.uint64),
    )


# ---------------------------------------------------------------------------
# multi-index Hamming search
# ---------------------------------------------------------------------------
#
# The 64-bit hash is split into 4 disjoint 16-bit chunks. Any pair within
# Hamming distance tau agrees with one chunk up to radius tau // 4, so probing
# the Hamming ball of that radius around each query chunk reaches every
# trailer hash within tau. Candidates are verified with exact popcounts;
# minima above tau are reported as SENTINEL.

_N_CHUNKS = 4
_CHUNK_BITS = 16


def ball_masks16(radius: int) -> np.ndarray:
    """All 16-bit XOR masks with popcount <= radius, ascending."""
    masks = [0]
    for k in range(1, min(radius, _CHUNK_BITS) + 1):
        for combo in itertools.combinations(range(_CHUNK_BITS), k):
            m = 0
            for b in combo:
                m |= 1 << b
            masks.append(m)
    return np.array(sorted(masks), dtype=np.uint64)


def _chunk_values(hashes: np.ndarray) -> np.ndarray:
    shifts = (np.arange(_N_CHUNKS, dtype=np.uint64) * np.uint64(_CHUNK_BITS))[:, None]
    return ((hashes[None, :] >> shifts) & np.uint64(0xFFFF)).astype(np.int64)


def _build_chunk_index(trailer: np.ndarray):
    values = _chunk_values(trailer)
    order = np.empty_like(values)
    offsets = np.empty((_N_CHUNKS, (1 << _CHUNK_BITS) + 1), dtype=np.int64)
    for c in range(_N_CHUNKS):
        order[c] = np.argsort(values[c], kind="stable")
        counts = np.bincount(values[c], minlength=1 << _CHUNK_BITS)
        offsets[c, 0] = 0
        np.cumsum(counts, out=offsets[c, 1:])
    return values, order, offsets


def mih_min_distance_table_numpy(
    episode: np.ndarray, trailer: np.ndarray, tau: int
) -> np.ndarray:
    masks = ball_masks16(tau // _N_CHUNKS)
    _, order, offsets = _build_chunk_index(trailer)
    ep_chunks = _chunk_values(episode)

    best = np.full(episode.size, SENTINEL, dtype=np.int64)
    for c in range(_N_CHUNKS):
        sorted_idx = order[c]
        offs = offsets[c]
        for m in masks:
            vals = ep_chunks[c] ^ np.int64(m)
            lo = offs[vals]
            cnt = offs[vals + 1] - lo
            hit = np.flatnonzero(cnt)
            if hit.size == 0:
                continue
            cnt_h = cnt[hit]
            rows = np.repeat(hit, cnt_h)
            pos = np.arange(cnt_h.sum()) - np.repeat(np.cumsum(cnt_h) - cnt_h, cnt_h)
            cand = sorted_idx[np.repeat(lo[hit], cnt_h) + pos]
            d = np.bitwise_count(episode[rows] ^ trailer[cand]).astype(np.int64)
            np.minimum.at(best, rows, d)
    best[best > tau] = SENTINEL
    return best


@njit(cache=True)
def _mih_table_jit(episode, trailer, tau, masks, order, offsets):  # pragma: no cover
    out = np.empty(episode.size, dtype=np.int64)
    seen = np.full(trailer.size, -1, dtype=np.int64)
    for j in range(episode.size):
        h = episode[j]
        best = np.int64(SENTINEL)
        for c in range(_N_CHUNKS):
            q = (h >> np.uint64(c * _CHUNK_BITS)) & np.uint64(0xFFFF)
            for m in masks:
                v = np.int64(q ^ m)
                for p in range(offsets[c, v], offsets[c, v + 1]):
                    idx = order[c, p]
                    if seen[idx] == j:
                        continue
                    seen[idx] = j
                    d = np.int64(_popcount64_scalar(h ^ trailer[idx]))
                    if d < best:
                        best = d
        out[j] = best if best <= tau else SENTINEL
    return out


def mih_min_distance_table_numba(
    episode: np.ndarray, trailer: np.ndarray, tau: int
) -> np.ndarray:
    masks = ball_masks16(tau // _N_CHUNKS)
    _, order, offsets = _build_chunk_index(trailer)
    return _mih_table_jit(
        np.ascontiguousarray(episode, dtype=np.uint64),
        np.ascontiguousarray(trailer, dtype=np.uint64),
        np.int64(tau),
        masks,
        np.ascontiguousarray(order),
        np.ascontiguousarray(offsets),
    )


if USE_NUMBA:
    dhash_batch = dhash_batch_numba
    min_distance_table = min_distance_table_numba
    mih_min_distance_table = mih_min_distance_table_numba
else:
    dhash_batch = dhash_batch_numpy
    min_distance_table = min_distance_table_numpy
    mih_min_distance_table = mih_min_distance_table_numpy


def warmup() -> None:
    """Trigger JIT compilation of the active kernels on tiny inputs."""
    frames = np.zeros((1, HASH_ROWS, HASH_COLS), dtype=np.uint8)
    h = dhash_batch(frames)
    min_distance_table(h, h)
    mih_min_distance_table(h, h, 1)
