import numpy as np
import pytest

from trailerness import features, hashmatch, kernels
from trailerness.errors import FileFormatError, InvalidInputError, TruncatedPayloadError

# frame 0 of synth_episode(SynthConfig(n_frames=64, n_shots=2,
# trailer_fraction=0.25), seed=42), hashed with scalar_dhash below
GOLDEN_IMAGE_HASH = 0xC2ACBCB4A3A8B7EC

TABLE_PATHS = [("numpy", kernels.min_distance_table_numpy)]
MIH_PATHS = [("numpy", kernels.mih_min_distance_table_numpy)]
DHASH_PATHS = [("numpy", kernels.dhash_batch_numpy)]
if kernels.HAS_NUMBA:
    TABLE_PATHS.append(("numba", kernels.min_distance_table_numba))
    MIH_PATHS.append(("numba", kernels.mih_min_distance_table_numba))
    DHASH_PATHS.append(("numba", kernels.dhash_batch_numba))


def scalar_dhash(image):
    """Standalone scalar reference: plain Python loops, no vectorization."""
    h = len(image)
    w = len(image[0])
    sums = [[0.0] * 9 for _ in range(8)]
    counts = [[0] * 9 for _ in range(8)]
    for i in range(h):
        for j in range(w):
            r = i * 8 // h
            c = j * 9 // w
            sums[r][c] += float(image[i][j])
            counts[r][c] += 1
    value = 0
    for r in range(8):
        for c in range(8):
            left = sums[r][c] / counts[r][c]
            right = sums[r][c + 1] / counts[r][c + 1]
            value = (value << 1) | (1 if left > right else 0)
    return value


def brute_force_table(episode, trailer):
    out = []
    for e in episode:
        best = 64
        for t in trailer:
            d = bin(int(e) ^ int(t)).count("1")
            if d < best:
                best = d
        out.append(best)
    return np.array(out, dtype=np.int64)


@pytest.fixture(scope="module")
def golden_image():
    cfg = features.SynthConfig(n_frames=64, n_shots=2, trailer_fraction=0.25)
    return features.synth_episode(cfg, seed=42).frames[0]


class TestComputeDhash:
    def test_constant_image_hashes_to_zero(self):
        img = np.full((64, 64), 128, dtype=np.uint8)
        assert hashmatch.compute_dhash(img) == 0

    def test_strictly_decreasing_rows_hash_to_all_ones(self):
        row = np.arange(63, -1, -1, dtype=np.uint8) * 4
        img = np.tile(row, (64, 1))
        assert hashmatch.compute_dhash(img) == 0xFFFFFFFFFFFFFFFF

    def test_golden_value_matches_scalar_reference(self, golden_image):
        assert scalar_dhash(golden_image.tolist()) == GOLDEN_IMAGE_HASH
        assert hashmatch.compute_dhash(golden_image) == GOLDEN_IMAGE_HASH

    @pytest.mark.parametrize("name,fn", DHASH_PATHS)
    def test_paths_agree_with_scalar_reference(self, name, fn):
        rng = np.random.default_rng(5)
        for shape in [(9, 8), (17, 23), (64, 64), (31, 9)]:
            img = rng.integers(0, 256, size=shape[::-1], dtype=np.uint8)
            assert int(fn(img[None])[0]) == scalar_dhash(img.tolist()), (name, shape)

    def test_minimum_size_image_is_identity_grid(self):
        img = np.zeros((8, 9), dtype=np.uint8)
        img[0, 0] = 255
        assert hashmatch.compute_dhash(img) == 1 << 63

    def test_too_small_image_rejected(self):
        with pytest.raises(InvalidInputError):
            hashmatch.compute_dhash(np.zeros((7, 9), dtype=np.uint8))
        with pytest.raises(InvalidInputError):
            hashmatch.compute_dhash(np.zeros((8, 8), dtype=np.uint8))
        with pytest.raises(InvalidInputError):
            hashmatch.compute_dhash(np.zeros((0, 0), dtype=np.uint8))

    def test_color_input_uses_rounded_luma(self):
        rng = np.random.default_rng(3)
        rgb = rng.integers(0, 256, size=(16, 18, 3), dtype=np.uint8)
        gray = np.rint(
            0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
        ).astype(np.uint8)
        assert hashmatch.compute_dhash(rgb) == hashmatch.compute_dhash(gray)

    def test_brightness_shift_invariance_with_cell_gaps(self):
        # plateaus with gaps >= 2 keep all strict inequalities under +1
        rng = np.random.default_rng(9)
        cells = rng.integers(0, 120, size=(8, 9), dtype=np.uint8) * 2
        img = np.kron(cells, np.ones((4, 4), dtype=np.uint8))
        assert hashmatch.compute_dhash(img) == hashmatch.compute_dhash(img + 1)

    def test_equal_downsampled_images_hash_equal(self):
        # pixel-doubling preserves every cell mean, so the hash is unchanged
        rng = np.random.default_rng(10)
        img = rng.integers(0, 256, size=(16, 18), dtype=np.uint8)
        doubled = np.kron(img, np.ones((2, 2), dtype=np.uint8))
        assert hashmatch.compute_dhash(img) == hashmatch.compute_dhash(doubled)

    def test_non_uint8_input_rejected(self):
        with pytest.raises(InvalidInputError):
            hashmatch.compute_dhash(np.zeros((16, 16), dtype=np.float64))
        with pytest.raises(InvalidInputError):
            hashmatch.hash_frames(np.zeros((2, 16, 16), dtype=np.int32))


class TestHamming:
    def test_identity_is_zero(self):
        rng = np.random.default_rng(0)
        for h in rng.integers(0, 1 << 63, size=10):
            assert hashmatch.hamming(int(h), int(h)) == 0

    def test_complement_is_64(self):
        assert hashmatch.hamming(0x0, 0xFFFFFFFFFFFFFFFF) == 64

    def test_four_set_bits(self):
        assert hashmatch.hamming(0x0F, 0x00) == 4

    def test_metric_properties_on_random_triples(self):
        rng = np.random.default_rng(17)
        triples = rng.integers(0, 1 << 64, size=(200, 3), dtype=np.uint64)
        for a, b, c in triples:
            a, b, c = int(a), int(b), int(c)
            assert hashmatch.hamming(a, b) == hashmatch.hamming(b, a)
            assert hashmatch.hamming(a, c) <= hashmatch.hamming(a, b) + hashmatch.hamming(b, c)
            assert 0 <= hashmatch.hamming(a, b) <= 64


class TestMinDistanceTable:
    def test_single_matching_hash(self):
        h = np.array([0x1234], dtype=np.uint64)
        assert hashmatch.min_distance_table(h, h).tolist() == [0]

    def test_popcount_example(self):
        ep = np.array([0x0, 0xFF], dtype=np.uint64)
        tr = np.array([0x0], dtype=np.uint64)
        assert hashmatch.min_distance_table(ep, tr).tolist() == [0, 8]

    @pytest.mark.parametrize("name,fn", TABLE_PATHS)
    def test_matches_nested_loop_reference(self, name, fn):
        rng = np.random.default_rng(23)
        ep = rng.integers(0, 1 << 64, size=1000, dtype=np.uint64)
        tr = rng.integers(0, 1 << 64, size=100, dtype=np.uint64)
        assert np.array_equal(fn(ep, tr), brute_force_table(ep, tr)), name

    def test_empty_inputs_rejected(self):
        h = np.array([0x1], dtype=np.uint64)
        with pytest.raises(InvalidInputError):
            hashmatch.min_distance_table(h, np.array([], dtype=np.uint64))
        with pytest.raises(InvalidInputError):
            hashmatch.min_distance_table(np.array([], dtype=np.uint64), h)


class TestMihTable:
    @pytest.mark.parametrize("name,fn", MIH_PATHS)
    def test_tau_64_equals_exhaustive(self, name, fn):
        rng = np.random.default_rng(31)
        ep = rng.integers(0, 1 << 64, size=300, dtype=np.uint64)
        tr = rng.integers(0, 1 << 64, size=40, dtype=np.uint64)
        assert np.array_equal(fn(ep, tr, 64), brute_force_table(ep, tr)), name

    def test_planted_copies_found_at_tau_1(self):
        rng = np.random.default_rng(37)
        ep = rng.integers(0, 1 << 64, size=500, dtype=np.uint64)
        planted = np.array([10, 100, 499])
        tr = ep[planted]
        table = hashmatch.min_distance_table_mih(ep, tr, 1)
        assert (table[planted] == 0).all()

    @pytest.mark.parametrize("name,fn", MIH_PATHS)
    @pytest.mark.parametrize("tau", [0, 1, 6, 10])
    def test_agrees_with_brute_force_below_tau(self, name, fn, tau):
        rng = np.random.default_rng(41 + tau)
        ep = rng.integers(0, 1 << 64, size=800, dtype=np.uint64)
        tr = rng.integers(0, 1 << 64, size=60, dtype=np.uint64)
        # plant some near-duplicates so small taus have hits
        tr[:10] = ep[:10] ^ np.uint64((1 << min(tau, 63)) - 1)
        exact = brute_force_table(ep, tr)
        got = fn(ep, tr, tau)
        below = exact <= tau
        assert np.array_equal(got[below], exact[below]), name
        assert (got[~below] == hashmatch.SENTINEL).all(), name

    def test_tau_out_of_range_rejected(self):
        h = np.array([0x1], dtype=np.uint64)
        for tau in (-1, 65):
            with pytest.raises(InvalidInputError):
                hashmatch.min_distance_table_mih(h, h, tau)


class TestLabelFrames:
    def test_strict_threshold(self):
        table = np.array([0, 5, 12])
        assert hashmatch.label_frames(table, 10).tolist() == [1, 1, 0]

    def test_tau_zero_labels_nothing(self):
        table = np.array([0, 1, 64])
        assert hashmatch.label_frames(table, 0).tolist() == [0, 0, 0]

    def test_monotone_in_tau(self):
        rng = np.random.default_rng(53)
        table = rng.integers(0, 65, size=500)
        taus = sorted(rng.integers(0, 65, size=10))
        prev = np.zeros(500, dtype=np.uint8)
        for tau in taus:
            cur = hashmatch.label_frames(table, int(tau))
            assert (cur >= prev).all()
            prev = cur

    def test_planted_frames_recovered_exactly(self):
        cfg = features.SynthConfig(n_frames=1000, n_shots=8, trailer_fraction=0.3)
        ep = features.synth_episode(cfg, seed=7)
        table = hashmatch.min_distance_table(
            hashmatch.hash_frames(ep.frames), hashmatch.hash_frames(ep.trailer_frames)
        )
        labels = hashmatch.label_frames(table, 1)
        assert np.array_equal(labels, ep.frame_labels)


class TestFrameIO:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(61)
        img = rng.integers(0, 256, size=(24, 31), dtype=np.uint8)
        hashmatch.write_pgm(tmp_path / "f.pgm", img)
        assert np.array_equal(hashmatch.read_pgm(tmp_path / "f.pgm"), img)

    def test_truncated_pgm_rejected(self, tmp_path):
        hashmatch.write_pgm(tmp_path / "f.pgm", np.zeros((10, 10), dtype=np.uint8))
        data = (tmp_path / "f.pgm").read_bytes()
        (tmp_path / "g.pgm").write_bytes(data[:-5])
        with pytest.raises(TruncatedPayloadError):
            hashmatch.read_pgm(tmp_path / "g.pgm")

    def test_png_matches_pgm(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(67)
        img = rng.integers(0, 256, size=(16, 20), dtype=np.uint8)
        Image.fromarray(img, mode="L").save(tmp_path / "f.png")
        assert np.array_equal(hashmatch.read_frame(tmp_path / "f.png"), img)

    def test_directory_order_is_lexicographic(self, tmp_path):
        frames = np.stack([np.full((9, 9), v, dtype=np.uint8) for v in (3, 1, 2)])
        hashmatch.write_frames_dir(tmp_path, frames)
        loaded = hashmatch.read_frames_dir(tmp_path)
        assert np.array_equal(loaded, frames)

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(InvalidInputError):
            hashmatch.read_frames_dir(tmp_path)


class TestLabelRunsIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(71)
        labels = (rng.random(333) < 0.2).astype(np.uint8)
        hashmatch.write_label_runs(tmp_path / "l.jsonl", labels)
        assert np.array_equal(hashmatch.read_label_runs(tmp_path / "l.jsonl"), labels)

    def test_one_record_per_run(self, tmp_path):
        labels = np.array([0, 0, 1, 1, 1, 0], dtype=np.uint8)
        hashmatch.write_label_runs(tmp_path / "l.jsonl", labels)
        lines = (tmp_path / "l.jsonl").read_text().strip().splitlines()
        assert len(lines) == 3

    def test_gap_rejected(self, tmp_path):
        (tmp_path / "bad.jsonl").write_text(
            '{"start_frame": 0, "end_frame_exclusive": 2, "label": 1}\n'
            '{"start_frame": 3, "end_frame_exclusive": 5, "label": 0}\n'
        )
        with pytest.raises(FileFormatError):
            hashmatch.read_label_runs(tmp_path / "bad.jsonl")
