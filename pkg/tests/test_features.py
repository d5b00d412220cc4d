import numpy as np
import pytest

from trailerness import features, timeline as tl
from trailerness.errors import (
    BadMagicError,
    CountMismatchError,
    FileFormatError,
    InvalidInputError,
    NonFiniteValuesError,
    TruncatedPayloadError,
)


def make_fs(n=6, d=4, seed=0, modality="visual", scale="clip"):
    rng = np.random.default_rng(seed)
    return features.FeatureSequence(
        modality=modality,
        scale=scale,
        matrix=rng.standard_normal((n, d)).astype(np.float32),
    )


class TestFeatureFileFormat:
    def test_round_trip_is_bitwise(self, tmp_path):
        fs = make_fs(n=17, d=9, seed=4)
        features.save_features(tmp_path / "f.trlf", fs)
        again = features.load_features(tmp_path / "f.trlf")
        assert again.modality == "visual" and again.scale == "clip"
        assert again.matrix.tobytes() == fs.matrix.tobytes()

    def test_small_header_example(self, tmp_path):
        fs = features.FeatureSequence(
            modality="textual", scale="shot",
            matrix=np.arange(8, dtype=np.float32).reshape(2, 4),
        )
        features.save_features(tmp_path / "f.trlf", fs)
        again = features.load_features(tmp_path / "f.trlf")
        assert again.matrix.shape == (2, 4)

    def test_bad_magic_rejected(self, tmp_path):
        fs = make_fs()
        features.save_features(tmp_path / "f.trlf", fs)
        data = bytearray((tmp_path / "f.trlf").read_bytes())
        data[0] ^= 0xFF
        (tmp_path / "g.trlf").write_bytes(bytes(data))
        with pytest.raises(BadMagicError):
            features.load_features(tmp_path / "g.trlf")

    def test_truncated_payload_rejected(self, tmp_path):
        fs = make_fs()
        features.save_features(tmp_path / "f.trlf", fs)
        data = (tmp_path / "f.trlf").read_bytes()
        (tmp_path / "g.trlf").write_bytes(data[:-3])
        with pytest.raises(TruncatedPayloadError):
            features.load_features(tmp_path / "g.trlf")

    def test_nan_payload_rejected(self, tmp_path):
        fs = make_fs()
        features.save_features(tmp_path / "f.trlf", fs)
        data = bytearray((tmp_path / "f.trlf").read_bytes())
        data[15:19] = np.array([np.nan], dtype="<f4").tobytes()
        (tmp_path / "g.trlf").write_bytes(bytes(data))
        with pytest.raises(NonFiniteValuesError):
            features.load_features(tmp_path / "g.trlf")

    def test_header_fuzz_every_field_rejected(self, tmp_path):
        fs = make_fs(n=5, d=3)
        features.save_features(tmp_path / "f.trlf", fs)
        data = (tmp_path / "f.trlf").read_bytes()
        # magic bytes 0..3, D field bytes 7..10, N field bytes 11..14
        for pos in list(range(4)) + list(range(7, 15)):
            mutated = bytearray(data)
            mutated[pos] ^= 0x01
            (tmp_path / "m.trlf").write_bytes(bytes(mutated))
            with pytest.raises(FileFormatError):
                features.load_features(tmp_path / "m.trlf")

    def test_count_mismatch_vs_timeline(self, tmp_path):
        fs = make_fs(n=5)
        features.save_features(tmp_path / "f.trlf", fs)
        video = tl.VideoTimeline(frame_count=64 * 7)  # 7 clips, not 5
        with pytest.raises(CountMismatchError):
            features.load_features(tmp_path / "f.trlf", video)

    def test_matching_timeline_accepted(self, tmp_path):
        fs = make_fs(n=3)
        features.save_features(tmp_path / "f.trlf", fs)
        video = tl.VideoTimeline(frame_count=64 * 3)
        assert features.load_features(tmp_path / "f.trlf", video).n_units == 3

    def test_nan_matrix_rejected_at_construction(self):
        with pytest.raises(NonFiniteValuesError):
            features.FeatureSequence("visual", "clip", np.array([[np.nan]]))


class TestPoolShotFeatures:
    def test_one_clip_per_shot_is_identity(self):
        video = tl.VideoTimeline(frame_count=192, cuts=np.array([64, 128]))
        fs = make_fs(n=3, d=5, seed=8)
        pooled = features.pool_shot_features(fs, video)
        assert pooled.scale == "shot"
        assert np.array_equal(pooled.matrix, fs.matrix)

    def test_two_clip_mean(self):
        video = tl.VideoTimeline(frame_count=128)  # one shot, two clips
        fs = features.FeatureSequence(
            "visual", "clip", np.array([[1.0, 3.0], [3.0, 5.0]], dtype=np.float32)
        )
        pooled = features.pool_shot_features(fs, video)
        assert pooled.matrix.tolist() == [[2.0, 4.0]]

    def test_matches_per_shot_loop(self):
        rng = np.random.default_rng(15)
        video = tl.VideoTimeline(
            frame_count=100 * 64,
            cuts=np.sort(rng.choice(np.arange(1, 6400), size=9, replace=False)),
        )
        fs = make_fs(n=100, d=16, seed=16)
        pooled = features.pool_shot_features(fs, video)
        owner = tl.assign_clips_to_shots(video.clip_bounds, video.shot_bounds)
        for s in range(video.shot_bounds.shape[0]):
            rows = fs.matrix[owner == s].astype(np.float64)
            if rows.size:
                expect = rows.mean(axis=0).astype(np.float32)
                assert np.array_equal(pooled.matrix[s], expect)

    def test_commutes_with_uniform_scaling(self):
        video = tl.VideoTimeline(frame_count=640, cuts=np.array([200, 410]))
        fs = make_fs(n=10, d=6, seed=21)
        scaled = features.FeatureSequence("visual", "clip", fs.matrix * np.float32(4.0))
        a = features.pool_shot_features(scaled, video).matrix
        b = features.pool_shot_features(fs, video).matrix * np.float32(4.0)
        np.testing.assert_allclose(a, b, rtol=1e-6)

    def test_empty_shot_falls_back_to_overlap_mean(self):
        video = tl.VideoTimeline(frame_count=128, cuts=np.array([3]))
        fs = make_fs(n=2, d=4, seed=23)
        pooled = features.pool_shot_features(fs, video)
        # shot [0, 3) owns no clip midpoint; only clip [0, 64) overlaps it
        assert np.array_equal(pooled.matrix[0], fs.matrix[0])

    def test_count_mismatch_rejected(self):
        video = tl.VideoTimeline(frame_count=640)
        with pytest.raises(CountMismatchError):
            features.pool_shot_features(make_fs(n=3), video)


class TestSynthEpisode:
    def test_determinism_is_bitwise(self):
        cfg = features.SynthConfig(n_frames=500, n_shots=6, trailer_fraction=0.25,
                                   noise_rate=0.05)
        a = features.synth_episode(cfg, seed=3)
        b = features.synth_episode(cfg, seed=3)
        assert a.frames.tobytes() == b.frames.tobytes()
        assert a.trailer_frames.tobytes() == b.trailer_frames.tobytes()
        assert np.array_equal(a.frame_labels, b.frame_labels)
        for key in a.features:
            assert a.features[key].matrix.tobytes() == b.features[key].matrix.tobytes()
        assert a.subtitles.entries == b.subtitles.entries

    def test_planted_count_matches_fraction(self):
        cfg = features.SynthConfig(n_frames=5000, n_shots=40, trailer_fraction=0.06)
        ep = features.synth_episode(cfg, seed=7)
        assert int(ep.frame_labels.sum()) == 300
        assert ep.trailer_frames.shape[0] == 300
        assert np.array_equal(np.flatnonzero(ep.frame_labels), ep.trailer_source_indices)

    def test_zero_signal_keeps_distributions_close(self):
        cfg = features.SynthConfig(n_frames=4096, n_shots=16, trailer_fraction=0.4,
                                   signal_strength=0.0, d_visual=32)
        ep = features.synth_episode(cfg, seed=9)
        m = ep.features["visual_clip"].matrix
        pos = m[ep.clip_labels == 1].mean()
        neg = m[ep.clip_labels == 0].mean()
        assert abs(pos - neg) < 0.15

    def test_positive_units_get_mean_shift(self):
        cfg = features.SynthConfig(n_frames=4096, n_shots=16, trailer_fraction=0.4,
                                   signal_strength=3.0, d_visual=32)
        ep = features.synth_episode(cfg, seed=9)
        m = ep.features["visual_clip"].matrix
        pos = m[ep.clip_labels == 1].mean()
        neg = m[ep.clip_labels == 0].mean()
        assert pos - neg > 2.5

    def test_unit_labels_match_timeline_aggregation(self):
        cfg = features.SynthConfig(n_frames=2000, n_shots=11, trailer_fraction=0.3)
        for seed in range(5):
            ep = features.synth_episode(cfg, seed=seed)
            clip_bounds = ep.video.clip_bounds
            clips = tl.aggregate_labels(ep.frame_labels, clip_bounds)
            shots = tl.aggregate_shot_labels(
                clips, clip_bounds, ep.video.shot_bounds, ep.frame_labels
            )
            assert np.array_equal(ep.clip_labels, clips)
            assert np.array_equal(ep.shot_labels, shots)

    def test_noisy_trailer_differs_but_same_shape(self):
        cfg = features.SynthConfig(n_frames=600, n_shots=6, trailer_fraction=0.3,
                                   noise_rate=0.05)
        ep = features.synth_episode(cfg, seed=13)
        clean = ep.frames[ep.trailer_source_indices]
        assert ep.trailer_frames.shape == clean.shape
        flipped = np.mean(ep.trailer_frames != clean)
        assert 0.01 < flipped < 0.12

    def test_infeasible_configs_rejected(self):
        with pytest.raises(InvalidInputError):
            features.synth_episode(
                features.SynthConfig(n_frames=100, n_shots=2, trailer_fraction=0.98), 0
            )
        with pytest.raises(InvalidInputError):
            features.SynthConfig(trailer_fraction=1.5).validate()
        with pytest.raises(InvalidInputError):
            features.SynthConfig(n_shots=1).validate()

    def test_subtitles_denser_in_positive_clips(self):
        cfg = features.SynthConfig(n_frames=8192, n_shots=20, trailer_fraction=0.4)
        ep = features.synth_episode(cfg, seed=17)
        texts = tl.align_subtitles(ep.subtitles, ep.video.clip_bounds, cfg.n_frames)
        pos_words = np.mean([len(t.split()) for t, l in zip(texts, ep.clip_labels) if l])
        neg_words = np.mean([len(t.split()) for t, l in zip(texts, ep.clip_labels) if not l])
        assert pos_words > neg_words


class TestSplits:
    def test_63_episodes_split_38_12_13(self):
        assert features.split_counts(63) == (38, 12, 13)

    def test_counts_sum_and_stay_nonnegative(self):
        for n in range(1, 200):
            a, b, c = features.split_counts(n)
            assert a + b + c == n
            assert min(a, b, c) >= 0

    def test_assignment_order(self):
        labels = features.split_assignment(10)
        assert labels == ["train"] * 6 + ["val"] * 2 + ["test"] * 2


class TestDataset:
    def test_build_and_load_round_trip(self, tmp_path):
        cfg = features.SynthConfig(n_frames=300, n_shots=4, trailer_fraction=0.3,
                                   d_visual=5, d_text=3)
        path = features.build_dataset(tmp_path, cfg, episodes=5, seed=2, write_frames=True)
        man = features.load_manifest(path)
        assert len(man.episodes) == 5
        assert [e.split for e in man.episodes] == ["train", "train", "train", "val", "test"]
        ep = man.episodes[0]
        video = ep.load_timeline()
        assert video.frame_count == 300
        fs = features.load_features(ep.feature_paths["visual_clip"], video)
        assert fs.dim == 5
        assert ep.frames_dir is not None and ep.frames_dir.exists()

    def test_rebuild_is_byte_identical(self, tmp_path):
        cfg = features.SynthConfig(n_frames=200, n_shots=3, trailer_fraction=0.3,
                                   d_visual=4, d_text=4)
        p1 = features.build_dataset(tmp_path / "a", cfg, episodes=3, seed=5, write_frames=False)
        p2 = features.build_dataset(tmp_path / "b", cfg, episodes=3, seed=5, write_frames=False)
        assert p1.read_bytes() == p2.read_bytes()
        for rel in ["episodes/ep000/features_visual_clip.trlf", "episodes/ep001/labels.jsonl"]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_no_frames_dataset_omits_archives(self, tmp_path):
        cfg = features.SynthConfig(n_frames=200, n_shots=3, trailer_fraction=0.3)
        man = features.load_manifest(
            features.build_dataset(tmp_path, cfg, episodes=2, seed=1, write_frames=False)
        )
        assert man.episodes[0].frames_dir is None
        assert man.episodes[0].trailer_dir is None
