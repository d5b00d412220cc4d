import json

import numpy as np
import pytest

from trailerness import evaluation
from trailerness.errors import InvalidInputError


class TestBinarize:
    def test_ties_go_positive(self):
        assert evaluation.binarize([0.49, 0.5, 0.51], 0.5).tolist() == [0, 1, 1]

    def test_all_zero_scores(self):
        assert evaluation.binarize(np.zeros(4), 0.5).sum() == 0

    def test_threshold_zero_labels_everything(self):
        assert evaluation.binarize(np.zeros(4), 0.0).tolist() == [1, 1, 1, 1]

    def test_threshold_out_of_range_rejected(self):
        with pytest.raises(InvalidInputError):
            evaluation.binarize([0.5], 1.5)


class TestPrf1:
    def test_exact_match_with_positives(self):
        gold = np.array([1, 0, 1, 0])
        assert evaluation.prf1(gold, gold) == (1.0, 1.0, 1.0)

    def test_hand_confusion_counts(self):
        pred = [1, 1, 0, 0]
        gold = [1, 0, 1, 0]
        assert evaluation.prf1(pred, gold) == (0.5, 0.5, 0.5)
        assert evaluation.confusion_counts(pred, gold) == (1, 1, 1, 1)

    def test_degenerate_all_zero_pred(self):
        assert evaluation.prf1([0, 0, 0], [1, 0, 1]) == (0.0, 0.0, 0.0)

    def test_degenerate_no_positives_anywhere(self):
        assert evaluation.prf1([0, 0], [0, 0]) == (0.0, 0.0, 0.0)

    def test_symmetric_under_joint_permutation(self):
        rng = np.random.default_rng(31)
        pred = rng.integers(0, 2, 200)
        gold = rng.integers(0, 2, 200)
        perm = rng.permutation(200)
        assert evaluation.prf1(pred, gold) == evaluation.prf1(pred[perm], gold[perm])

    def test_f1_equals_counts_identity(self):
        rng = np.random.default_rng(37)
        for _ in range(100):
            n = int(rng.integers(1, 300))
            pred = rng.integers(0, 2, n)
            gold = rng.integers(0, 2, n)
            tp, fp, fn, _ = evaluation.confusion_counts(pred, gold)
            _, _, f1 = evaluation.prf1(pred, gold)
            expect = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
            assert f1 == pytest.approx(expect, abs=1e-12)

    def test_counts_sum_to_total(self):
        rng = np.random.default_rng(41)
        pred = rng.integers(0, 2, 500)
        gold = rng.integers(0, 2, 500)
        assert sum(evaluation.confusion_counts(pred, gold)) == 500

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            evaluation.prf1([1], [1, 0])


class TestMultiSeedReport:
    def test_identical_runs_have_zero_std(self):
        report = evaluation.multi_seed_report([(0.5, 0.4, 0.44)] * 5)
        assert report.std == {"precision": 0.0, "recall": 0.0, "f1": 0.0}
        assert report.mean["precision"] == pytest.approx(0.5)

    def test_sample_std_of_two_values(self):
        report = evaluation.multi_seed_report([(0.4, 0.4, 0.4), (0.6, 0.6, 0.6)])
        assert report.mean["f1"] == pytest.approx(0.5)
        assert report.std["f1"] == pytest.approx(0.1414213562373095, abs=1e-12)

    def test_single_run_reports_zero_std(self):
        report = evaluation.multi_seed_report([(0.7, 0.6, 0.65)])
        assert report.mean["recall"] == pytest.approx(0.6)
        assert report.std == {"precision": 0.0, "recall": 0.0, "f1": 0.0}

    def test_mean_within_min_max_envelope(self):
        rng = np.random.default_rng(43)
        triples = [tuple(rng.random(3)) for _ in range(7)]
        report = evaluation.multi_seed_report(triples)
        arr = np.array(triples)
        for i, m in enumerate(evaluation.METRICS):
            assert arr[:, i].min() <= report.mean[m] <= arr[:, i].max()

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            evaluation.multi_seed_report([])

    def test_json_round_trip_with_confusion(self, tmp_path):
        report = evaluation.multi_seed_report(
            [(1.0, 0.5, 2 / 3), (0.8, 0.4, 8 / 15)],
            seeds=[0, 1],
            confusions=[(10, 0, 10, 80), (8, 2, 12, 78)],
        )
        report.save(tmp_path / "r.json")
        again = evaluation.EvalReport.load(tmp_path / "r.json")
        assert again.mean == report.mean
        assert again.std == report.std
        assert again.confusion == {"tp": 18, "fp": 2, "fn": 22, "tn": 158}
        doc = json.loads((tmp_path / "r.json").read_text())
        assert set(doc) == {"per_seed", "mean", "std", "confusion"}
        assert doc["per_seed"][0]["confusion"] == {"tp": 10, "fp": 0, "fn": 10, "tn": 80}
