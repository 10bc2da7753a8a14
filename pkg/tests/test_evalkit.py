import numpy as np
import pytest

from lesionfusion.evalkit import (
    EvalReport,
    classification_metrics,
    confusion_matrix,
    emit_report,
    parse_report,
    roc_auc,
)


def _probs_for(pred, n_classes=3):
    """One-hot-ish probabilities whose argmax equals the given predictions."""
    out = np.full((len(pred), n_classes), 0.1)
    for i, p in enumerate(pred):
        out[i, p] = 0.8
    return out


class TestConfusionAndAggregates:
    def test_hand_computed_confusion(self):
        labels = np.array([0] * 5 + [1] * 5 + [2] * 5)
        pred = np.array([0] * 5 + [2] * 5 + [2] * 5)
        cm = confusion_matrix(pred, labels)
        np.testing.assert_array_equal(cm, [[5, 0, 0], [0, 0, 5], [0, 0, 5]])
        report = classification_metrics(_probs_for(pred), labels)
        assert report.accuracy == pytest.approx(10 / 15, abs=1e-12)
        assert report.per_class_recall == [1.0, 0.0, 1.0]
        # precision: class0 5/5, class1 undefined-with-support -> 0, class2 5/10
        assert report.macro_precision == pytest.approx((1.0 + 0.0 + 0.5) / 3, abs=1e-12)
        assert report.macro_recall == pytest.approx(2 / 3, abs=1e-12)

    def test_perfect_predictions(self):
        labels = np.array([0, 1, 2, 0, 1, 2])
        report = classification_metrics(_probs_for(labels), labels)
        assert report.accuracy == 1.0
        assert report.macro_f1 == 1.0
        assert report.absent_classes == []

    def test_matches_sklearn_on_random_batches(self):
        from sklearn.metrics import f1_score, precision_score, recall_score

        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(6, 40))
            labels = rng.integers(0, 3, size=n)
            if len(np.unique(labels)) < 3:
                continue
            pred = rng.integers(0, 3, size=n)
            report = classification_metrics(_probs_for(pred), labels)
            assert report.macro_recall == pytest.approx(
                recall_score(labels, pred, average="macro"), abs=1e-9
            )
            assert report.macro_f1 == pytest.approx(
                f1_score(labels, pred, average="macro"), abs=1e-9
            )
            assert report.macro_precision == pytest.approx(
                precision_score(labels, pred, average="macro", zero_division=0), abs=1e-9
            )

    def test_absent_class_flagged_not_averaged(self):
        labels = np.array([0, 0, 1, 1])  # no malignant present
        pred = np.array([0, 0, 1, 0])
        report = classification_metrics(_probs_for(pred), labels)
        assert report.absent_classes == [2]
        assert report.per_class_recall[2] is None
        assert report.macro_recall == pytest.approx((1.0 + 0.5) / 2, abs=1e-12)
        assert report.auc[2] is None

    def test_single_sample(self):
        report = classification_metrics(_probs_for([1]), np.array([1]))
        assert report.accuracy == 1.0
        assert report.absent_classes == [0, 2]

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            classification_metrics(np.zeros((0, 3)), np.array([]))


class TestRocAuc:
    def test_perfect_separation_auc_one(self):
        labels = np.array([0, 0, 1, 1])
        scores = np.array(
            [[0.9, 0.1, 0.0], [0.8, 0.2, 0.0], [0.1, 0.9, 0.0], [0.2, 0.8, 0.0]]
        )
        curves = roc_auc(scores, labels)
        assert curves[0].auc == pytest.approx(1.0, abs=1e-12)
        assert curves[1].auc == pytest.approx(1.0, abs=1e-12)
        assert curves[2].auc is None

    def test_inverted_scores_auc_zero(self):
        labels = np.array([0, 0, 1, 1])
        scores = np.array(
            [[0.1, 0.0, 0.0], [0.2, 0.0, 0.0], [0.8, 0.0, 0.0], [0.9, 0.0, 0.0]]
        )
        assert roc_auc(scores, labels)[0].auc == pytest.approx(0.0, abs=1e-12)

    def test_constant_scores_auc_half(self):
        labels = np.array([0, 0, 1, 1])
        scores = np.full((4, 3), 0.5)
        assert roc_auc(scores, labels)[0].auc == pytest.approx(0.5, abs=1e-12)

    def test_hand_computed_three_quarters(self):
        # positives {0.9, 0.4}, negatives {0.6, 0.2}: one swapped pair of four
        labels = np.array([0, 0, 1, 1])
        scores = np.zeros((4, 3))
        scores[:, 0] = [0.9, 0.4, 0.6, 0.2]
        assert roc_auc(scores, labels)[0].auc == pytest.approx(0.75, abs=1e-12)

    def test_matches_sklearn(self):
        from sklearn.metrics import roc_auc_score

        rng = np.random.default_rng(8)
        for _ in range(20):
            n = int(rng.integers(8, 50))
            labels = rng.integers(0, 3, size=n)
            if len(np.unique(labels)) < 3:
                continue
            scores = rng.uniform(size=(n, 3))
            curves = roc_auc(scores, labels)
            for c in range(3):
                expected = roc_auc_score((labels == c).astype(int), scores[:, c])
                assert curves[c].auc == pytest.approx(expected, abs=1e-9)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(2)
        labels = rng.integers(0, 3, size=30)
        scores = rng.uniform(size=(30, 3))
        base = [c.auc for c in roc_auc(scores, labels)]
        warped = [c.auc for c in roc_auc(np.exp(scores * 3), labels)]
        assert base == pytest.approx(warped, abs=1e-9)

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError, match="scores"):
            roc_auc(np.zeros((4, 2)), np.zeros(4, dtype=int))


class TestReportEmission:
    def test_round_trip(self, tmp_path):
        labels = np.array([0, 1, 2, 0, 1, 2])
        report = classification_metrics(
            _probs_for([0, 1, 2, 0, 1, 1]), labels, dice_summary={"mean": 0.91, "min": 0.6}
        )
        curves = roc_auc(_probs_for([0, 1, 2, 0, 1, 1]), labels)
        written = emit_report(report, tmp_path, curves)
        assert (tmp_path / "report.json") in written
        for name in ("normal", "benign", "malignant"):
            assert (tmp_path / f"roc_{name}.png").exists()
        loaded = parse_report(tmp_path)
        assert loaded == report

    def test_dice_summary_omitted_when_absent(self, tmp_path):
        import json

        report = classification_metrics(_probs_for([0, 1, 2]), np.array([0, 1, 2]))
        emit_report(report, tmp_path)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert "dice_summary" not in payload
        assert parse_report(tmp_path).dice_summary is None

    def test_four_decimal_fixture_values(self, tmp_path):
        import json

        labels = np.array([0] * 4 + [1] * 4 + [2] * 4)
        pred = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 2]
        report = classification_metrics(_probs_for(pred), labels)
        emit_report(report, tmp_path)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert round(payload["accuracy"], 4) == 0.8333
        assert round(payload["macro_recall"], 4) == 0.8333
        assert round(payload["macro_f1"], 4) == 0.8320
        assert payload["schema_version"] == 1
        assert payload["averaging"] == "macro"
