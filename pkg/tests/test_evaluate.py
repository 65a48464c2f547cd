from __future__ import annotations

import json

import numpy as np
import pytest

from flowgate.errors import EmptyDataset, IndexOutOfRange, LengthMismatch, SchemaMismatch
from flowgate.evaluate import (
    ConfusionMatrix,
    ContrastReport,
    confusion,
    contrast,
    evaluate,
    metrics,
    render_heatmap,
    write_report,
)
from flowgate.nnet import Layer, MlpModel

from conftest import make_dataset, recount_metrics


class TestConfusion:
    def test_perfect_prediction_is_diagonal(self):
        cm = confusion([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert np.array_equal(cm.counts, np.diag([1, 2, 1]))

    def test_hand_count(self):
        cm = confusion([0, 0, 1, 1], [0, 1, 1, 1], 2)
        assert cm.counts.tolist() == [[1, 1], [0, 2]]

    def test_empty_vectors(self):
        cm = confusion([], [], 3)
        assert cm.counts.sum() == 0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion([0, 1], [0], 2)

    def test_index_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            confusion([0, 5], [0, 1], 2)

    def test_total_equals_record_count(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 4, 100)
        p = rng.integers(0, 4, 100)
        assert confusion(y, p, 4).total == 100


class TestMetrics:
    def test_binary_equation_substitution(self):
        # TP=50, FP=10, FN=10, TN=30 for the positive class
        cm = ConfusionMatrix(np.array([[30, 10], [10, 50]]), ["neg", "pos"])
        report = metrics(cm)
        assert report.accuracy == pytest.approx(0.80, abs=1e-12)
        assert report.precision[1] == pytest.approx(0.8333, abs=1e-4)
        assert report.recall[1] == pytest.approx(0.8333, abs=1e-4)
        assert report.f1[1] == pytest.approx(0.8333, abs=1e-4)

    def test_diagonal_matrix_is_perfect(self):
        report = metrics(ConfusionMatrix(np.diag([5, 3, 7]), ["a", "b", "c"]))
        assert report.accuracy == 1.0
        assert report.f1.tolist() == [1.0, 1.0, 1.0]
        assert report.macro_f1 == 1.0

    def test_absent_class_gets_zero_f1(self):
        counts = np.array([[4, 0, 0], [0, 6, 0], [0, 0, 0]])
        report = metrics(ConfusionMatrix(counts, ["a", "b", "c"]))
        assert report.f1[2] == 0.0
        assert report.accuracy == 1.0
        # macro-F1 hits 1 only when the matrix is diagonal with every class present
        assert report.macro_f1 < 1.0

    def test_empty_matrix_all_zero(self):
        report = metrics(ConfusionMatrix(np.zeros((2, 2), dtype=int), ["a", "b"]))
        assert report.accuracy == 0.0
        assert report.macro_f1 == 0.0

    def test_oracle_equivalence_randomized(self):
        rng = np.random.default_rng(1)
        for _ in range(40):
            c = int(rng.integers(2, 7))
            n = int(rng.integers(1, 400))
            y_true = rng.integers(0, c, n)
            y_pred = rng.integers(0, c, n)
            cm = confusion(y_true, y_pred, c)
            report = metrics(cm)
            oracle = recount_metrics(y_true, y_pred, c)
            assert abs(report.accuracy - oracle["accuracy"]) <= 1e-12
            for k in range(c):
                ok = oracle["per_class"][k]
                tp = cm.counts[k, k]
                fp = cm.counts[:, k].sum() - tp
                fn = cm.counts[k, :].sum() - tp
                assert (tp, fp, fn) == (ok["tp"], ok["fp"], ok["fn"])
                assert abs(report.precision[k] - ok["precision"]) <= 1e-12
                assert abs(report.recall[k] - ok["recall"]) <= 1e-12
                assert abs(report.f1[k] - ok["f1"]) <= 1e-12

    def test_f1_equals_harmonic_identity(self):
        rng = np.random.default_rng(2)
        y_true = rng.integers(0, 3, 300)
        y_pred = rng.integers(0, 3, 300)
        cm = confusion(y_true, y_pred, 3)
        report = metrics(cm)
        for k in range(3):
            tp = cm.counts[k, k]
            fp = cm.counts[:, k].sum() - tp
            fn = cm.counts[k, :].sum() - tp
            if 2 * tp + fp + fn > 0:
                assert report.f1[k] == pytest.approx(2 * tp / (2 * tp + fp + fn), abs=1e-12)

    def test_accuracy_is_trace_over_total(self):
        rng = np.random.default_rng(3)
        counts = rng.integers(0, 50, (4, 4))
        cm = ConfusionMatrix(counts, list("abcd"))
        assert metrics(cm).accuracy == pytest.approx(
            np.trace(counts) / counts.sum(), abs=1e-12
        )

    def test_class_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        counts = rng.integers(0, 30, (3, 3))
        names = ["a", "b", "c"]
        base = metrics(ConfusionMatrix(counts, names))
        perm = [2, 0, 1]
        permuted = metrics(
            ConfusionMatrix(counts[np.ix_(perm, perm)], [names[i] for i in perm])
        )
        for new_pos, old_pos in enumerate(perm):
            assert permuted.f1[new_pos] == pytest.approx(base.f1[old_pos], abs=1e-12)
            assert permuted.precision[new_pos] == pytest.approx(base.precision[old_pos], abs=1e-12)
        assert permuted.accuracy == pytest.approx(base.accuracy, abs=1e-12)
        assert permuted.macro_f1 == pytest.approx(base.macro_f1, abs=1e-12)


def _identity_unit(c: int) -> MlpModel:
    """Oracle unit: argmax of the input one-hot encodes the true class."""
    return MlpModel([Layer(np.eye(c) * 50.0, np.zeros(c), "softmax")])


def _constant_unit(c: int, winner: int) -> MlpModel:
    w = np.zeros((c, c))
    b = np.zeros(c)
    b[winner] = 50.0
    return MlpModel([Layer(w, b, "softmax")])


class TestEvaluate:
    def test_oracle_unit_scores_one(self):
        rng = np.random.default_rng(5)
        classes = ["A", "B", "C"]
        idx = rng.integers(0, 3, 60)
        d = make_dataset(np.eye(3)[idx], [classes[i] for i in idx])
        report = evaluate(_identity_unit(3), d, classes=classes)
        assert report.accuracy == 1.0

    def test_constant_predictor_hand_counts(self):
        labels = ["A"] * 90 + ["B"] * 10
        d = make_dataset(np.zeros((100, 2)), labels)
        report = evaluate(_constant_unit(2, 0), d, classes=["A", "B"])
        assert report.accuracy == pytest.approx(0.9)
        assert report.f1[1] == 0.0

    def test_empty_test_set(self):
        d = make_dataset(np.empty((0, 2)), [])
        with pytest.raises(EmptyDataset):
            evaluate(_identity_unit(2), d, classes=["A", "B"])

    def test_bare_model_requires_vocabulary(self):
        d = make_dataset(np.zeros((2, 2)), ["A", "B"])
        with pytest.raises(SchemaMismatch):
            evaluate(_identity_unit(2), d)

    def test_label_outside_vocabulary(self):
        d = make_dataset(np.zeros((1, 2)), ["Z"])
        with pytest.raises(SchemaMismatch):
            evaluate(_identity_unit(2), d, classes=["A", "B"])


class TestContrast:
    def test_identical_test_sets_have_zero_deltas(self):
        rng = np.random.default_rng(6)
        idx = rng.integers(0, 2, 50)
        d = make_dataset(np.eye(2)[idx], [["A", "B"][i] for i in idx])
        report = contrast(_identity_unit(2), d, d, classes=["A", "B"])
        assert all(delta == 0.0 for delta in report.f1_delta.values())

    def test_delta_definition(self):
        rng = np.random.default_rng(7)
        idx = rng.integers(0, 2, 40)
        balanced = make_dataset(np.eye(2)[idx], [["A", "B"][i] for i in idx])
        original = make_dataset(np.zeros((40, 2)), [["A", "B"][i] for i in idx])
        report = contrast(_identity_unit(2), balanced, original, classes=["A", "B"])
        for i, name in enumerate(["A", "B"]):
            assert report.f1_delta[name] == pytest.approx(
                report.balanced.f1[i] - report.original.f1[i], abs=1e-12
            )


class TestHeatmap:
    def test_two_by_two_has_four_cells(self):
        cm = ConfusionMatrix(np.array([[3, 1], [0, 5]]), ["a", "b"])
        svg = render_heatmap(cm)
        assert svg.count('class="cell"') == 4
        assert svg.startswith('<?xml version="1.0"')
        assert "</svg>" in svg

    def test_zero_matrix_renders_uniform_minimum(self):
        cm = ConfusionMatrix(np.zeros((2, 2), dtype=int), ["a", "b"])
        svg = render_heatmap(cm)
        assert svg.count("rgb(247,251,255)") == 4

    def test_fifteen_class_grid(self):
        rng = np.random.default_rng(8)
        names = [f"c{i}" for i in range(15)]
        cm = ConfusionMatrix(rng.integers(0, 9, (15, 15)), names)
        svg = render_heatmap(cm)
        assert svg.count('class="cell"') == 225
        for name in names:
            assert name in svg

    def test_writes_to_path(self, tmp_path):
        cm = ConfusionMatrix(np.array([[1]]), ["only"])
        out = tmp_path / "map.svg"
        render_heatmap(cm, out)
        assert out.read_text().count('class="cell"') == 1


class TestWriteReport:
    def _report(self):
        cm = confusion([0, 0, 1, 1], [0, 1, 1, 1], ["x", "y"])
        return metrics(cm)

    def test_json_keys(self, tmp_path):
        path = tmp_path / "report.json"
        write_report(self._report(), path)
        obj = json.loads(path.read_text())
        assert set(obj) == {"accuracy", "macro_f1", "per_class", "confusion"}

    def test_byte_identical_output(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_report(self._report(), a)
        write_report(self._report(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_confusion_csv_structure(self, tmp_path):
        path = tmp_path / "report.json"
        written = write_report(self._report(), path)
        csv_path = tmp_path / "report_confusion.csv"
        assert csv_path in written
        lines = csv_path.read_text().strip().split("\n")
        assert len(lines) == 3
        assert lines[0].split(",")[1:] == ["x", "y"]

    def test_contrast_report_emits_two_csvs(self, tmp_path):
        rng = np.random.default_rng(9)
        idx = rng.integers(0, 2, 30)
        d = make_dataset(np.eye(2)[idx], [["A", "B"][i] for i in idx])
        report = contrast(_identity_unit(2), d, d, classes=["A", "B"])
        written = write_report(report, tmp_path / "contrast.json")
        names = {p.name for p in written}
        assert names == {
            "contrast.json",
            "contrast_confusion_balanced.csv",
            "contrast_confusion_original.csv",
        }
        obj = json.loads((tmp_path / "contrast.json").read_text())
        assert set(obj) == {"balanced", "original", "f1_delta"}
