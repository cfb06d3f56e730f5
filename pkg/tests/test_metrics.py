import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import fbeta_score, precision_score, recall_score

from scanqa.metrics import (MetricsReport, assemble_report, confusion,
                            per_class_prf, read_predictions, report,
                            write_predictions)

PREDICTION_CASES = st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 2), min_size=n, max_size=n),
    st.lists(st.integers(0, 2), min_size=n, max_size=n),
))


class TestConfusion:
    def test_identity(self):
        mat = confusion([0, 1, 2], [0, 1, 2])
        np.testing.assert_array_equal(mat, np.eye(3, dtype=int))

    def test_single_off_diagonal(self):
        mat = confusion([0, 0], [1, 1])
        expect = np.zeros((3, 3), dtype=int)
        expect[0, 1] = 2
        np.testing.assert_array_equal(mat, expect)

    def test_total_count(self):
        mat = confusion([0, 1, 1, 2, 0], [2, 1, 0, 2, 0])
        assert mat.sum() == 5

    def test_label_errors(self):
        with pytest.raises(ValueError):
            confusion([0, 3], [0, 1])
        with pytest.raises(ValueError):
            confusion([0, 1], [0, -1])
        with pytest.raises(ValueError):
            confusion([], [])


class TestPerClass:
    def test_worked_example(self):
        rows = per_class_prf(confusion([0, 0, 1, 2], [0, 1, 1, 2]))
        p, r, f1, f2, support = rows[0]
        assert (p, r) == (1.0, 0.5)
        assert f1 == pytest.approx(2 / 3)
        assert support == 2
        p, r, f1, _, _ = rows[1]
        assert (p, r) == (0.5, 1.0)
        assert f1 == pytest.approx(2 / 3)
        assert rows[2][:4] == (1.0, 1.0, 1.0, 1.0)

    def test_zero_support_zero_predictions(self):
        rows = per_class_prf(confusion([0, 0], [0, 0]))
        assert rows[1] == (0.0, 0.0, 0.0, 0.0, 0)
        assert rows[2] == (0.0, 0.0, 0.0, 0.0, 0)

    def test_equal_pr_implies_equal_fbeta(self):
        rows = per_class_prf(confusion([0, 0, 1, 1], [0, 1, 1, 0]))
        p, r, f1, f2, _ = rows[0]
        assert p == r == f1 == f2

    @settings(max_examples=100)
    @given(PREDICTION_CASES)
    def test_agrees_with_sklearn(self, case):
        y_true, y_pred = case
        rows = per_class_prf(confusion(y_true, y_pred))
        labels = [0, 1, 2]
        p = precision_score(y_true, y_pred, labels=labels, average=None,
                            zero_division=0)
        r = recall_score(y_true, y_pred, labels=labels, average=None,
                         zero_division=0)
        f1 = fbeta_score(y_true, y_pred, beta=1, labels=labels, average=None,
                         zero_division=0)
        f2 = fbeta_score(y_true, y_pred, beta=2, labels=labels, average=None,
                         zero_division=0)
        for c in range(3):
            assert rows[c][0] == pytest.approx(p[c], abs=1e-12)
            assert rows[c][1] == pytest.approx(r[c], abs=1e-12)
            assert rows[c][2] == pytest.approx(f1[c], abs=1e-12)
            assert rows[c][3] == pytest.approx(f2[c], abs=1e-12)


class TestReport:
    def test_worked_example_aggregates(self):
        rep = report([0, 0, 1, 2], [0, 1, 1, 2])
        assert rep.macro.f1 == pytest.approx(7 / 9)
        assert rep.micro.accuracy == pytest.approx(0.75)
        assert rep.weighted.f1 == pytest.approx(0.75)

    def test_perfect_predictions(self):
        rep = report([0, 1, 2, 1], [0, 1, 2, 1])
        assert rep.as_row() == (1.0,) * 15
        assert rep.mean_of_15 == 1.0

    def test_published_baseline_row_mean(self):
        """The 15 reference values must aggregate to 0.745."""
        rep = assemble_report(
            weighted=(0.800, 0.846, 0.818, 0.834, 0.846),
            macro=(0.587, 0.552, 0.560, 0.554, 0.552),
            micro=(0.846,) * 5,
        )
        assert rep.mean_of_15 == pytest.approx(0.745, abs=5e-4)

    @settings(max_examples=200)
    @given(PREDICTION_CASES)
    def test_identities_exact(self, case):
        y_true, y_pred = case
        rep = report(y_true, y_pred)
        assert rep.micro.precision == rep.micro.recall == rep.micro.f1 \
            == rep.micro.f2 == rep.micro.accuracy
        assert rep.weighted.recall == rep.weighted.accuracy == rep.micro.accuracy
        assert rep.macro.accuracy == rep.macro.recall

    @settings(max_examples=100)
    @given(PREDICTION_CASES)
    def test_range_and_permutation_invariance(self, case):
        y_true, y_pred = case
        rep = report(y_true, y_pred)
        assert all(0.0 <= v <= 1.0 for v in rep.as_row())
        perm = np.random.default_rng(0).permutation(len(y_true))
        rep2 = report(np.asarray(y_true)[perm], np.asarray(y_pred)[perm])
        assert rep == rep2

    def test_round_trip_dict(self):
        rep = report([0, 1, 2, 0], [0, 2, 2, 1])
        again = MetricsReport.from_dict(rep.to_dict())
        assert again == rep


class TestPredictionFiles:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "preds.csv"
        write_predictions(path, [(0, 1, 1), (1, 2, 0), (2, 0, 0)])
        y_true, y_pred = read_predictions(path)
        assert list(y_true) == [1, 2, 0]
        assert list(y_pred) == [1, 0, 0]

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_predictions(path)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("index,true,pred\n")
        with pytest.raises(ValueError):
            read_predictions(path)
