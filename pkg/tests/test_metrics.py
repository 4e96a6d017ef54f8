import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ontoembed.checks import set_ddi, set_jaccard, set_prf
from ontoembed.downstream.metrics import ddi_pair_counts, ddi_score, jaccard, precision_recall_f1
from ontoembed.errors import UndefinedMetric


def hot(sets, vocab):
    return np.array([[v in s for v in vocab] for s in sets], dtype=bool)


class TestJaccard:
    def test_examples(self):
        v = "ABC"
        assert jaccard(hot([{"A", "B"}], v), hot([{"A", "B"}], v)) == 1.0
        assert jaccard(hot([{"A"}], v), hot([{"B"}], v)) == 0.0
        assert jaccard(hot([{"A", "B"}], v), hot([{"B", "C"}], v)) == 1 / 3

    def test_patient_then_dataset_mean(self):
        v = "AB"
        truth = hot([{"A"}, {"A"}, {"A"}], v)
        pred = hot([{"A"}, {"B"}, {"A"}], v)
        # patient x: (1 + 0) / 2, patient y: 1
        assert jaccard(truth, pred, ["x", "x", "y"]) == 0.75

    def test_undefined(self):
        with pytest.raises(UndefinedMetric):
            jaccard(np.zeros((1, 3)), np.zeros((1, 3)))

    def test_vocabulary_permutation(self, rng):
        t = rng.random((6, 9)) < 0.4
        p = rng.random((6, 9)) < 0.4
        t[:, 0] = True
        p[:, 1] = True
        perm = rng.permutation(9)
        assert jaccard(t, p) == pytest.approx(jaccard(t[:, perm], p[:, perm]), abs=1e-15)
        assert tuple(precision_recall_f1(t, p)) == pytest.approx(
            tuple(precision_recall_f1(t[:, perm], p[:, perm])), abs=1e-15)


class TestPRF:
    def test_perfect(self):
        t = hot([{"a", "b"}], "abcd")
        assert tuple(precision_recall_f1(t, t)) == (1.0, 1.0, 1.0)

    def test_superset(self):
        prf = precision_recall_f1(hot([{"a", "b"}], "abcd"), hot([set("abcd")], "abcd"))
        assert (prf.precision, prf.recall) == (0.5, 1.0)
        assert prf.f1 == pytest.approx(2 / 3, abs=1e-15)

    def test_empty_prediction_flagged(self):
        with pytest.warns(UserWarning):
            prf = precision_recall_f1(hot([{"a"}], "ab"), hot([set()], "ab"))
        assert tuple(prf) == (0.0, 0.0, 0.0) and prf.empty_predictions == 1


class TestDDI:
    def test_examples(self):
        pred = hot([{"a", "b", "c"}], "abc")
        assert ddi_score(pred, np.zeros((3, 3))) == 0.0
        d = np.zeros((3, 3))
        d[0, 1] = d[1, 0] = 1
        assert ddi_score(pred, d) == 1 / 3

    def test_small_admissions_ignored_and_undefined(self):
        d = np.ones((3, 3)) - np.eye(3)
        assert ddi_pair_counts(hot([{"a"}, {"a", "b"}], "abc"), d) == (1.0, 1.0)
        with pytest.raises(UndefinedMetric):
            ddi_score(hot([{"a"}, set()], "abc"), d)

    def test_reference_rate_by_construction(self):
        # 1000 two-drug admissions over distinct pairs, 78 of them interacting
        rng = np.random.default_rng(7)
        pairs = list(itertools.combinations(range(50), 2))[:1000]
        bad = set(rng.choice(len(pairs), size=78, replace=False).tolist())
        d = np.zeros((50, 50))
        pred = np.zeros((1000, 50), dtype=bool)
        for i, (a, b) in enumerate(pairs):
            pred[i, [a, b]] = True
            if i in bad:
                d[a, b] = d[b, a] = 1
        assert ddi_score(pred, d) == pytest.approx(0.078, abs=1e-15)

    def test_upper_triangle_equivalence(self, rng):
        upper = np.triu(rng.random((8, 8)) < 0.3, 1).astype(float)
        pred = rng.random((20, 8)) < 0.5
        hits = sum(upper[a, b] for row in pred for a, b in itertools.combinations(np.flatnonzero(row), 2))
        ordered = sum((upper + upper.T)[a, b] for row in pred
                      for a in np.flatnonzero(row) for b in np.flatnonzero(row) if a != b)
        assert ddi_pair_counts(pred, upper + upper.T)[0] == hits == ordered / 2


cases = st.integers(1, 6).flatmap(lambda n: st.integers(2, 8).flatmap(lambda m: st.tuples(
    arrays(bool, (n, m)), arrays(bool, (n, m)), st.lists(st.integers(0, 2), min_size=n, max_size=n))))


@settings(max_examples=300, deadline=None)
@given(cases)
def test_against_set_oracles(case):
    truth, pred, patients = case
    truth = truth.copy()
    truth[:, 0] = True
    ts = [set(np.flatnonzero(r)) for r in truth]
    ps = [set(np.flatnonzero(r)) for r in pred]
    assert abs(jaccard(truth, pred, patients) - set_jaccard(ts, ps, patients)) <= 1e-12
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        got = tuple(precision_recall_f1(truth, pred, patients))
    assert max(abs(a - b) for a, b in zip(got, set_prf(ts, ps, patients))) <= 1e-12
    m = truth.shape[1]
    d = np.zeros((m, m))
    inter = set()
    for a, b in itertools.combinations(range(m), 2):
        if (a * 7 + b) % 3 == 0:
            d[a, b] = d[b, a] = 1
            inter.add(frozenset((a, b)))
    if any(len(p) >= 2 for p in ps):
        assert abs(ddi_score(pred, d) - set_ddi(ps, inter)) <= 1e-12
