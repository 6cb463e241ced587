import math
import random

import pytest
from hypothesis import given, strategies as st

from changematch.metrics import ConfusionCounts, auc_score, commit_metrics, d2h, line_metrics

from oracles import auc_pairs, brute_commit_metrics, brute_line_metrics


class TestCommitMetrics:
    def test_hand_example(self):
        m = commit_metrics(ConfusionCounts(tp=2, fp=1, tn=5, fn=2))
        assert m.precision == pytest.approx(2 / 3)
        assert m.recall == 0.5
        assert m.f1 == pytest.approx(4 / 7)
        assert m.far == pytest.approx(1 / 6)
        assert m.d2h == pytest.approx(math.sqrt(0.25 + 1 / 36) / math.sqrt(2))
        assert m.d2h == pytest.approx(0.3727, abs=5e-5)

    def test_perfect(self):
        m = commit_metrics(ConfusionCounts(tp=3, tn=4))
        assert (m.precision, m.recall, m.f1, m.far, m.d2h) == (1.0, 1.0, 1.0, 0.0, 0.0)

    def test_always_clean(self):
        m = commit_metrics(ConfusionCounts(tn=7, fn=3))
        assert (m.precision, m.recall, m.far, m.f1) == (0.0, 0.0, 0.0, 0.0)
        assert m.d2h == pytest.approx(1 / math.sqrt(2))
        assert m.d2h == pytest.approx(0.7071, abs=5e-5)

    def test_d2h_extremes(self):
        assert d2h(0.0, 1.0) == pytest.approx(1.0)
        assert d2h(1.0, 0.0) == 0.0

    def test_auc_example(self):
        scores = [(0.9, True), (0.8, False), (0.7, True), (0.6, False)]
        assert auc_score(scores) == 0.75 == auc_pairs(scores)

    def test_auc_ties_and_single_class(self):
        assert auc_score([(0.5, True), (0.5, False)]) == 0.5
        assert auc_score([(0.1, True), (0.2, True)]) is None
        assert auc_score([]) is None

    def test_counts_from_labels(self):
        c = ConfusionCounts.from_labels([True, True, False, False], [True, False, True, False])
        assert c == ConfusionCounts(1, 1, 1, 1) and c.total == 4


@given(st.lists(st.tuples(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]), st.booleans()), max_size=40))
def test_auc_matches_pairs(scores):
    assert auc_score(scores) == auc_pairs(scores)


@given(st.lists(st.tuples(st.integers(0, 1000).map(lambda k: k / 1000), st.booleans()), min_size=2, max_size=30))
def test_auc_invariant_under_monotone_transform(scores):
    # grid spacing keeps the transform strictly increasing in floating point
    transformed = [(math.exp(3 * s) + 2, y) for s, y in scores]
    assert auc_score(scores) == auc_score(transformed)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_rates_in_unit_interval(tp, fp, tn, fn):
    m = commit_metrics(ConfusionCounts(tp, fp, tn, fn))
    for v in (m.precision, m.recall, m.f1, m.far, m.d2h):
        assert 0.0 <= v <= 1.0 + 1e-15


class TestLineMetrics:
    def test_first_line_buggy(self):
        assert line_metrics([True, False, False]).ifa == 0

    def test_recall_at_20(self):
        flags = [True, False] + [True] * 3 + [False] * 5
        assert line_metrics(flags).recall_at_20pct_loc == 0.25

    def test_effort_at_20(self):
        flags = [False] * 50
        for i in (1, 4, 10, 11, 20, 30, 31, 40, 45, 49):
            flags[i] = True
        # 2nd buggy line (ceil(0.2 * 10) = 2) sits at rank 5
        assert line_metrics(flags).effort_at_20pct_recall == 0.1

    def test_no_buggy_lines(self):
        m = line_metrics([False] * 4, k=2)
        assert m == (0.0, 0.0, 0.0, 4)

    def test_top_k_short_commit(self):
        assert line_metrics([True, False], k=10).top_k_accuracy == 0.5

    def test_ceil_not_float_rounded(self):
        # 0.2 * 15 is 3.0000000000000004 in floating point; the cut must be 3
        flags = [False] * 15
        assert line_metrics(flags).recall_at_20pct_loc == 0.0
        flags = [False, False, True] + [False] * 12
        assert line_metrics(flags).recall_at_20pct_loc == 1.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            line_metrics([])


@given(st.lists(st.booleans(), min_size=1, max_size=60), st.integers(1, 20))
def test_line_metrics_match_brute_force(flags, k):
    assert tuple(line_metrics(flags, k)) == brute_line_metrics(flags, k)
