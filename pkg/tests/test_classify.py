import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from changematch.classify import (
    CandidateMatch,
    ClassifierConfig,
    LaModel,
    Prediction,
    ThresholdConfig,
    TrainedClassifier,
    UntunableError,
    candidate_matches,
    ensemble_classify,
    knn_classify,
    la_classify,
    threshold_classify,
    train_la,
    tune_threshold,
)
from changematch.corpus import Label
from changematch.index import build_index

from conftest import change, doc
from oracles import sweep_threshold

B, C = Label.BUGGY, Label.CLEAN


def matches(*pairs):
    return [CandidateMatch(s, lbl, i, f"c{i}") for i, (s, lbl) in enumerate(pairs)]


FOUR_MATCHES = matches((157, C), (104, B), (78, C), (60, C))


class TestKnn:
    def test_four_match_example(self):
        p = knn_classify(FOUR_MATCHES, 3)
        assert p.verdict is C
        assert p.confidence == pytest.approx(1 / 3)
        assert p.supporting_matches == tuple(FOUR_MATCHES[:3])

    def test_all_buggy(self):
        p = knn_classify(matches((5, B), (4, B), (3, B), (2, C)), 3)
        assert p.verdict is B and p.confidence == 1.0

    def test_k1(self):
        assert knn_classify(matches((9, B), (8, C), (7, C)), 1).verdict is B

    def test_empty(self):
        assert knn_classify([], 3) == Prediction(C, 0.0)

    def test_even_tie_is_buggy(self):
        assert knn_classify(matches((2, B), (1, C)), 2).verdict is B

    def test_fewer_matches_than_k(self):
        p = knn_classify(matches((2, B)), 3)
        assert p.verdict is B and p.confidence == 1.0

    def test_unsorted_input(self):
        assert knn_classify(list(reversed(FOUR_MATCHES)), 3) == knn_classify(FOUR_MATCHES, 3)


class TestThreshold:
    def test_four_match_example(self):
        p = threshold_classify(FOUR_MATCHES, ThresholdConfig(100))
        assert p.verdict is B
        assert p.supporting_matches == (FOUR_MATCHES[1],)
        assert p.confidence == pytest.approx(104 / 200)

    def test_no_buggy(self):
        assert threshold_classify(matches((9, C)), ThresholdConfig(1)).verdict is C

    def test_strict_inequality(self):
        assert threshold_classify(FOUR_MATCHES, ThresholdConfig(110)).verdict is C
        assert threshold_classify(FOUR_MATCHES, ThresholdConfig(104)).verdict is C

    def test_zero_threshold(self):
        p = threshold_classify(FOUR_MATCHES, ThresholdConfig(0))
        assert p.verdict is B and p.confidence == 1.0

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ThresholdConfig(math.inf)
        with pytest.raises(ValueError):
            ThresholdConfig(-1)


class TestTuneThreshold:
    def test_separable(self):
        rng = random.Random(0)
        queries = [(matches((rng.uniform(10, 20), B)), B) for _ in range(5)]
        queries += [(matches((rng.uniform(0, 5), B), (30, C)), C) for _ in range(5)]
        queries.append((matches((5.0, B)), C))
        cfg = tune_threshold(queries)
        assert cfg.validation_auc == 1.0
        assert cfg.t_score == 5.0

    def test_mixed_matches_sweep(self):
        queries = [
            (matches((8, B), (9, C)), B),
            (matches((3, B)), C),
            (matches((6, B)), B),
            (matches((7, B)), C),
            (matches((2, C)), C),
            (matches((4, B)), B),
        ]
        cfg = tune_threshold(queries)
        tops = [8, 3, 6, 7, None, 4]
        labels = [True, False, True, False, False, True]
        assert cfg.validation_auc == sweep_threshold(tops, labels)
        # t = 3 gives TPR 1, FPR 1/3 -> AUC 5/6, the unique best
        assert cfg.t_score == 3.0 and cfg.validation_auc == pytest.approx(5 / 6)

    def test_single_class(self):
        with pytest.raises(UntunableError):
            tune_threshold([(matches((1, B)), C), (matches((2, B)), C)])

    def test_no_buggy_matches_at_all(self):
        cfg = tune_threshold([(matches((1, C)), C), (matches((2, C)), B)])
        assert cfg.validation_auc == 0.5 and math.isfinite(cfg.t_score)


def _oracle_la(data, l2=1e-4):
    x = np.array([math.log1p(la) for la, _ in data])
    y = np.array([1.0 if l is B else 0.0 for _, l in data])

    def f(p):
        z = p[0] * x + p[1]
        return np.mean(np.logaddexp(0, z) - y * z) + 0.5 * l2 * (p @ p)

    return minimize(f, np.zeros(2), method="BFGS", options={"gtol": 1e-10}).x


class TestLa:
    def test_all_clean(self):
        model = train_la([(la, C) for la in range(1, 50)])
        assert all(la_classify(model, la).verdict is C for la in range(0, 60))
        assert math.isfinite(model.intercept)

    def test_separable_matches_convex_oracle(self):
        data = [(la, C) for la in range(1, 20)] + [(la, B) for la in range(100, 400, 20)]
        model = train_la(data)
        assert all(la_classify(model, la).verdict is lbl for la, lbl in data)
        w, c = _oracle_la(data)
        assert model.weight == pytest.approx(w, rel=1e-4)
        assert model.intercept == pytest.approx(c, rel=1e-4)

    def test_mixed_matches_convex_oracle(self):
        rng = random.Random(1)
        data = [(rng.randint(0, 300), B if rng.random() < 0.3 else C) for _ in range(200)]
        model = train_la(data)
        w, c = _oracle_la(data)
        assert model.weight == pytest.approx(w, rel=1e-6, abs=1e-8)
        assert model.intercept == pytest.approx(c, rel=1e-6, abs=1e-8)

    def test_constant_la_majority(self):
        model = train_la([(10, B)] * 7 + [(10, C)] * 3)
        assert la_classify(model, 10).verdict is B
        model = train_la([(10, B)] * 3 + [(10, C)] * 7)
        assert la_classify(model, 10).verdict is C

    def test_no_log_transform(self):
        model = train_la([(1, C), (2, C), (50, B), (60, B)], log_transform=False)
        assert not model.log_transform
        assert la_classify(model, 55).verdict is B

    def test_empty(self):
        with pytest.raises(ValueError):
            train_la([])


class TestEnsemble:
    def test_soft_vote_clean(self):
        p = ensemble_classify([Prediction(B, 0.667), Prediction(C, 0.2)])
        assert p.verdict is C and p.confidence == pytest.approx(0.4335)

    def test_all_buggy(self):
        p = ensemble_classify([Prediction(B, 1.0)] * 3)
        assert p.verdict is B and p.confidence == 1.0

    def test_boundary_inclusive(self):
        assert ensemble_classify([Prediction(B, 0.6), Prediction(C, 0.4)]).verdict is B

    def test_support_union(self):
        m = matches((3, B), (2, C))
        p = ensemble_classify([Prediction(B, 1, (m[0],)), Prediction(C, 0, (m[1], m[0]))])
        assert p.supporting_matches == (m[0], m[1])

    def test_needs_two(self):
        with pytest.raises(ValueError):
            ensemble_classify([Prediction(B, 1.0)])


class TestCandidateMatches:
    def test_merge_keeps_max_and_sorts(self):
        index = build_index([doc("a", ["foo bar baz"], "buggy", path="x"), doc("b", ["foo"], path="y")])
        probes = [change(["foo"]), change(["foo bar baz"], path="q")]
        merged = candidate_matches(index, probes)
        assert [m.doc_id for m in merged] == [0, 1]
        per_probe = [index.mlt_query(p) for p in probes]
        best0 = max(h.relevance_score for hits in per_probe for h in hits if h.doc_id == 0)
        assert merged[0].relevance_score == best0
        assert merged[0].label is B

    def test_empty_probe(self):
        index = build_index([doc("a", ["foo"])])
        assert candidate_matches(index, [change([])]) == []


class TestTrainedClassifier:
    def test_single_member_passthrough(self):
        clf = TrainedClassifier(ClassifierConfig(members=("knn",)))
        assert clf.predict(FOUR_MATCHES, 10) == knn_classify(FOUR_MATCHES, 3)

    def test_knn_la(self):
        clf = TrainedClassifier(ClassifierConfig(), la_model=LaModel(0.0, 0.0))
        p = clf.predict(FOUR_MATCHES, 10)
        assert p.confidence == pytest.approx((1 / 3 + 0.5) / 2)

    def test_bad_member(self):
        with pytest.raises(ValueError):
            ClassifierConfig(members=("svm",))


# --- properties ---------------------------------------------------------------

labels = st.sampled_from([B, C])
match_lists = st.lists(st.tuples(st.floats(0, 1000, allow_nan=False), labels), max_size=15).map(
    lambda ps: sorted(matches(*ps), key=lambda m: (-m.relevance_score, m.doc_id))
)


@given(match_lists, st.integers(1, 9))
def test_knn_rank_invariance(ms, k):
    transformed = [CandidateMatch(math.exp(m.relevance_score / 100) * 3 + 7, m.label, m.doc_id, m.commit_hash) for m in ms]
    assert knn_classify(ms, k).verdict == knn_classify(transformed, k).verdict


@given(match_lists, st.floats(0, 1000), st.floats(0, 1000))
def test_threshold_monotone(ms, t1, t2):
    lo, hi = sorted((t1, t2))
    if threshold_classify(ms, ThresholdConfig(lo)).verdict is C:
        assert threshold_classify(ms, ThresholdConfig(hi)).verdict is C


@given(st.lists(st.floats(0, 1), min_size=2, max_size=6), st.randoms())
def test_ensemble_symmetric(confs, rnd):
    preds = [Prediction(B if c >= 0.5 else C, c) for c in confs]
    shuffled = list(preds)
    rnd.shuffle(shuffled)
    assert ensemble_classify(preds) == ensemble_classify(shuffled)


@given(st.floats(0.01, 5), st.floats(-5, 5), st.integers(0, 10_000), st.integers(0, 10_000))
def test_la_monotone(w, c, a, b):
    model = LaModel(w, c)
    lo, hi = sorted((a, b))
    assert model.probability(lo) <= model.probability(hi)
    if la_classify(model, lo).verdict is B:
        assert la_classify(model, hi).verdict is B
