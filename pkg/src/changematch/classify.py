"""Commit classifiers over retrieved candidate matches."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Collection, Iterable, Mapping, Sequence

from .corpus import Change, Label
from .index import DEFAULT_MAX_QUERY_TERMS, DEFAULT_TOP_K, InvertedIndex, Term


class UntunableError(ValueError):
    """Validation data lacks one of the two classes."""


@dataclass(frozen=True)
class CandidateMatch:
    relevance_score: float
    label: Label
    doc_id: int
    commit_hash: str
    file_path: str = ""
    term_contributions: Mapping[Term, float] = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class Prediction:
    verdict: Label
    confidence: float
    supporting_matches: tuple[CandidateMatch, ...] = ()

    @property
    def buggy(self) -> bool:
        return self.verdict is Label.BUGGY


@dataclass(frozen=True)
class ThresholdConfig:
    t_score: float = 0.0
    validation_auc: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.t_score) or self.t_score < 0:
            raise ValueError(f"t_score must be finite and non-negative, got {self.t_score}")


@dataclass(frozen=True)
class LaModel:
    weight: float
    intercept: float
    log_transform: bool = True

    def feature(self, la: float) -> float:
        return math.log1p(la) if self.log_transform else float(la)

    def probability(self, la: float) -> float:
        return _sigmoid(self.weight * self.feature(la) + self.intercept)


def candidate_matches(
    index: InvertedIndex,
    changes: Iterable[Change],
    top_k: int = DEFAULT_TOP_K,
    max_query_terms: int = DEFAULT_MAX_QUERY_TERMS,
    exclude_commits: Collection[str] = (),
) -> list[CandidateMatch]:
    """One MLT query per change, merged into a single ranked candidate set.

    A document retrieved by several probes keeps its best score.
    """
    best: dict[int, CandidateMatch] = {}
    for change in changes:
        if not change.lines_added:
            continue
        for hit in index.mlt_query(change, top_k=top_k, max_query_terms=max_query_terms, exclude_commits=exclude_commits):
            prev = best.get(hit.doc_id)
            if prev is None or hit.relevance_score > prev.relevance_score:
                best[hit.doc_id] = CandidateMatch(
                    relevance_score=hit.relevance_score,
                    label=hit.label,
                    doc_id=hit.doc_id,
                    commit_hash=hit.commit_hash,
                    file_path=hit.file_path,
                    term_contributions=hit.term_contributions,
                )
    return sort_matches(best.values())


def sort_matches(matches: Iterable[CandidateMatch]) -> list[CandidateMatch]:
    return sorted(matches, key=lambda m: (-m.relevance_score, m.doc_id))


def top_buggy_match(matches: Sequence[CandidateMatch]) -> CandidateMatch | None:
    best = None
    for m in matches:
        if m.label is Label.BUGGY and (best is None or m.relevance_score > best.relevance_score):
            best = m
    return best


def knn_classify(matches: Sequence[CandidateMatch], k: int = 3) -> Prediction:
    """Majority label of the ``k`` best matches; an even split counts as buggy."""
    if k < 1:
        raise ValueError("k must be >= 1")
    top = tuple(sort_matches(matches)[:k])
    if not top:
        return Prediction(Label.CLEAN, 0.0)
    buggy = sum(m.label is Label.BUGGY for m in top)
    verdict = Label.BUGGY if 2 * buggy >= len(top) else Label.CLEAN
    return Prediction(verdict, buggy / len(top), top)


def threshold_classify(matches: Sequence[CandidateMatch], cfg: ThresholdConfig) -> Prediction:
    top = top_buggy_match(matches)
    t = cfg.t_score
    if top is None:
        return Prediction(Label.CLEAN, 0.0)
    is_buggy = top.relevance_score > t
    if t > 0:
        confidence = min(1.0, top.relevance_score / (2.0 * t))
    else:
        confidence = 1.0 if is_buggy else 0.0
    if is_buggy:
        return Prediction(Label.BUGGY, confidence, (top,))
    return Prediction(Label.CLEAN, confidence)


def binary_auc(predicted: Sequence[bool], actual: Sequence[bool]) -> float:
    """ROC area of hard 0/1 predictions, i.e. (TPR + TNR) / 2.

    Computed as one integer ratio so the result is the correctly rounded
    pair-counting value.
    """
    pos = sum(actual)
    neg = len(actual) - pos
    tp = sum(p and a for p, a in zip(predicted, actual))
    fp = sum(p and not a for p, a in zip(predicted, actual))
    # doubled count of correctly ordered (buggy, clean) pairs, ties counting one
    twice_correct = 2 * tp * (neg - fp) + tp * fp + (pos - tp) * (neg - fp)
    return twice_correct / (2 * pos * neg)


def threshold_candidates(top_scores: Iterable[float | None]) -> list[float]:
    """0 plus every distinct observed top-buggy score, ascending.

    The largest observed score stands in for +inf: nothing observed
    exceeds it, so it induces the all-clean classifier while keeping the
    threshold finite.
    """
    return sorted({0.0} | {s for s in top_scores if s is not None})


def tune_threshold(validation_queries: Sequence[tuple[Sequence[CandidateMatch], Label]]) -> ThresholdConfig:
    """Sweep candidate thresholds and keep the one with the best validation
    AUC; ties go to the larger threshold."""
    actual = [Label(lbl) is Label.BUGGY for _, lbl in validation_queries]
    if all(actual) or not any(actual):
        raise UntunableError("threshold tuning needs validation queries of both classes")
    tops = []
    for matches, _ in validation_queries:
        m = top_buggy_match(matches)
        tops.append(None if m is None else m.relevance_score)
    best_t, best_auc = 0.0, -1.0
    for t in threshold_candidates(tops):
        predicted = [s is not None and s > t for s in tops]
        auc = binary_auc(predicted, actual)
        if auc >= best_auc:
            best_t, best_auc = t, auc
    return ThresholdConfig(best_t, best_auc)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def train_la(
    training: Sequence[tuple[int, Label]],
    l2: float = 1e-4,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    log_transform: bool = True,
) -> LaModel:
    """Fit P(buggy | la) = sigmoid(w * x + c) with x = ln(1 + la).

    Minimizes the mean negative log-likelihood plus ``l2 / 2 * (w^2 + c^2)``
    by damped Newton steps; the penalty keeps the optimum finite even for
    single-class or separable data.
    """
    if not training:
        raise ValueError("training set is empty")
    xs = [math.log1p(la) if log_transform else float(la) for la, _ in training]
    ys = [1.0 if Label(lbl) is Label.BUGGY else 0.0 for _, lbl in training]
    n = len(xs)

    def objective(w: float, c: float) -> float:
        total = 0.0
        for x, y in zip(xs, ys):
            z = w * x + c
            # log(1 + e^z) - y z, evaluated stably
            total += (z if z > 0 else 0.0) + math.log1p(math.exp(-abs(z))) - y * z
        return total / n + 0.5 * l2 * (w * w + c * c)

    w = c = 0.0
    f = objective(w, c)
    for _ in range(max_iter):
        gw = gc = hww = hwc = hcc = 0.0
        for x, y in zip(xs, ys):
            p = _sigmoid(w * x + c)
            r = p - y
            gw += r * x
            gc += r
            s = p * (1.0 - p)
            hww += s * x * x
            hwc += s * x
            hcc += s
        gw = gw / n + l2 * w
        gc = gc / n + l2 * c
        if math.hypot(gw, gc) < tol:
            break
        hww = hww / n + l2
        hwc = hwc / n
        hcc = hcc / n + l2
        det = hww * hcc - hwc * hwc
        dw = (hcc * gw - hwc * gc) / det
        dc = (hww * gc - hwc * gw) / det
        step = 1.0
        while step > 1e-12:
            nw, nc = w - step * dw, c - step * dc
            nf = objective(nw, nc)
            if nf <= f:
                break
            step *= 0.5
        else:
            break
        w, c, f = nw, nc, nf
    return LaModel(w, c, log_transform)


def la_classify(model: LaModel, la: int) -> Prediction:
    p = model.probability(la)
    return Prediction(Label.BUGGY if p >= 0.5 else Label.CLEAN, p)


def ensemble_classify(predictions: Sequence[Prediction]) -> Prediction:
    """Equal-weight soft vote: buggy iff the mean confidence is >= 0.5."""
    if len(predictions) < 2:
        raise ValueError("an ensemble needs at least two member predictions")
    mean = math.fsum(p.confidence for p in predictions) / len(predictions)
    support: dict[int, CandidateMatch] = {}
    for p in predictions:
        for m in p.supporting_matches:
            support.setdefault(m.doc_id, m)
    return Prediction(
        Label.BUGGY if mean >= 0.5 else Label.CLEAN,
        mean,
        tuple(sort_matches(support.values())),
    )


CLASSIFIERS = ("knn", "threshold", "la")


@dataclass(frozen=True)
class ClassifierConfig:
    """Which members vote and with what parameters.

    A single member is used directly; two or more are combined by
    :func:`ensemble_classify`. ``t_score=None`` means tune on training data.
    """

    members: tuple[str, ...] = ("knn", "la")
    k: int = 3
    t_score: float | None = None
    la_log_transform: bool = True
    top_k: int = DEFAULT_TOP_K
    max_query_terms: int = DEFAULT_MAX_QUERY_TERMS

    def __post_init__(self):
        unknown = set(self.members) - set(CLASSIFIERS)
        if unknown or not self.members:
            raise ValueError(f"unknown classifier member(s) {sorted(unknown)}; choose from {CLASSIFIERS}")
        if len(set(self.members)) != len(self.members):
            raise ValueError("duplicate classifier members")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def to_dict(self) -> dict:
        return {
            "members": list(self.members),
            "k": self.k,
            "t_score": "auto" if self.t_score is None else self.t_score,
            "la_log_transform": self.la_log_transform,
            "top_k": self.top_k,
            "max_query_terms": self.max_query_terms,
        }


@dataclass
class TrainedClassifier:
    config: ClassifierConfig
    threshold: ThresholdConfig | None = None
    la_model: LaModel | None = None

    def predict(self, matches: Sequence[CandidateMatch], la: int) -> Prediction:
        preds = []
        for member in self.config.members:
            if member == "knn":
                preds.append(knn_classify(matches, self.config.k))
            elif member == "threshold":
                preds.append(threshold_classify(matches, self.threshold or ThresholdConfig()))
            else:
                if self.la_model is None:
                    raise RuntimeError("la member requested but no la model trained")
                preds.append(la_classify(self.la_model, la))
        if len(preds) == 1:
            return preds[0]
        return ensemble_classify(preds)

    def to_dict(self) -> dict:
        out: dict = {"config": self.config.to_dict()}
        if self.threshold is not None:
            out["t_score"] = self.threshold.t_score
            out["validation_auc"] = self.threshold.validation_auc
        if self.la_model is not None:
            out["la_model"] = {
                "weight": self.la_model.weight,
                "intercept": self.la_model.intercept,
                "log_transform": self.la_model.log_transform,
            }
        return out
