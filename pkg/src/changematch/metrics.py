"""Commit-level and line-level effectiveness measures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, NamedTuple, Sequence


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @classmethod
    def from_labels(cls, predicted: Iterable[bool], actual: Iterable[bool]) -> "ConfusionCounts":
        tp = fp = tn = fn = 0
        for p, a in zip(predicted, actual):
            if p and a:
                tp += 1
            elif p:
                fp += 1
            elif a:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, tn, fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class CommitMetrics(NamedTuple):
    precision: float
    recall: float
    f1: float
    far: float
    d2h: float
    auc: float | None


class LineMetrics(NamedTuple):
    top_k_accuracy: float
    recall_at_20pct_loc: float
    effort_at_20pct_recall: float
    ifa: int


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def d2h(recall: float, far: float) -> float:
    return math.sqrt((1.0 - recall) ** 2 + far**2) / math.sqrt(2.0)


def auc_score(scores: Sequence[tuple[float, bool]]) -> float | None:
    """Probability that a random (buggy, clean) pair is ordered correctly,
    ties counting one half. ``None`` when either class is missing."""
    pos = sum(1 for _, y in scores if y)
    neg = len(scores) - pos
    if not pos or not neg:
        return None
    # walk score groups ascending; doubled counts keep the half-ties integral
    twice_correct = 0
    negatives_below = 0
    for _, group in groupby(sorted(scores, key=lambda s: s[0]), key=lambda s: s[0]):
        group = list(group)
        gp = sum(1 for _, y in group if y)
        gn = len(group) - gp
        twice_correct += 2 * gp * negatives_below + gp * gn
        negatives_below += gn
    return twice_correct / (2 * pos * neg)


def commit_metrics(counts: ConfusionCounts, scores: Sequence[tuple[float, bool]] = ()) -> CommitMetrics:
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    far = _ratio(counts.fp, counts.fp + counts.tn)
    return CommitMetrics(precision, recall, f1, far, d2h(recall, far), auc_score(scores))


def _ceil_fifth(n: int) -> int:
    return -(-n // 5)


def line_metrics(ranked_buggy: Sequence[bool], k: int = 10) -> LineMetrics:
    """Line-level measures for one commit.

    ``ranked_buggy[i]`` tells whether the line ranked ``i + 1`` is truly
    buggy.
    """
    n = len(ranked_buggy)
    if n == 0:
        raise ValueError("no ranked lines")
    if k < 1:
        raise ValueError("k must be >= 1")
    total_buggy = sum(ranked_buggy)
    top = min(k, n)
    top_k_accuracy = sum(ranked_buggy[:top]) / top
    recall_at_20 = _ratio(sum(ranked_buggy[: _ceil_fifth(n)]), total_buggy)
    needed = _ceil_fifth(total_buggy)
    effort_rank = 0
    if needed:
        seen = 0
        for r, flag in enumerate(ranked_buggy, start=1):
            seen += flag
            if seen >= needed:
                effort_rank = r
                break
    ifa = next((i for i, flag in enumerate(ranked_buggy) if flag), n)
    return LineMetrics(top_k_accuracy, recall_at_20, effort_rank / n, ifa)
