"""Chronological online evaluation with a verification-latency gap."""

from __future__ import annotations

import csv
import json
import logging
import statistics
from bisect import bisect_left
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .classify import (
    ClassifierConfig,
    ThresholdConfig,
    TrainedClassifier,
    UntunableError,
    candidate_matches,
    train_la,
    tune_threshold,
)
from .corpus import Commit, CorpusError, Label
from .index import InvertedIndex, build_index
from .linerank import DEFAULT_TOP_M, buggy_tokens_from_matches, rank_lines
from .metrics import ConfusionCounts, commit_metrics, line_metrics

log = logging.getLogger(__name__)

DAY = 86_400
MODES = ("increasing", "constant")

# commit hash -> set of (file_path, 1-based index into that file's lines_added)
LineLabels = Mapping[str, set[tuple[str, int]]]


class PeriodError(ValueError):
    """The corpus cannot be split into evaluable periods."""


@dataclass(frozen=True)
class PeriodSplit:
    period_index: int
    mode: str
    train_range: tuple[int, int]
    gap_range: tuple[int, int]
    test_range: tuple[int, int]

    @staticmethod
    def _select(commits: Sequence[Commit], bounds: tuple[int, int]) -> list[Commit]:
        lo, hi = bounds
        return [c for c in commits if lo <= c.author_ts < hi]

    def train(self, commits: Sequence[Commit]) -> list[Commit]:
        return self._select(commits, self.train_range)

    def gap(self, commits: Sequence[Commit]) -> list[Commit]:
        return self._select(commits, self.gap_range)

    def test(self, commits: Sequence[Commit]) -> list[Commit]:
        return self._select(commits, self.test_range)


def default_gap_days(median_bug_fix_delay_days: float, window_days: int) -> int:
    """Gap such that gap + test window approximates the typical bug-fix delay."""
    return max(0, round(median_bug_fix_delay_days - window_days))


def split_periods(
    commits: Sequence[Commit], window_days: int = 180, gap_days: int = 0, mode: str = "increasing"
) -> list[PeriodSplit]:
    """Consecutive ``window_days`` test windows starting at the first commit.

    Each window is preceded by a ``gap_days`` gap whose commits are neither
    trained on nor tested. Increasing mode trains on everything before the
    gap, constant mode on the one window just before it. Windows without
    training data or without test commits are skipped.
    """
    if window_days < 1 or gap_days < 0:
        raise PeriodError("window must be >= 1 day and gap >= 0 days")
    if mode not in MODES:
        raise PeriodError(f"unknown mode {mode!r}")
    if not commits:
        raise PeriodError("empty corpus")
    ts = sorted(c.author_ts for c in commits)
    t0, t_last = ts[0], ts[-1]
    w, g = window_days * DAY, gap_days * DAY
    if t_last - t0 < w + g:
        raise PeriodError(
            f"corpus spans {(t_last - t0) / DAY:.1f} days; window ({window_days}) + gap ({gap_days}) "
            f"needs at least {window_days + gap_days}"
        )
    splits = []
    n_windows = (t_last - t0) // w + 1
    for i in range(1, n_windows):
        test_lo, test_hi = t0 + i * w, t0 + (i + 1) * w
        train_hi = test_lo - g
        train_lo = t0 if mode == "increasing" else max(t0, train_hi - w)
        if train_hi <= t0:
            continue
        has_train = bisect_left(ts, train_hi) > bisect_left(ts, train_lo)
        has_test = bisect_left(ts, test_hi) > bisect_left(ts, test_lo)
        if not (has_train and has_test):
            continue
        splits.append(PeriodSplit(i, mode, (train_lo, train_hi), (train_hi, test_lo), (test_lo, test_hi)))
    if not splits:
        raise PeriodError("no period has both training and test commits")
    return splits


@dataclass
class EvalConfig:
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    window_days: int = 180
    gap_days: int = 0
    top_m: int = DEFAULT_TOP_M
    union_tokens: bool = False
    count_repetitions: bool = False
    top_k_lines: int = 10
    max_validation_queries: int = 500
    fallback_t_score: float = 0.0
    threads: int = 1

    def to_dict(self) -> dict:
        out = asdict(self)
        out["classifier"] = self.classifier.to_dict()
        return out


@dataclass
class CommitResult:
    commit_hash: str
    author_ts: int
    actual: Label
    verdict: Label
    confidence: float
    line_metrics: object | None = None


@dataclass
class MetricReport:
    period_index: int
    mode: str
    train_range: tuple[int, int]
    gap_range: tuple[int, int]
    test_range: tuple[int, int]
    n_train: int
    n_test: int
    n_test_buggy: int
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    far: float
    d2h: float
    auc: float | None
    top_k_accuracy: float | None = None
    recall_at_20pct_loc: float | None = None
    effort_at_20pct_recall: float | None = None
    ifa: int | None = None
    n_line_commits: int = 0
    t_score: float | None = None
    train_max_ts: int | None = None
    test_min_ts: int | None = None
    commits: list[CommitResult] = field(default_factory=list, repr=False)

    FLAT_FIELDS = (
        "period_index", "mode", "n_train", "n_test", "n_test_buggy", "tp", "fp", "tn", "fn",
        "precision", "recall", "f1", "far", "d2h", "auc", "top_k_accuracy", "recall_at_20pct_loc",
        "effort_at_20pct_recall", "ifa", "n_line_commits", "t_score",
    )  # fmt: skip

    def to_record(self) -> dict:
        rec = {k: getattr(self, k) for k in self.FLAT_FIELDS}
        rec["train_range"] = list(self.train_range)
        rec["gap_range"] = list(self.gap_range)
        rec["test_range"] = list(self.test_range)
        return rec


def commit_lines(commit: Commit) -> tuple[list[tuple[str, str]], list[tuple[str, int]]]:
    """Added lines of a commit, plus each line's (file, 1-based index in file)."""
    lines, keys = [], []
    for change in commit.changes:
        for i, text in enumerate(change.lines_added, start=1):
            lines.append((change.file_path, text))
            keys.append((change.file_path, i))
    return lines, keys


def train_classifier(index: InvertedIndex, train: Sequence[Commit], cfg: EvalConfig) -> TrainedClassifier:
    ccfg = cfg.classifier
    trained = TrainedClassifier(ccfg)
    if "la" in ccfg.members:
        trained.la_model = train_la([(c.la, c.label) for c in train], log_transform=ccfg.la_log_transform)
    if "threshold" in ccfg.members:
        if ccfg.t_score is not None:
            trained.threshold = ThresholdConfig(ccfg.t_score)
        else:
            trained.threshold = tune_on_index(index, train, ccfg, cfg.max_validation_queries, cfg.fallback_t_score)
    return trained


def tune_on_index(
    index: InvertedIndex,
    commits: Sequence[Commit],
    ccfg: ClassifierConfig,
    max_queries: int = 500,
    fallback: float | None = None,
) -> ThresholdConfig:
    """Tune the threshold with leave-one-commit-out queries against ``index``.

    Only the most recent ``max_queries`` commits are used as validation
    queries. With ``fallback`` set, single-class data yields that threshold
    instead of an error.
    """
    sample = list(commits)[-max_queries:] if max_queries else list(commits)
    queries = [
        (
            candidate_matches(index, c.changes, ccfg.top_k, ccfg.max_query_terms, exclude_commits={c.hash}),
            c.label,
        )
        for c in sample
    ]
    try:
        return tune_threshold(queries)
    except UntunableError:
        if fallback is None:
            raise
        log.warning("training data is single-class; using fallback t_score %s", fallback)
        return ThresholdConfig(fallback)


def evaluate_period(
    index: InvertedIndex,
    split: PeriodSplit,
    train: Sequence[Commit],
    test: Sequence[Commit],
    cfg: EvalConfig,
    line_labels: LineLabels | None = None,
) -> MetricReport:
    ccfg = cfg.classifier
    indexed_max_ts = max((d.author_ts for d in index.documents()), default=None)
    if indexed_max_ts is not None and indexed_max_ts >= split.test_range[0]:
        raise AssertionError("index contains data from the test period")
    trained = train_classifier(index, train, cfg)
    results: list[CommitResult] = []
    for commit in test:
        matches = candidate_matches(index, commit.changes, ccfg.top_k, ccfg.max_query_terms)
        pred = trained.predict(matches, commit.la)
        res = CommitResult(commit.hash, commit.author_ts, commit.label, pred.verdict, pred.confidence)
        truth = line_labels.get(commit.hash) if line_labels else None
        if pred.buggy and truth and commit.label is Label.BUGGY:
            lines, keys = commit_lines(commit)
            if lines:
                tokens = buggy_tokens_from_matches(matches, cfg.top_m, cfg.union_tokens)
                ranked = rank_lines(lines, tokens, cfg.count_repetitions)
                flags = [keys[r.position - 1] in truth for r in ranked]
                res.line_metrics = line_metrics(flags, cfg.top_k_lines)
        results.append(res)

    actual = [r.actual is Label.BUGGY for r in results]
    counts = ConfusionCounts.from_labels([r.verdict is Label.BUGGY for r in results], actual)
    cm = commit_metrics(counts, [(r.confidence, a) for r, a in zip(results, actual)])
    lms = [r.line_metrics for r in results if r.line_metrics is not None]
    report = MetricReport(
        period_index=split.period_index,
        mode=split.mode,
        train_range=split.train_range,
        gap_range=split.gap_range,
        test_range=split.test_range,
        n_train=len(train),
        n_test=len(test),
        n_test_buggy=sum(actual),
        tp=counts.tp,
        fp=counts.fp,
        tn=counts.tn,
        fn=counts.fn,
        precision=cm.precision,
        recall=cm.recall,
        f1=cm.f1,
        far=cm.far,
        d2h=cm.d2h,
        auc=cm.auc,
        n_line_commits=len(lms),
        t_score=trained.threshold.t_score if trained.threshold else None,
        train_max_ts=max((c.author_ts for c in train), default=None),
        test_min_ts=min((c.author_ts for c in test), default=None),
        commits=results,
    )
    if lms:
        report.top_k_accuracy = statistics.median(m.top_k_accuracy for m in lms)
        report.recall_at_20pct_loc = statistics.median(m.recall_at_20pct_loc for m in lms)
        report.effort_at_20pct_recall = statistics.median(m.effort_at_20pct_recall for m in lms)
        report.ifa = statistics.median_low(m.ifa for m in lms)
    return report


def run_evaluation(
    commits: Sequence[Commit],
    mode: str = "increasing",
    config: EvalConfig | None = None,
    line_labels: LineLabels | None = None,
) -> list[MetricReport]:
    """Evaluate period by period; nothing from a test window or later is
    indexed before that window is classified."""
    cfg = config or EvalConfig()
    commits = sorted(commits, key=lambda c: c.author_ts)
    splits = split_periods(commits, cfg.window_days, cfg.gap_days, mode)

    if mode == "constant":
        def one(split: PeriodSplit) -> MetricReport:
            train = split.train(commits)
            index = build_index(d for c in train for d in c.documents())
            return evaluate_period(index, split, train, split.test(commits), cfg, line_labels)

        if cfg.threads > 1:
            with ThreadPoolExecutor(cfg.threads) as pool:
                return list(pool.map(one, splits))
        return [one(s) for s in splits]

    index = InvertedIndex()
    added = 0
    reports = []
    for split in splits:
        train_hi = split.train_range[1]
        while added < len(commits) and commits[added].author_ts < train_hi:
            for doc in commits[added].documents():
                index.add_document(doc)
            added += 1
        reports.append(evaluate_period(index, split, split.train(commits), split.test(commits), cfg, line_labels))
    return reports


SUMMARY_FIELDS = (
    "precision", "recall", "f1", "far", "d2h", "auc",
    "top_k_accuracy", "recall_at_20pct_loc", "effort_at_20pct_recall", "ifa",
)  # fmt: skip


def summarize(reports: Sequence[MetricReport]) -> dict[str, float | None]:
    """Median of each metric across periods, ignoring absent values."""
    out: dict[str, float | None] = {}
    for name in SUMMARY_FIELDS:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        out[name] = statistics.median(values) if values else None
    return out


def write_reports(reports: Sequence[MetricReport], out_dir: str | Path, stem: str = "periods") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    jsonl_path = out_dir / f"{stem}.jsonl"
    records = [r.to_record() for r in reports]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(MetricReport.FLAT_FIELDS) + ["train_range", "gap_range", "test_range"])
        writer.writeheader()
        for rec in records:
            writer.writerow({k: ("" if v is None else (" ".join(map(str, v)) if isinstance(v, list) else v)) for k, v in rec.items()})
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return csv_path, jsonl_path


def read_line_labels(path: str | Path) -> dict[str, set[tuple[str, int]]]:
    """Header-less CSV ``commit_hash,file_path,line_index`` (1-based index
    into that file's added lines)."""
    labels: dict[str, set[tuple[str, int]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) != 3:
                raise CorpusError(f"line label row {rowno}: expected 'commit_hash,file_path,line_index'")
            try:
                idx = int(row[2])
            except ValueError:
                raise CorpusError(f"line label row {rowno}: line_index {row[2]!r} is not an integer") from None
            labels.setdefault(row[0], set()).add((row[1], idx))
    return labels


def write_line_labels(labels: Mapping[str, set[tuple[str, int]]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for h in labels:
            for file_path, idx in sorted(labels[h]):
                writer.writerow([h, file_path, idx])
