"""Retrieval-based just-in-time defect prediction.

Past file-level changes are indexed with two code analyzers; a new commit
is classified by BM25 similarity to them, and the added lines of a
predicted-buggy commit are ranked by the buggy tokens of its best buggy
match.
"""

__version__ = "0.1.0"

from .analysis import analyze_camelcase, analyze_shingle, code_tokenize
from .classify import (
    CandidateMatch,
    ClassifierConfig,
    LaModel,
    Prediction,
    ThresholdConfig,
    candidate_matches,
    ensemble_classify,
    knn_classify,
    la_classify,
    threshold_classify,
    train_la,
    tune_threshold,
)
from .corpus import Change, Commit, CorpusDocument, Hunk, Label, load_corpus, parse_unified_diff, write_corpus
from .evaluation import EvalConfig, MetricReport, PeriodSplit, run_evaluation, split_periods
from .index import InvertedIndex, SearchHit, build_index
from .linerank import BuggyTokenSet, RankedLine, extract_buggy_tokens, rank_lines
from .metrics import ConfusionCounts, commit_metrics, line_metrics

__all__ = [
    "BuggyTokenSet",
    "CandidateMatch",
    "Change",
    "ClassifierConfig",
    "Commit",
    "ConfusionCounts",
    "CorpusDocument",
    "EvalConfig",
    "Hunk",
    "InvertedIndex",
    "Label",
    "LaModel",
    "MetricReport",
    "PeriodSplit",
    "Prediction",
    "RankedLine",
    "SearchHit",
    "ThresholdConfig",
    "analyze_camelcase",
    "analyze_shingle",
    "build_index",
    "candidate_matches",
    "code_tokenize",
    "commit_metrics",
    "ensemble_classify",
    "extract_buggy_tokens",
    "knn_classify",
    "la_classify",
    "line_metrics",
    "load_corpus",
    "parse_unified_diff",
    "rank_lines",
    "run_evaluation",
    "split_periods",
    "threshold_classify",
    "train_la",
    "tune_threshold",
    "write_corpus",
]
