"""Buggy-token extraction from score explanations and changed-line ranking."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .analysis import FIELDS, analyze_field
from .classify import CandidateMatch
from .corpus import Label

DEFAULT_TOP_M = 20


@dataclass(frozen=True)
class BuggyTokenSet:
    tokens: tuple[tuple[str, float], ...]
    source_doc_id: int | None = None

    @property
    def terms(self) -> list[str]:
        return [t for t, _ in self.tokens]


@dataclass(frozen=True)
class RankedLine:
    file_path: str
    line_text: str
    occurrence_count: int
    rank: int
    position: int  # 1-based index among the commit's added lines

    def to_dict(self) -> dict:
        return {
            "file_path": self.file_path,
            "position": self.position,
            "line_text": self.line_text,
            "occurrence_count": self.occurrence_count,
            "rank": self.rank,
        }


def _term_text(key) -> str:
    # explanation keys are (field, term) pairs; bare strings are accepted too
    return key[1] if isinstance(key, tuple) else key


def extract_buggy_tokens(
    explanation: Mapping, top_m: int = DEFAULT_TOP_M, source_doc_id: int | None = None
) -> BuggyTokenSet:
    """Keep the ``top_m`` heaviest terms of an explanation.

    A term that scored in both fields is weighted by its summed
    contribution. Ties at the cut are resolved by term text.
    """
    if not explanation:
        raise ValueError("empty explanation: a buggy match always has a contributing term")
    weights: dict[str, float] = {}
    for key, value in explanation.items():
        text = _term_text(key)
        weights[text] = weights.get(text, 0.0) + max(0.0, float(value))
    ranked = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))
    return BuggyTokenSet(tuple(ranked[:top_m]), source_doc_id)


def buggy_tokens_from_matches(
    matches: Sequence[CandidateMatch], top_m: int = DEFAULT_TOP_M, union: bool = False
) -> BuggyTokenSet:
    """Buggy tokens from the best buggy match, or from all buggy matches
    when ``union`` is set. Empty if no buggy match carries an explanation."""
    buggy = [m for m in matches if m.label is Label.BUGGY and m.term_contributions]
    if not buggy:
        return BuggyTokenSet(())
    buggy.sort(key=lambda m: (-m.relevance_score, m.doc_id))
    if not union:
        return extract_buggy_tokens(buggy[0].term_contributions, top_m, buggy[0].doc_id)
    merged: dict = {}
    for m in buggy:
        for key, value in m.term_contributions.items():
            merged[key] = merged.get(key, 0.0) + value
    return extract_buggy_tokens(merged, top_m, buggy[0].doc_id)


def line_terms(line: str) -> Counter:
    counts: Counter = Counter()
    for f in FIELDS:
        counts.update(analyze_field(f, line))
    return counts


def rank_lines(
    commit_lines: Sequence[tuple[str, str]],
    tokens: BuggyTokenSet | Iterable[str],
    count_repetitions: bool = False,
) -> list[RankedLine]:
    """Order lines by how many buggy tokens they contain (stable)."""
    terms = tokens.terms if isinstance(tokens, BuggyTokenSet) else list(tokens)
    wanted = set(terms)
    scored = []
    for pos, (path, text) in enumerate(commit_lines, start=1):
        counts = line_terms(text)
        if count_repetitions:
            hits = sum(n for t, n in counts.items() if t in wanted)
        else:
            hits = sum(1 for t in wanted if t in counts)
        scored.append((path, text, hits, pos))
    scored.sort(key=lambda row: -row[2])
    return [RankedLine(path, text, hits, rank, pos) for rank, (path, text, hits, pos) in enumerate(scored, start=1)]
