"""Online inverted index over change documents with BM25 scoring and
more-like-this querying."""

from __future__ import annotations

import json
import math
import threading
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Iterable, Mapping, Sequence

import numpy as np

from .analysis import FIELDS, analyze_lines
from .corpus import Change, Label

SNAPSHOT_MAGIC = "changematch-index"
SNAPSHOT_VERSION = 1

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
DEFAULT_TOP_K = 10
DEFAULT_MAX_QUERY_TERMS = 25

# A query term is (field, term text).
Term = tuple[str, str]


class UnknownDocumentError(LookupError):
    """Unknown document or term lookups."""


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class IndexedDocument:
    doc_id: int
    commit_hash: str
    file_path: str
    label: Label
    author_ts: int
    terms: Mapping[str, Mapping[str, int]]
    lengths: Mapping[str, int]
    n_lines: int = 0


@dataclass(frozen=True)
class PostingList:
    term: str
    entries: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class CorpusStats:
    doc_count: int
    total_tokens: Mapping[str, int]
    avgdl: Mapping[str, float]
    doc_freq: Mapping[str, Mapping[str, int]]

    def df(self, field: str, term: str) -> int:
        return self.doc_freq.get(field, {}).get(term, 0)


@dataclass(frozen=True)
class SearchHit:
    doc_id: int
    relevance_score: float
    label: Label
    commit_hash: str
    file_path: str
    term_contributions: Mapping[Term, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MLTSettings:
    top_k: int = DEFAULT_TOP_K
    max_query_terms: int = DEFAULT_MAX_QUERY_TERMS
    min_term_freq: int = 1
    min_doc_freq: int = 1


class _RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writing = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writing:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writing or self._readers:
                self._cond.wait()
            self._writing = True
        try:
            yield
        finally:
            with self._cond:
                self._writing = False
                self._cond.notify_all()


def bm25_idf(doc_count: int, df: int) -> float:
    return math.log(1.0 + (doc_count - df + 0.5) / (df + 0.5))


def bm25_tf_norm(tf: int, doc_len: int, avgdl: float, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> float:
    if tf <= 0:
        return 0.0
    return tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc_len / avgdl))


class InvertedIndex:
    """Append-only BM25 index with one postings map per analyzer field.

    Documents are the ``lines_added`` of file-level changes. Insertion is
    serialized; queries run concurrently against a consistent state.
    """

    def __init__(self, k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        self.k1 = k1
        self.b = b
        self._docs: list[IndexedDocument] = []
        self._postings: dict[str, dict[str, list[tuple[int, int]]]] = {f: {} for f in FIELDS}
        self._total: dict[str, int] = {f: 0 for f in FIELDS}
        self._lock = _RWLock()
        self._array_cache: dict[Term, tuple[int, np.ndarray, np.ndarray]] = {}
        self._length_cache: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._docs)

    # --- writing ----------------------------------------------------------

    def add_document(self, change: Change, author_ts: int | None = None) -> int:
        """Analyze and index one change; returns its dense doc id."""
        terms = {f: Counter(analyze_lines(change.lines_added, f)) for f in FIELDS}
        if author_ts is None:
            author_ts = getattr(change, "author_ts", 0)
        return self._insert(
            change.commit_hash, change.file_path, Label(change.label), author_ts, terms, len(change.lines_added)
        )

    def add_documents(self, changes: Iterable[Change]) -> list[int]:
        return [self.add_document(c) for c in changes]

    def _insert(
        self, commit_hash, file_path, label, author_ts, terms: Mapping[str, Mapping[str, int]], n_lines: int = 0
    ) -> int:
        with self._lock.write():
            doc_id = len(self._docs)
            lengths = {f: sum(terms[f].values()) for f in FIELDS}
            for f in FIELDS:
                postings = self._postings[f]
                for term, tf in terms[f].items():
                    postings.setdefault(term, []).append((doc_id, tf))
                self._total[f] += lengths[f]
            self._docs.append(
                IndexedDocument(
                    doc_id=doc_id,
                    commit_hash=commit_hash,
                    file_path=file_path,
                    label=label,
                    author_ts=author_ts,
                    terms={f: dict(terms[f]) for f in FIELDS},
                    lengths=lengths,
                    n_lines=n_lines,
                )
            )
            return doc_id

    # --- inspection -------------------------------------------------------

    def document(self, doc_id: int) -> IndexedDocument:
        if not 0 <= doc_id < len(self._docs):
            raise UnknownDocumentError(f"unknown doc_id {doc_id}")
        return self._docs[doc_id]

    def documents(self) -> list[IndexedDocument]:
        return list(self._docs)

    def commit_la(self) -> dict[str, tuple[int, Label]]:
        """Lines added and label per indexed commit."""
        out: dict[str, tuple[int, Label]] = {}
        for d in self._docs:
            la, _ = out.get(d.commit_hash, (0, d.label))
            out[d.commit_hash] = (la + d.n_lines, d.label)
        return out

    def postings(self, field: str, term: str) -> PostingList:
        return PostingList(term, tuple(self._postings[field].get(term, ())))

    def terms(self, field: str) -> list[str]:
        return sorted(self._postings[field])

    def df(self, field: str, term: str) -> int:
        return len(self._postings[field].get(term, ()))

    def avgdl(self, field: str) -> float:
        n = len(self._docs)
        return self._total[field] / n if n else 0.0

    @property
    def stats(self) -> CorpusStats:
        with self._lock.read():
            return CorpusStats(
                doc_count=len(self._docs),
                total_tokens=dict(self._total),
                avgdl={f: self.avgdl(f) for f in FIELDS},
                doc_freq={f: {t: len(p) for t, p in self._postings[f].items()} for f in FIELDS},
            )

    # --- scoring ----------------------------------------------------------

    def idf(self, field: str, term: str) -> float:
        return bm25_idf(len(self._docs), self.df(field, term))

    def term_score(self, field: str, term: str, doc_id: int) -> float:
        doc = self.document(doc_id)
        tf = doc.terms[field].get(term, 0)
        if tf == 0:
            return 0.0
        return self.idf(field, term) * bm25_tf_norm(tf, doc.lengths[field], self.avgdl(field), self.k1, self.b)

    def bm25_score(self, query_terms: Sequence[Term], doc_id: int) -> float:
        with self._lock.read():
            self.document(doc_id)
            return math.fsum(self.term_score(f, t, doc_id) for f, t in query_terms)

    def select_query_terms(
        self,
        lines: Sequence[str],
        max_query_terms: int = DEFAULT_MAX_QUERY_TERMS,
        min_term_freq: int = 1,
        min_doc_freq: int = 1,
    ) -> list[Term]:
        """Pick the highest probe-tf x idf terms of each field.

        Terms unknown to the index cannot match anything and are skipped.
        Ties are broken by term text so the selection is deterministic.
        """
        selected: list[Term] = []
        n = len(self._docs)
        for f in FIELDS:
            probe_tf = Counter(analyze_lines(lines, f))
            scored = []
            for term, tf in probe_tf.items():
                df = self.df(f, term)
                if tf < min_term_freq or df < max(min_doc_freq, 1):
                    continue
                scored.append((-(tf * bm25_idf(n, df)), term))
            scored.sort()
            selected.extend((f, term) for _, term in scored[:max_query_terms])
        return selected

    def _doc_contributions(self, query_terms: Sequence[Term], doc_id: int) -> dict[Term, float]:
        n = len(self._docs)
        doc = self._docs[doc_id]
        k1, b = self.k1, self.b
        out: dict[Term, float] = {}
        for f, term in query_terms:
            tf = doc.terms[f].get(term, 0)
            if not tf:
                continue
            idf = bm25_idf(n, len(self._postings[f][term]))
            norm = k1 * (1.0 - b + b * doc.lengths[f] / (self._total[f] / n))
            out[(f, term)] = idf * (tf * (k1 + 1.0) / (tf + norm))
        return out

    def _posting_arrays(self, f: str, term: str) -> tuple[np.ndarray, np.ndarray]:
        plist = self._postings[f][term]
        cached = self._array_cache.get((f, term))
        if cached is None or cached[0] != len(plist):
            ids = np.fromiter((d for d, _ in plist), dtype=np.int64, count=len(plist))
            tfs = np.fromiter((t for _, t in plist), dtype=np.float64, count=len(plist))
            cached = (len(plist), ids, tfs)
            self._array_cache[(f, term)] = cached
        return cached[1], cached[2]

    def _length_array(self, f: str) -> np.ndarray:
        n = len(self._docs)
        cached = self._length_cache.get(f)
        if cached is None or len(cached) != n:
            cached = np.fromiter((d.lengths[f] for d in self._docs), dtype=np.float64, count=n)
            self._length_cache[f] = cached
        return cached

    def _approx_scores(self, query_terms: Sequence[Term]) -> np.ndarray:
        """Vectorized BM25 totals for every document (0 where nothing matches)."""
        n = len(self._docs)
        scores = np.zeros(n)
        k1, b = self.k1, self.b
        for f, term in query_terms:
            ids, tfs = self._posting_arrays(f, term)
            idf = bm25_idf(n, len(ids))
            lens = self._length_array(f)[ids]
            scores[ids] += idf * (tfs * (k1 + 1.0) / (tfs + k1 * (1.0 - b + b * lens / (self._total[f] / n))))
        return scores

    def mlt_query(
        self,
        probe: Change | Sequence[str],
        top_k: int = DEFAULT_TOP_K,
        max_query_terms: int = DEFAULT_MAX_QUERY_TERMS,
        min_term_freq: int = 1,
        min_doc_freq: int = 1,
        exclude_commits: Collection[str] = (),
    ) -> list[SearchHit]:
        """Documents most like ``probe``'s added lines, best first.

        ``exclude_commits`` hides documents of the given commits, which is
        used for leave-one-out validation on indexed data.
        """
        lines = probe.lines_added if isinstance(probe, Change) else probe
        with self._lock.read():
            if not self._docs or top_k < 1:
                return []
            terms = self.select_query_terms(lines, max_query_terms, min_term_freq, min_doc_freq)
            if not terms:
                return []
            approx = self._approx_scores(terms)
            matched = np.flatnonzero(approx > 0)
            if exclude_commits:
                keep = [d for d in matched.tolist() if self._docs[d].commit_hash not in exclude_commits]
                matched = np.asarray(keep, dtype=np.int64)
            if not len(matched):
                return []
            # Shortlist on the vectorized totals with slack for rounding, then
            # rank on exactly summed per-term contributions.
            order = matched[np.argsort(-approx[matched], kind="stable")]
            if len(order) > top_k:
                cutoff = approx[order[top_k - 1]] * (1.0 - 1e-9)
                order = order[approx[order] >= cutoff]
            hits = []
            for doc_id in order.tolist():
                doc = self._docs[doc_id]
                contrib = self._doc_contributions(terms, doc_id)
                hits.append(
                    SearchHit(
                        doc_id=doc_id,
                        relevance_score=math.fsum(contrib.values()),
                        label=doc.label,
                        commit_hash=doc.commit_hash,
                        file_path=doc.file_path,
                        term_contributions=contrib,
                    )
                )
        hits.sort(key=lambda h: (-h.relevance_score, h.doc_id))
        return hits[:top_k]

    def explain(
        self,
        probe: Change | Sequence[str],
        doc_id: int,
        max_query_terms: int = DEFAULT_MAX_QUERY_TERMS,
        min_term_freq: int = 1,
        min_doc_freq: int = 1,
    ) -> dict[Term, float]:
        """Per-term BM25 contributions of ``doc_id`` for this probe's query."""
        lines = probe.lines_added if isinstance(probe, Change) else probe
        with self._lock.read():
            self.document(doc_id)
            terms = self.select_query_terms(lines, max_query_terms, min_term_freq, min_doc_freq)
            contrib = self._doc_contributions(terms, doc_id)
        if not contrib:
            raise UnknownDocumentError(f"doc {doc_id} matches no query term of the probe")
        return contrib

    # --- snapshots --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        with self._lock.read():
            body = {
                "k1": self.k1,
                "b": self.b,
                "documents": [
                    {
                        "commit_hash": d.commit_hash,
                        "file_path": d.file_path,
                        "label": d.label.value,
                        "author_ts": d.author_ts,
                        "n_lines": d.n_lines,
                        "terms": d.terms,
                    }
                    for d in self._docs
                ],
                "stats": {
                    "doc_count": len(self._docs),
                    "total_tokens": self._total,
                    "postings": {f: len(self._postings[f]) for f in FIELDS},
                },
            }
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}\n")
                json.dump(body, fh, ensure_ascii=False, separators=(",", ":"))
                fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2 or header[0] != SNAPSHOT_MAGIC:
                raise SnapshotError(f"{path}: not an index snapshot")
            if header[1] != str(SNAPSHOT_VERSION):
                raise SnapshotError(f"{path}: snapshot version {header[1]} unsupported (expected {SNAPSHOT_VERSION})")
            try:
                body = json.load(fh)
                index = cls(k1=float(body["k1"]), b=float(body["b"]))
                for d in body["documents"]:
                    terms = {f: {t: int(n) for t, n in d["terms"][f].items()} for f in FIELDS}
                    index._insert(
                        d["commit_hash"], d["file_path"], Label(d["label"]), int(d["author_ts"]), terms, int(d["n_lines"])
                    )
                stats = body["stats"]
            except (KeyError, TypeError, ValueError) as exc:
                raise SnapshotError(f"{path}: corrupt snapshot body ({exc})") from None
        expected = {
            "doc_count": len(index._docs),
            "total_tokens": index._total,
            "postings": {f: len(index._postings[f]) for f in FIELDS},
        }
        if stats != expected:
            raise SnapshotError(f"{path}: snapshot statistics do not match its documents")
        return index


def build_index(changes: Iterable[Change], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> InvertedIndex:
    """Build an index in one pass: analyze everything, then lay out postings."""
    index = InvertedIndex(k1=k1, b=b)
    docs = []
    for doc_id, change in enumerate(changes):
        terms = {f: dict(Counter(analyze_lines(change.lines_added, f))) for f in FIELDS}
        docs.append(
            IndexedDocument(
                doc_id=doc_id,
                commit_hash=change.commit_hash,
                file_path=change.file_path,
                label=Label(change.label),
                author_ts=getattr(change, "author_ts", 0),
                terms=terms,
                lengths={f: sum(terms[f].values()) for f in FIELDS},
                n_lines=len(change.lines_added),
            )
        )
    for f in FIELDS:
        postings: dict[str, list[tuple[int, int]]] = {}
        for doc in docs:
            for term, tf in doc.terms[f].items():
                postings.setdefault(term, []).append((doc.doc_id, tf))
        index._postings[f] = postings
        index._total[f] = sum(d.lengths[f] for d in docs)
    index._docs = docs
    return index
