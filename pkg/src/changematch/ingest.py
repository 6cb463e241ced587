"""Commit extraction from a local git repository via the git CLI."""

from __future__ import annotations

import logging
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Commit, CorpusDocument, Label, changes_from_diff, read_label_file

log = logging.getLogger(__name__)


class IngestError(RuntimeError):
    pass


@dataclass(frozen=True)
class RepoSource:
    repo_path: Path
    branch: str = "HEAD"
    since_ts: int | None = None
    until_ts: int | None = None


def _git(source: RepoSource, *args: str, check: bool = True, stdin: str | None = None) -> subprocess.CompletedProcess:
    cmd = ["git", "-C", str(source.repo_path), "-c", "core.quotepath=off", *args]
    try:
        proc = subprocess.run(
            cmd, input=stdin, capture_output=True, text=True, encoding="utf-8", errors="replace"
        )
    except FileNotFoundError:
        raise IngestError("git executable not found on PATH") from None
    if check and proc.returncode != 0:
        raise IngestError(f"git {' '.join(args)} failed: {proc.stderr.strip()}")
    return proc


def _has_commits(source: RepoSource) -> bool:
    if not Path(source.repo_path).exists():
        raise IngestError(f"repository {source.repo_path} does not exist")
    _git(source, "rev-parse", "--git-dir")
    proc = _git(source, "rev-list", "-n", "1", "--all")
    return bool(proc.stdout.strip())


def enumerate_commits(source: RepoSource) -> list[tuple[str, int]]:
    """(hash, author timestamp) pairs, oldest first; ties keep topological order."""
    if not _has_commits(source):
        return []
    out = _git(source, "log", "--topo-order", "--reverse", "--format=%H %at", source.branch).stdout
    commits = []
    for line in out.splitlines():
        h, ts = line.split()
        ts = int(ts)
        if source.since_ts is not None and ts < source.since_ts:
            continue
        if source.until_ts is not None and ts >= source.until_ts:
            continue
        commits.append((h, ts))
    commits.sort(key=lambda c: c[1])
    return commits


def _empty_tree(source: RepoSource) -> str:
    return _git(source, "hash-object", "-t", "tree", "--stdin", stdin="").stdout.strip()


def extract_commit(source: RepoSource, commit_hash: str) -> Commit:
    """Changes of one commit relative to its first parent (or the empty tree)."""
    proc = _git(source, "rev-list", "--parents", "-n", "1", commit_hash, check=False)
    if proc.returncode != 0 or not proc.stdout.strip():
        raise IngestError(f"unknown commit {commit_hash}: {proc.stderr.strip()}")
    ids = proc.stdout.split()
    full, parents = ids[0], ids[1:]
    base = parents[0] if parents else _empty_tree(source)
    ts = int(_git(source, "show", "-s", "--format=%at", full).stdout.strip())
    diff = _git(source, "diff", "--no-color", "--no-ext-diff", "-M", "-U0", base, full).stdout
    changes = tuple(changes_from_diff(diff, commit_hash=full))
    return Commit(hash=full, author_ts=ts, label=Label.CLEAN, changes=changes)


def attach_labels(commits: Sequence[Commit], labels: Mapping[str, Label] | str | Path) -> list[Commit]:
    """Mark commits listed as buggy; everything else is clean."""
    if not isinstance(labels, Mapping):
        labels = read_label_file(labels)
    known = {c.hash for c in commits}
    for h in labels:
        if h not in known:
            log.warning("label for unknown commit %s ignored", h)
    return [c.with_label(labels.get(c.hash, Label.CLEAN)) for c in commits]


def ingest_repo(source: RepoSource, label_file: str | Path | None = None) -> list[CorpusDocument]:
    commits = [extract_commit(source, h) for h, _ in enumerate_commits(source)]
    if label_file is not None:
        commits = attach_labels(commits, label_file)
    commits.sort(key=lambda c: c.author_ts)
    return [doc for c in commits for doc in c.documents()]
