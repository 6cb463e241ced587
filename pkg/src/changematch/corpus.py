"""Data model for commits and file-level changes, unified-diff parsing and
the newline-delimited JSON corpus format."""

from __future__ import annotations

import csv
import enum
import json
import logging
import re
from dataclasses import dataclass, field, replace
from itertools import groupby
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)


class Label(str, enum.Enum):
    BUGGY = "buggy"
    CLEAN = "clean"

    @classmethod
    def parse(cls, value: str) -> "Label":
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValueError(f"invalid label {value!r} (expected 'buggy' or 'clean')") from None

    def __str__(self) -> str:
        return self.value


class CorpusError(ValueError):
    """Raised for malformed corpus or label files."""


class DiffParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Hunk:
    """Added and deleted lines of one ``@@`` block.

    Added lines are numbered in the new file, deleted lines in the old one.
    """

    added: tuple[tuple[int, str], ...] = ()
    deleted: tuple[tuple[int, str], ...] = ()


@dataclass(frozen=True)
class Change:
    """Modifications one commit makes to one file."""

    commit_hash: str
    file_path: str
    lines_added: tuple[str, ...] = ()
    lines_deleted: tuple[str, ...] = ()
    label: Label = Label.CLEAN


@dataclass(frozen=True)
class CorpusDocument(Change):
    """A change plus the author timestamp of its commit; one corpus record."""

    author_ts: int = 0

    def to_record(self) -> dict:
        return {
            "commit_hash": self.commit_hash,
            "file_path": self.file_path,
            "lines_added": list(self.lines_added),
            "lines_deleted": list(self.lines_deleted),
            "label": self.label.value,
            "author_ts": self.author_ts,
        }


@dataclass(frozen=True)
class Commit:
    hash: str
    author_ts: int
    label: Label = Label.CLEAN
    changes: tuple[Change, ...] = field(default=())

    @property
    def la(self) -> int:
        return sum(len(c.lines_added) for c in self.changes)

    def with_label(self, label: Label) -> "Commit":
        return replace(
            self,
            label=label,
            changes=tuple(replace(c, label=label) for c in self.changes),
        )

    def documents(self) -> list[CorpusDocument]:
        return [
            CorpusDocument(
                commit_hash=self.hash,
                file_path=c.file_path,
                lines_added=c.lines_added,
                lines_deleted=c.lines_deleted,
                label=self.label,
                author_ts=self.author_ts,
            )
            for c in self.changes
        ]


def is_blank(line: str) -> bool:
    return not line.strip()


def preprocess_change(change: Change) -> Change:
    """Drop blank lines from both line lists, keeping order."""
    return replace(
        change,
        lines_added=tuple(l for l in change.lines_added if not is_blank(l)),
        lines_deleted=tuple(l for l in change.lines_deleted if not is_blank(l)),
    )


# --- unified diff -----------------------------------------------------------

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
_GIT_HEADER_RE = re.compile(r"^diff --git a/(.*) b/(.*)$")


def _strip_prefix(path: str) -> str:
    path = path.split("\t", 1)[0].strip()
    if path.startswith('"') and path.endswith('"'):
        path = path[1:-1]
    if path.startswith(("a/", "b/")):
        return path[2:]
    return path


class _FileEntry:
    __slots__ = ("path", "old_path", "hunks", "binary", "rename")

    def __init__(self, path: str | None = None):
        self.path = path
        self.old_path: str | None = None
        self.hunks: list[Hunk] = []
        self.binary = False
        self.rename = False

    def resolved_path(self) -> str | None:
        if self.path and self.path != "/dev/null":
            return self.path
        return self.old_path


def parse_unified_diff(diff_text: str) -> list[tuple[str, list[Hunk]]]:
    """Split a (possibly multi-file) unified diff into per-file hunks.

    Context lines are discarded. Hunk bodies are consumed by their header
    counts, so payload lines that happen to look like ``---``/``+++``
    headers are read correctly. Binary files and pure renames carry no
    hunks and are skipped with a warning.
    """
    entries: list[_FileEntry] = []
    current: _FileEntry | None = None
    lines = diff_text.splitlines(keepends=True)
    offsets = []
    pos = 0
    for raw in lines:
        offsets.append(pos)
        pos += len(raw.encode("utf-8"))

    i = 0
    while i < len(lines):
        line = lines[i].rstrip("\r\n")
        if line.startswith("diff --git "):
            m = _GIT_HEADER_RE.match(line)
            current = _FileEntry(m.group(2) if m else None)
            if m:
                current.old_path = m.group(1)
            entries.append(current)
        elif line.startswith("--- ") and i + 1 < len(lines) and lines[i + 1].startswith("+++ "):
            old = _strip_prefix(line[4:])
            new = _strip_prefix(lines[i + 1].rstrip("\r\n")[4:])
            if current is None or current.hunks:
                current = _FileEntry()
                entries.append(current)
            current.old_path = old if old != "/dev/null" else current.old_path
            current.path = new
            i += 1
        elif line.startswith("Binary files ") or line.startswith("GIT binary patch"):
            if current is not None:
                current.binary = True
        elif line.startswith(("rename from ", "rename to ", "copy from ", "copy to ")):
            if current is not None:
                current.rename = True
        elif line.startswith("@@"):
            m = _HUNK_RE.match(line)
            if m is None:
                raise DiffParseError(f"malformed hunk header {line!r}", offsets[i])
            if current is None:
                raise DiffParseError("hunk before any file header", offsets[i])
            old_start = int(m.group(1))
            old_left = int(m.group(2)) if m.group(2) is not None else 1
            new_start = int(m.group(3))
            new_left = int(m.group(4)) if m.group(4) is not None else 1
            old_no, new_no = old_start, new_start
            added: list[tuple[int, str]] = []
            deleted: list[tuple[int, str]] = []
            while (old_left > 0 or new_left > 0) and i + 1 < len(lines):
                i += 1
                body = lines[i].rstrip("\r\n")
                tag, payload = body[:1], body[1:]
                if tag == "+":
                    added.append((new_no, payload))
                    new_no += 1
                    new_left -= 1
                elif tag == "-":
                    deleted.append((old_no, payload))
                    old_no += 1
                    old_left -= 1
                elif tag == "\\":
                    continue
                elif tag in (" ", ""):
                    old_no += 1
                    new_no += 1
                    old_left -= 1
                    new_left -= 1
                else:
                    raise DiffParseError(f"unexpected line in hunk body {body!r}", offsets[i])
            if old_left > 0 or new_left > 0:
                raise DiffParseError("truncated hunk body", pos)
            # a trailing "\ No newline" marker belongs to the hunk just read
            while i + 1 < len(lines) and lines[i + 1].startswith("\\"):
                i += 1
            current.hunks.append(Hunk(added=tuple(added), deleted=tuple(deleted)))
        i += 1

    result = []
    for entry in entries:
        path = entry.resolved_path()
        if not entry.hunks:
            if entry.binary:
                log.warning("skipping binary file %s", path)
            elif entry.rename:
                log.warning("skipping pure rename %s", path)
            continue
        result.append((path, entry.hunks))
    return result


def changes_from_diff(diff_text: str, commit_hash: str = "", label: Label = Label.CLEAN) -> list[Change]:
    """Parse a diff into preprocessed per-file changes."""
    out = []
    for path, hunks in parse_unified_diff(diff_text):
        change = Change(
            commit_hash=commit_hash,
            file_path=path,
            lines_added=tuple(t for h in hunks for _, t in h.added),
            lines_deleted=tuple(t for h in hunks for _, t in h.deleted),
            label=label,
        )
        out.append(preprocess_change(change))
    return out


# --- corpus file ------------------------------------------------------------

_REQUIRED = ("commit_hash", "file_path", "lines_added", "lines_deleted", "label", "author_ts")


def _document_from_record(rec: dict, recno: int) -> CorpusDocument:
    if not isinstance(rec, dict):
        raise CorpusError(f"record {recno}: expected an object")
    for name in _REQUIRED:
        if name not in rec:
            raise CorpusError(f"record {recno}: missing required field {name!r}")
    try:
        label = Label.parse(rec["label"])
    except (ValueError, AttributeError) as exc:
        raise CorpusError(f"record {recno}: {exc}") from None
    for name in ("lines_added", "lines_deleted"):
        if not isinstance(rec[name], list) or not all(isinstance(x, str) for x in rec[name]):
            raise CorpusError(f"record {recno}: field {name!r} must be an array of strings")
    ts = rec["author_ts"]
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise CorpusError(f"record {recno}: field 'author_ts' must be an integer")
    return CorpusDocument(
        commit_hash=str(rec["commit_hash"]),
        file_path=str(rec["file_path"]),
        lines_added=tuple(rec["lines_added"]),
        lines_deleted=tuple(rec["lines_deleted"]),
        label=label,
        author_ts=ts,
    )


def load_corpus(path: str | Path) -> list[CorpusDocument]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for recno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"record {recno}: invalid JSON ({exc.msg})") from None
            docs.append(_document_from_record(rec, recno))
    return docs


def write_corpus(docs: Iterable[CorpusDocument], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def group_commits(docs: Sequence[CorpusDocument]) -> list[Commit]:
    """Fold documents into commits, ordered by (author_ts, first appearance)."""
    order: dict[str, int] = {}
    for d in docs:
        order.setdefault(d.commit_hash, len(order))
    ordered = sorted(docs, key=lambda d: (order[d.commit_hash]))
    commits = []
    for h, group in groupby(ordered, key=lambda d: d.commit_hash):
        group = list(group)
        first = group[0]
        labels = {d.label for d in group}
        label = Label.BUGGY if Label.BUGGY in labels else Label.CLEAN
        commits.append(
            Commit(
                hash=h,
                author_ts=first.author_ts,
                label=label,
                changes=tuple(
                    Change(d.commit_hash, d.file_path, d.lines_added, d.lines_deleted, label) for d in group
                ),
            )
        )
    commits.sort(key=lambda c: c.author_ts)
    return commits


def read_label_file(path: str | Path) -> dict[str, Label]:
    """Read a header-less ``commit_hash,label`` CSV."""
    labels: dict[str, Label] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.reader(fh)):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise CorpusError(f"label file row {rowno}: expected 'commit_hash,label'")
            try:
                labels[row[0].strip()] = Label.parse(row[1])
            except ValueError as exc:
                raise CorpusError(f"label file row {rowno}: {exc}") from None
    return labels
