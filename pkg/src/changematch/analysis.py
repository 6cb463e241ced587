"""Code-line analyzers: a whitespace/camel-case splitter and a 4-gram shingler."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

SHINGLE_SIZE = 4

# Multi-character operators fused into one token by code_tokenize.
FUSED_OPERATORS = frozenset(
    ["!=", "==", "<=", ">=", "&&", "||", "->", "::", "++", "--", "+=", "-=", "*=", "/=", "<<", ">>"]
)

_IDENT_RE = re.compile(r"[A-Za-z0-9_$]+")
_SUBTOKEN_SPLIT_RE = re.compile(r"[^A-Za-z0-9]+")
_CASE_BOUNDARY_RE = re.compile(r"(?<=[a-z])(?=[A-Z])")


class AnalyzerKind(str, enum.Enum):
    CAMELCASE = "camelcase"
    SHINGLE = "shingle"


FIELDS = (AnalyzerKind.CAMELCASE.value, AnalyzerKind.SHINGLE.value)


@dataclass(frozen=True)
class Token:
    text: str
    position: int


def _positioned(texts: list[str]) -> list[Token]:
    return [Token(t, i) for i, t in enumerate(texts)]


def camelcase_terms(line: str) -> list[str]:
    out: list[str] = []
    for raw in line.split():
        out.append(raw)
        for piece in _SUBTOKEN_SPLIT_RE.split(raw):
            if not piece:
                continue
            for sub in _CASE_BOUNDARY_RE.split(piece):
                if sub and sub != raw:
                    out.append(sub)
    return out


def analyze_camelcase(line: str) -> list[Token]:
    """Whitespace tokens, each followed by its case/punctuation subtokens.

    >>> [t.text for t in analyze_camelcase("x = fooBar(1)")]
    ['x', '=', 'fooBar(1)', 'foo', 'Bar', '1']
    """
    return _positioned(camelcase_terms(line))


def code_terms(line: str) -> list[str]:
    out: list[str] = []
    for chunk in line.split():
        i, n = 0, len(chunk)
        while i < n:
            m = _IDENT_RE.match(chunk, i)
            if m:
                out.append(m.group())
                i = m.end()
            elif chunk[i : i + 2] in FUSED_OPERATORS:
                out.append(chunk[i : i + 2])
                i += 2
            else:
                out.append(chunk[i])
                i += 1
    return out


def code_tokenize(line: str) -> list[Token]:
    """Identifier runs and single punctuation characters, with common
    two-character operators kept whole."""
    return _positioned(code_terms(line))


def shingle_terms(line: str, size: int = SHINGLE_SIZE) -> list[str]:
    toks = [t.lower() for t in code_terms(line)]
    return ["".join(toks[i : i + size]) for i in range(len(toks) - size + 1)]


def analyze_shingle(line: str) -> list[Token]:
    return _positioned(shingle_terms(line))


def analyze_field(field: str, line: str) -> list[str]:
    if field == AnalyzerKind.CAMELCASE.value:
        return camelcase_terms(line)
    if field == AnalyzerKind.SHINGLE.value:
        return shingle_terms(line)
    raise ValueError(f"unknown analyzer field {field!r}")


def analyze_lines(lines, field: str) -> list[str]:
    """Analyze each line separately; shingles never span line boundaries."""
    out: list[str] = []
    for line in lines:
        out.extend(analyze_field(field, line))
    return out
