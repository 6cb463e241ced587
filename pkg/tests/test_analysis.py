from collections import Counter

import pytest
from hypothesis import given, strategies as st

from changematch.analysis import FUSED_OPERATORS, analyze_camelcase, analyze_shingle, code_tokenize

CONDITION_LINE = "if(tbl != null && !isExternal(tbl))"

code_text = st.text(alphabet="abcXYZ_$019 ()!=<>&|+-*/;.,\t", max_size=60)


def texts(tokens):
    return [t.text for t in tokens]


def test_camelcase_reference_line():
    assert texts(analyze_camelcase(CONDITION_LINE)) == [
        "if(tbl", "if", "tbl", "!=", "null", "&&", "!isExternal(tbl))", "is", "External", "tbl",
    ]


def test_shingle_reference_line():
    expected = [
        "!=null&&!", "!isexternal(tbl", "&&!isexternal(", "(tbl!=null", "(tbl))",
        "if(tbl!=", "isexternal(tbl)", "null&&!isexternal", "tbl!=null&&",
    ]
    assert sorted(texts(analyze_shingle(CONDITION_LINE))) == expected


def test_code_tokenize_reference_line():
    assert texts(code_tokenize(CONDITION_LINE)) == ["if", "(", "tbl", "!=", "null", "&&", "!", "isExternal", "(", "tbl", ")", ")"]


@pytest.mark.parametrize(
    "line, expected",
    [
        ("", []),
        ("foo", ["foo"]),
        ("getHTTPResponse", ["getHTTPResponse", "get", "HTTPResponse"]),
        ("a_b", ["a_b", "a", "b"]),
    ],
)
def test_camelcase_small(line, expected):
    assert texts(analyze_camelcase(line)) == expected


@pytest.mark.parametrize(
    "line, expected",
    [("a+b", ["a", "+", "b"]), ("x <<y", ["x", "<<", "y"]), ("i++;", ["i", "++", ";"]), ("a->b::c", ["a", "->", "b", "::", "c"]), ("$x_1", ["$x_1"])],
)
def test_code_tokenize_small(line, expected):
    assert texts(code_tokenize(line)) == expected


def test_all_fused_operators():
    for op in FUSED_OPERATORS:
        assert texts(code_tokenize(f"a{op}b")) == ["a", op, "b"]


@pytest.mark.parametrize("line, expected", [("a b c", []), ("a b c d e", ["abcd", "bcde"]), ("A B C D", ["abcd"])])
def test_shingle_small(line, expected):
    assert texts(analyze_shingle(line)) == expected


@given(code_text)
def test_shingle_count(line):
    assert len(analyze_shingle(line)) == max(0, len(code_tokenize(line)) - 3)


@given(code_text)
def test_camelcase_keeps_raw_tokens(line):
    out = Counter(texts(analyze_camelcase(line)))
    for raw, n in Counter(line.split()).items():
        assert out[raw] >= n


@given(code_text)
def test_positions_and_nonempty(line):
    for analyzer in (analyze_camelcase, code_tokenize, analyze_shingle):
        toks = analyzer(line)
        assert [t.position for t in toks] == list(range(len(toks)))
        assert all(t.text for t in toks)
        assert toks == analyzer(line)


@given(code_text)
def test_code_tokens_cover_input(line):
    assert "".join(texts(code_tokenize(line))) == "".join(line.split())
