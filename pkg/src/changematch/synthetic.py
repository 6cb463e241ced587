"""Synthetic commit histories with planted recurring bugs.

Buggy commits belong to bug families: each new member copies the most
recent member's defect lines with a small mutation, so it is a near
duplicate of an earlier buggy commit. The copied lines are recorded as
the truly buggy lines. Clean commits are drawn from a shared everyday
vocabulary.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from hashlib import sha1

from .analysis import shingle_terms
from .corpus import Change, Commit, Label

DAY = 86_400
EPOCH = 1_500_000_000

_WORDS = (
    "item count value index buffer result node list name size path user data config "
    "entry state table record cache key token stream reader writer handler event queue "
    "payload offset limit total window session client server request response message "
    "channel context parent child source target filter matcher builder factory loader"
).split()
_TYPES = ["int", "long", "String", "boolean", "double", "List<String>", "Map<String, Object>"]
_OPS = ["==", "!=", "<", ">", "<=", ">="]
_SYLLABLES = "ka zu mi ro te ga vo pe li su na dor fex quil brin taz vel mor pix".split()


def _camel(words: list[str]) -> str:
    return words[0] + "".join(w.capitalize() for w in words[1:])


@dataclass
class SyntheticCorpus:
    commits: list[Commit]
    line_labels: dict[str, set[tuple[str, int]]]
    parents: dict[str, str]  # buggy commit -> earlier buggy commit it duplicates


class _Generator:
    def __init__(self, rng: random.Random):
        self.rng = rng

    def ident(self) -> str:
        r = self.rng
        return _camel(r.sample(_WORDS, r.choice([1, 2, 2, 3])))

    def rare_word(self) -> str:
        return "".join(self.rng.choice(_SYLLABLES) for _ in range(3))

    def filler_line(self) -> str:
        r = self.rng
        a, b, c = self.ident(), self.ident(), self.ident()
        shape = r.randrange(6)
        if shape == 0:
            return f"{r.choice(_TYPES)} {a} = {b}.get{c.capitalize()}();"
        if shape == 1:
            return f"if ({a} {r.choice(_OPS)} {b}) {{"
        if shape == 2:
            return f"return {a}.{b}({c});"
        if shape == 3:
            return f"{a}.set{b.capitalize()}({c} + {r.randrange(10)});"
        if shape == 4:
            return f"for (int i = 0; i < {a}.size(); i++) {{"
        return f"log.debug(\"{a} \" + {b});"

    def defect_lines(self, vocab: list[str]) -> list[str]:
        r = self.rng
        lines = []
        for _ in range(r.randint(6, 9)):
            a, b, c = r.sample(vocab, 3)
            shape = r.randrange(4)
            if shape == 0:
                lines.append(f"{a}{c.capitalize()} = {b}.acquire{c.capitalize()}({a}, null);")
            elif shape == 1:
                lines.append(f"if ({a}.{b}() != null && !{c}.isClosed({a})) {{")
            elif shape == 2:
                lines.append(f"{b}.release({a}[{c}.length - 1]);")
            else:
                lines.append(f"synchronized ({c}) {{ {a}.put({b}, {c}); }}")
        return lines

    def mutate(self, lines: list[str], vocab: list[str]) -> list[str]:
        r = self.rng
        out = list(lines)
        if r.random() < 0.6:
            i = r.randrange(len(out))
            words = [w for w in vocab if w in out[i]]
            if words:
                out[i] = out[i].replace(r.choice(words), r.choice(vocab), 1)
        return out


def shingle_overlap(new_lines: list[str], old_lines: list[str]) -> float:
    """Fraction of ``new_lines``' distinct shingles also found in ``old_lines``."""
    new = {s for l in new_lines for s in shingle_terms(l)}
    old = {s for l in old_lines for s in shingle_terms(l)}
    return len(new & old) / len(new) if new else 0.0


def generate_corpus(
    n_commits: int = 2000,
    months: int = 24,
    buggy_rate: float = 0.15,
    n_families: int = 25,
    seed: int = 0,
    min_overlap: float = 0.7,
    warmup_days: int = 180,
    decoy_rate: float = 0.1,
) -> SyntheticCorpus:
    """Generate ``n_commits`` commits spread over ``months`` 30-day months.

    Families are opened only during the first ``warmup_days``; afterwards
    every buggy commit extends a family whose last member is at most
    ``warmup_days`` old when one exists. A ``decoy_rate`` share of clean
    commits borrow two lines from some family, so clean commits also
    retrieve buggy matches.
    """
    rng = random.Random(seed)
    gen = _Generator(rng)
    span = months * 30 * DAY
    stamps = sorted(EPOCH + rng.randrange(span) for _ in range(n_commits))
    n_buggy = round(buggy_rate * n_commits)
    buggy_idx = set(rng.sample(range(n_commits), n_buggy))

    vocabs = [[gen.rare_word() for _ in range(6)] for _ in range(n_families)]
    families: list[dict] = []  # {"vocab", "lines", "last_ts", "last_hash"}
    commits: list[Commit] = []
    line_labels: dict[str, set[tuple[str, int]]] = {}
    parents: dict[str, str] = {}

    for i, ts in enumerate(stamps):
        h = sha1(f"{seed}:{i}".encode()).hexdigest()
        if i not in buggy_idx:
            changes = []
            for f in range(rng.choice([1, 1, 2])):
                lines = [gen.filler_line() for _ in range(rng.randint(3, 12))]
                if f == 0 and families and rng.random() < decoy_rate:
                    donor = rng.choice(families)["lines"]
                    lines[rng.randrange(len(lines)):0] = rng.sample(donor, 2)
                changes.append(Change(h, f"src/{gen.ident()}/{gen.ident()}{f}.java", tuple(lines)))
            commits.append(Commit(h, ts, Label.CLEAN, tuple(changes)))
            continue

        early = ts - stamps[0] < warmup_days * DAY
        recent = [fam for fam in families if ts - fam["last_ts"] <= warmup_days * DAY]
        if early and (len(families) < n_families and (not families or rng.random() < 0.5)):
            fam = {"vocab": vocabs[len(families)], "lines": None, "last_ts": ts, "last_hash": None}
            families.append(fam)
        elif recent:
            fam = rng.choice(recent)
        elif families:
            fam = max(families, key=lambda f: f["last_ts"])
        else:
            fam = {"vocab": vocabs[0], "lines": None, "last_ts": ts, "last_hash": None}
            families.append(fam)

        fillers = [gen.filler_line() for _ in range(rng.randint(0, 2))]
        if fam["lines"] is None:
            defect = gen.defect_lines(fam["vocab"])
        else:
            for _ in range(20):
                defect = gen.mutate(fam["lines"], fam["vocab"])
                if shingle_overlap(defect + fillers, fam["lines"]) >= min_overlap:
                    break
            else:
                defect, fillers = list(fam["lines"]), []
            parents[h] = fam["last_hash"]
        path = f"src/core/{_camel(fam['vocab'][:2])}.java"
        # fillers first, so a correct ranking has to lift the defect lines
        lines = fillers + defect
        commits.append(Commit(h, ts, Label.BUGGY, (Change(h, path, tuple(lines), (), Label.BUGGY),)))
        line_labels[h] = {(path, len(fillers) + j + 1) for j in range(len(defect))}
        fam.update(lines=defect, last_ts=ts, last_hash=h)

    return SyntheticCorpus(commits, line_labels, parents)
