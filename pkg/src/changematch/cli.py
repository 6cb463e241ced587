"""Command-line interface.

``predict`` exits 0 for clean, 1 for buggy and 2 on error so it can sit in
a commit hook. Every other command exits 0 on success and 2 on error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .classify import (
    ClassifierConfig,
    LaModel,
    ThresholdConfig,
    TrainedClassifier,
    candidate_matches,
    train_la,
)
from .corpus import Change, CorpusError, DiffParseError, changes_from_diff, group_commits, load_corpus, write_corpus
from .evaluation import (
    MODES,
    EvalConfig,
    PeriodError,
    read_line_labels,
    run_evaluation,
    summarize,
    tune_on_index,
    write_line_labels,
    write_reports,
)
from .index import InvertedIndex, SnapshotError, build_index
from .ingest import IngestError, RepoSource, extract_commit, ingest_repo
from .linerank import buggy_tokens_from_matches, rank_lines

log = logging.getLogger("changematch")

EXIT_CLEAN, EXIT_BUGGY, EXIT_ERROR = 0, 1, 2

# Settings that may come from the --config file; flags override them.
DEFAULTS: dict[str, Any] = {
    "top_k": 10,
    "max_query_terms": 25,
    "members": ["knn", "la"],
    "k": 3,
    "t_score": "auto",
    "la_log_transform": True,
    "mode": "increasing",
    "window_days": 180,
    "gap_days": 0,
    "top_m": 20,
    "union_tokens": False,
    "count_repetitions": False,
    "top_k_lines": 10,
    "max_validation_queries": 500,
}


class CliError(Exception):
    pass


def _settings(args: argparse.Namespace) -> dict[str, Any]:
    merged = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"config {args.config} is not valid JSON: {exc.msg}") from None
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _classifier_config(s: dict[str, Any]) -> ClassifierConfig:
    members = s["members"]
    if isinstance(members, str):
        members = [m.strip() for m in members.split(",") if m.strip()]
    t = s["t_score"]
    t_score = None if t in (None, "auto") else float(t)
    try:
        return ClassifierConfig(
            members=tuple(members),
            k=int(s["k"]),
            t_score=t_score,
            la_log_transform=bool(s["la_log_transform"]),
            top_k=int(s["top_k"]),
            max_query_terms=int(s["max_query_terms"]),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _eval_config(s: dict[str, Any], threads: int) -> EvalConfig:
    return EvalConfig(
        classifier=_classifier_config(s),
        window_days=int(s["window_days"]),
        gap_days=int(s["gap_days"]),
        top_m=int(s["top_m"]),
        union_tokens=bool(s["union_tokens"]),
        count_repetitions=bool(s["count_repetitions"]),
        top_k_lines=int(s["top_k_lines"]),
        max_validation_queries=int(s["max_validation_queries"]),
        threads=threads,
    )


def _require_file(path: str | None, what: str) -> Path:
    if path is None:
        raise CliError(f"{what} is required")
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {path}")
    return p


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _probe_changes(args: argparse.Namespace) -> list[Change]:
    if args.commit:
        if not args.repo:
            raise CliError("--commit needs --repo")
        return list(extract_commit(RepoSource(Path(args.repo)), args.commit).changes)
    if args.diff is None:
        raise CliError("give --diff FILE (or '-' for stdin) or --repo/--commit")
    try:
        text = sys.stdin.read() if args.diff == "-" else Path(args.diff).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(f"cannot read diff {args.diff}: {exc}") from None
    return changes_from_diff(text)


def _load_index(path: str) -> InvertedIndex:
    return InvertedIndex.load(_require_file(path, "index snapshot"))


def _load_model(path: str | None) -> dict:
    if not path:
        return {}
    with open(_require_file(path, "model file"), encoding="utf-8") as fh:
        return json.load(fh)


# --- commands ---------------------------------------------------------------


def cmd_ingest(args, settings) -> int:
    labels = None
    if args.labels is not None:
        labels = _require_file(args.labels, "label file")
    docs = ingest_repo(RepoSource(Path(args.repo), args.branch, args.since, args.until), labels)
    write_corpus(docs, args.out)
    print(f"wrote {len(docs)} documents from {len({d.commit_hash for d in docs})} commits to {args.out}")
    return 0


def cmd_index(args, settings) -> int:
    docs = load_corpus(_require_file(args.corpus, "corpus"))
    index = build_index(docs)
    index.save(args.out)
    print(f"indexed {len(index)} documents into {args.out}")
    return 0


def cmd_update(args, settings) -> int:
    index = _load_index(args.index)
    docs = load_corpus(_require_file(args.corpus, "corpus"))
    before = len(index)
    index.add_documents(docs)
    out = args.out or args.index
    index.save(out)
    print(f"added {len(index) - before} documents; snapshot {out} now holds {len(index)}")
    return 0


def _predict_report(index: InvertedIndex, changes: list[Change], settings, model: dict) -> dict:
    ccfg = _classifier_config(settings)
    trained = TrainedClassifier(ccfg)
    if "threshold" in ccfg.members:
        if ccfg.t_score is not None:
            trained.threshold = ThresholdConfig(ccfg.t_score)
        elif "t_score" in model:
            trained.threshold = ThresholdConfig(float(model["t_score"]))
        else:
            raise CliError("threshold member needs --t-score or a --model from 'changematch tune'")
    if "la" in ccfg.members:
        if "la_model" in model:
            m = model["la_model"]
            trained.la_model = LaModel(float(m["weight"]), float(m["intercept"]), bool(m["log_transform"]))
        else:
            history = list(index.commit_la().values())
            if not history:
                raise CliError("la member needs a non-empty index or a --model")
            trained.la_model = train_la(history, log_transform=ccfg.la_log_transform)
    matches = candidate_matches(index, changes, ccfg.top_k, ccfg.max_query_terms)
    la = sum(len(c.lines_added) for c in changes)
    pred = trained.predict(matches, la)
    report = {
        "verdict": pred.verdict.value,
        "confidence": pred.confidence,
        "lines_added": la,
        "support": [
            {"commit_hash": m.commit_hash, "file_path": m.file_path, "score": m.relevance_score, "label": m.label.value}
            for m in pred.supporting_matches
        ],
        "ranked_lines": [],
    }
    if pred.buggy:
        lines = [(c.file_path, t) for c in changes for t in c.lines_added]
        tokens = buggy_tokens_from_matches(matches, int(settings["top_m"]), bool(settings["union_tokens"]))
        report["buggy_tokens"] = tokens.terms
        report["ranked_lines"] = [
            r.to_dict() for r in rank_lines(lines, tokens, bool(settings["count_repetitions"]))
        ]
    return report


def cmd_predict(args, settings) -> int:
    index = _load_index(args.index)
    changes = _probe_changes(args)
    report = _predict_report(index, changes, settings, _load_model(args.model))
    print(f"verdict: {report['verdict']} (confidence {report['confidence']:.3f})")
    if report["support"]:
        print("supporting past changes:")
        for s in report["support"]:
            print(f"  {s['commit_hash'][:12]}  {s['label']:5}  {s['score']:9.3f}  {s['file_path']}")
    for r in report["ranked_lines"]:
        print(f"  #{r['rank']:<3} hits={r['occurrence_count']:<3} {r['file_path']}:{r['position']}  {r['line_text']}")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return EXIT_BUGGY if report["verdict"] == "buggy" else EXIT_CLEAN


def cmd_rank_lines(args, settings) -> int:
    index = _load_index(args.index)
    changes = _probe_changes(args)
    ccfg = _classifier_config(settings)
    matches = candidate_matches(index, changes, ccfg.top_k, ccfg.max_query_terms)
    tokens = buggy_tokens_from_matches(matches, int(settings["top_m"]), bool(settings["union_tokens"]))
    lines = [(c.file_path, t) for c in changes for t in c.lines_added]
    ranked = rank_lines(lines, tokens, bool(settings["count_repetitions"]))
    if tokens.source_doc_id is None:
        print("no buggy match retrieved; lines left in input order")
    else:
        print(f"buggy tokens from doc {tokens.source_doc_id}: {' '.join(tokens.terms)}")
    for r in ranked:
        print(f"  #{r.rank:<3} hits={r.occurrence_count:<3} {r.file_path}:{r.position}  {r.line_text}")
    if args.out:
        Path(args.out).write_text(
            json.dumps({"buggy_tokens": tokens.terms, "ranked_lines": [r.to_dict() for r in ranked]}, indent=2) + "\n",
            encoding="utf-8",
        )
    return 0


def cmd_tune(args, settings) -> int:
    corpus = _require_file(args.corpus, "corpus")
    docs = load_corpus(corpus)
    commits = group_commits(docs)
    ccfg = _classifier_config(settings)
    index = build_index(docs)
    cfg = tune_on_index(index, commits, ccfg, int(settings["max_validation_queries"]))
    la_model = train_la([(c.la, c.label) for c in commits], log_transform=ccfg.la_log_transform)
    print(f"t_score: {cfg.t_score:.6g}")
    print(f"validation AUC: {cfg.validation_auc:.4f}")
    if args.out:
        model = {
            "t_score": cfg.t_score,
            "validation_auc": cfg.validation_auc,
            "la_model": {"weight": la_model.weight, "intercept": la_model.intercept, "log_transform": la_model.log_transform},
            "corpus_sha256": _digest(corpus),
        }
        Path(args.out).write_text(json.dumps(model, indent=2) + "\n", encoding="utf-8")
    return 0


def _fmt(v) -> str:
    if v is None:
        return "-"
    return f"{v:.3f}" if isinstance(v, float) else str(v)


def cmd_evaluate(args, settings) -> int:
    corpus = _require_file(args.corpus, "corpus")
    commits = group_commits(load_corpus(corpus))
    line_labels = read_line_labels(_require_file(args.line_labels, "line label file")) if args.line_labels else None
    cfg = _eval_config(settings, args.threads)
    modes = MODES if settings["mode"] == "both" else (settings["mode"],)
    out_dir = Path(args.out) if args.out else None
    manifest: dict[str, Any] = {
        "version": __version__,
        "corpus": str(corpus),
        "corpus_sha256": _digest(corpus),
        "seed": args.seed,
        "config": cfg.to_dict(),
        "summary": {},
    }
    columns = ("precision", "recall", "f1", "far", "d2h", "auc", "ifa")
    for mode in modes:
        reports = run_evaluation(commits, mode, cfg, line_labels)
        print(f"== {mode} models ==")
        print("period  n_train  n_test  buggy  " + "  ".join(f"{c:>9}" for c in columns))
        for r in reports:
            print(
                f"{r.period_index:>6}  {r.n_train:>7}  {r.n_test:>6}  {r.n_test_buggy:>5}  "
                + "  ".join(f"{_fmt(getattr(r, c)):>9}" for c in columns)
            )
        summary = summarize(reports)
        print("median  " + "  ".join(f"{k}={_fmt(v)}" for k, v in summary.items()))
        manifest["summary"][mode] = summary
        if out_dir:
            write_reports(reports, out_dir, stem=f"periods_{mode}")
    if out_dir:
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_synthesize(args, settings) -> int:
    from .synthetic import generate_corpus

    synth = generate_corpus(n_commits=args.commits, months=args.months, buggy_rate=args.buggy_rate, seed=args.seed)
    write_corpus([d for c in synth.commits for d in c.documents()], args.out)
    if args.line_labels:
        write_line_labels(synth.line_labels, args.line_labels)
    print(f"wrote {len(synth.commits)} synthetic commits to {args.out}")
    return 0


# --- argument parsing ---------------------------------------------------------


def _add_probe_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--index", required=True, help="index snapshot")
    p.add_argument("--diff", help="unified diff file, or '-' for stdin")
    p.add_argument("--repo", help="repository for --commit")
    p.add_argument("--commit", help="commit hash to classify")
    p.add_argument("--out", help="write a JSON report here")


def _add_classifier_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--members", help="comma-separated classifiers: knn, threshold, la")
    p.add_argument("--k", type=int, help="neighbours for knn")
    p.add_argument("--t-score", dest="t_score", help="threshold, or 'auto' to tune")
    p.add_argument("--no-la-log", dest="la_log_transform", action="store_false", default=None)
    p.add_argument("--top-k", dest="top_k", type=int, help="hits kept per MLT query")
    p.add_argument("--max-query-terms", dest="max_query_terms", type=int)
    p.add_argument("--top-m", dest="top_m", type=int, help="buggy tokens kept for line ranking")
    p.add_argument("--union-tokens", dest="union_tokens", action="store_true", default=None)
    p.add_argument("--count-repetitions", dest="count_repetitions", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="changematch", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON settings file; flags override it")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="extract a corpus from a git repository")
    p.add_argument("--repo", required=True)
    p.add_argument("--labels", help="header-less CSV commit_hash,label")
    p.add_argument("--branch", default="HEAD")
    p.add_argument("--since", type=int, help="first author timestamp (inclusive)")
    p.add_argument("--until", type=int, help="last author timestamp (exclusive)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build an index snapshot from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("update", help="append a corpus to an index snapshot")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", help="defaults to rewriting --index")
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("predict", help="classify a commit (exit 0 clean, 1 buggy, 2 error)")
    _add_probe_args(p)
    _add_classifier_args(p)
    p.add_argument("--model", help="model file written by 'tune'")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rank-lines", help="rank a change's added lines by buggy-token hits")
    _add_probe_args(p)
    _add_classifier_args(p)
    p.set_defaults(func=cmd_rank_lines)

    p = sub.add_parser("tune", help="tune the threshold on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", help="write t_score and la model as JSON")
    _add_classifier_args(p)
    p.add_argument("--max-validation-queries", dest="max_validation_queries", type=int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="chronological online evaluation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--line-labels", help="header-less CSV commit_hash,file_path,line_index")
    p.add_argument("--mode", choices=[*MODES, "both"])
    p.add_argument("--window-days", dest="window_days", type=int)
    p.add_argument("--gap-days", dest="gap_days", type=int)
    p.add_argument("--top-k-lines", dest="top_k_lines", type=int)
    p.add_argument("--max-validation-queries", dest="max_validation_queries", type=int)
    p.add_argument("--out", help="directory for CSV/JSONL reports and manifest")
    _add_classifier_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synthesize", help="write a synthetic corpus with planted recurring bugs")
    p.add_argument("--out", required=True)
    p.add_argument("--line-labels")
    p.add_argument("--commits", type=int, default=2000)
    p.add_argument("--months", type=int, default=24)
    p.add_argument("--buggy-rate", dest="buggy_rate", type=float, default=0.15)
    p.set_defaults(func=cmd_synthesize)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, _settings(args))
    except (CliError, CorpusError, DiffParseError, SnapshotError, IngestError, PeriodError, ValueError, OSError) as exc:
        print(f"changematch {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
