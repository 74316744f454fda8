"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 backend error.
Paths ``bundled:corpus`` and ``bundled:test`` refer to the synthetic fixture
corpus shipped with the package.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import corpus as corpus_mod
from .backends import BackendError, BackendSpecError, make_backend
from .config import ConfigError, load_config
from .harness import DEFAULT_GRID, PRESETS, build_index, render_report, render_sweep, run_eval, run_sweep
from .labeler import RuleSetError, default_rules, load_rules
from .optimizer import OptimizationError, optimize, retrieve_exemplars
from .prompts import PromptError, load_template
from .rouge import rouge_l, rouge_n
from .similarity import LabelIndex, SimilarityIndexError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3

log = logging.getLogger("radimpress")

BUNDLED = {
    "bundled:corpus": "synthetic_corpus.jsonl",
    "bundled:test": "synthetic_test.jsonl",
}


class DataError(Exception):
    pass


def _path(p: str) -> Path:
    if p in BUNDLED:
        return Path(str(resources.files("radimpress") / "data" / BUNDLED[p]))
    return Path(p)


def _read_corpus(p: str):
    path = _path(p)
    if not path.exists():
        raise DataError(f"corpus not found: {path}")
    return corpus_mod.load_corpus(path)


def _rules(args):
    return load_rules(args.rules) if getattr(args, "rules", None) else default_rules()


def _template(args):
    return load_template(args.template) if getattr(args, "template", None) else None


def _configs(args):
    run, backend_cfg = load_config(args.config)
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    if args.backend is not None:
        run = replace(run, backend=args.backend)
    if args.early_stop_at is not None:
        run = replace(run, optimizer=replace(run.optimizer, early_stop_at=args.early_stop_at))
    return run, backend_cfg


def _labels(args, reports, rules):
    if getattr(args, "labels", None):
        return LabelIndex.load_tsv(_path(args.labels))
    return build_index(reports, rules)


# -- commands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    raw = Path(args.raw_dir)
    if not raw.is_dir():
        raise DataError(f"not a directory: {raw}")
    reports, failures = corpus_mod.ingest_dir(raw, args.glob)
    kept = reports if args.no_filter else corpus_mod.filter_eligible(reports)
    corpus_mod.save_corpus(kept, args.out)
    for rid, reason in failures.items():
        log.warning("%s: %s", rid, reason)
    print(f"parsed {len(reports)}, failed {len(failures)}, kept {len(kept)} -> {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    s = corpus_mod.compute_stats(_read_corpus(args.corpus))
    print(f"Report Num  {s.report_count}")
    print(f"AVG. WF     {s.avg_words_findings:.2f}")
    print(f"AVG. SF     {s.avg_sentences_findings:.2f}")
    print(f"AVG. WI     {s.avg_words_impression:.2f}")
    print(f"AVG. SI     {s.avg_sentences_impression:.2f}")
    return EXIT_OK


def cmd_label(args) -> int:
    reports = _read_corpus(args.corpus)
    build_index(reports, _rules(args)).save_tsv(args.out)
    print(f"labeled {len(reports)} reports -> {args.out}")
    return EXIT_OK


def cmd_search(args) -> int:
    index = LabelIndex.load_tsv(_path(args.labels))
    hits = index.search(index.vector(args.query_id), args.k, exclude_id=args.query_id)
    for rid, dist in hits:
        print(f"{rid}\t{dist:.4f}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    run, backend_cfg = _configs(args)
    rules = _rules(args)
    reports = _read_corpus(args.corpus)
    index = _labels(args, reports, rules)
    findings = Path(args.findings).read_text(encoding="utf-8").strip()
    exemplars = retrieve_exemplars(findings, reports, index, replace(run.search, seed=run.seed), rules)
    backend = make_backend(run.backend, backend_cfg)
    opt = run.optimizer if run.iterative else replace(run.optimizer, max_iterations=1)
    try:
        trace = optimize(findings, exemplars, backend, opt, _template(args))
    except OptimizationError as exc:
        if args.trace:
            Path(args.trace).write_text(json.dumps(exc.trace.to_dict(), indent=2) + "\n", encoding="utf-8")
        raise
    if args.trace:
        Path(args.trace).write_text(json.dumps(trace.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(trace.final_response)
    return EXIT_OK


def _eval_cfg(args):
    run, backend_cfg = _configs(args)
    if args.preset:
        run = replace(run, **PRESETS[args.preset])
    if args.mode:
        run = replace(run, prompt_mode=args.mode)
    if args.no_iterative:
        run = replace(run, iterative=False)
    if args.limit is not None:
        run = replace(run, limit=args.limit)
    if args.workers is not None:
        run = replace(run, workers=args.workers)
    return run, backend_cfg


def cmd_eval(args) -> int:
    run, backend_cfg = _eval_cfg(args)
    run = replace(run, output_dir=args.out)
    rules = _rules(args)
    reports = _read_corpus(args.corpus)
    tests = corpus_mod.filter_eligible(_read_corpus(args.test))
    index = _labels(args, reports, rules) if run.prompt_mode == "dynamic" else None
    report = run_eval(tests, reports, run, make_backend(run.backend, backend_cfg), index, rules, _template(args))
    text, _ = render_report(report)
    sys.stdout.write(text)
    if report.rows and report.skipped == len(report.rows):
        return EXIT_BACKEND
    return EXIT_OK


def _parse_axis(name: str, raw: str):
    vals = []
    for tok in raw.split(","):
        tok = tok.strip()
        if name == "capacities":
            gd, bd = tok.split(":")
            vals.append((None if gd == "n" else int(gd), None if bd == "n" else int(bd)))
        elif name == "threshold":
            vals.append(float(tok))
        else:
            vals.append(int(tok))
    return vals


def cmd_sweep(args) -> int:
    run, backend_cfg = _eval_cfg(args)
    rules = _rules(args)
    reports = _read_corpus(args.corpus)
    tests = corpus_mod.filter_eligible(_read_corpus(args.test))
    index = build_index(reports, rules)
    axes = args.axes.split(",") if args.axes else list(DEFAULT_GRID)
    grid = {}
    for a in axes:
        if a not in DEFAULT_GRID:
            raise ConfigError(f"unknown sweep axis {a!r}; choose from {sorted(DEFAULT_GRID)}")
        override = getattr(args, a)
        grid[a] = _parse_axis(a, override) if override else DEFAULT_GRID[a]
    out = Path(args.out)

    def one(cfg):
        return run_eval(tests, reports, cfg, make_backend(cfg.backend, backend_cfg), index, rules, _template(args))

    rows = run_sweep(grid, run, one, cartesian=args.cartesian)
    text, csv_text = render_sweep(rows)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.txt").write_text(text, encoding="utf-8")
    (out / "sweep.csv").write_text(csv_text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_score(args) -> int:
    cand = Path(args.candidate).read_text(encoding="utf-8")
    ref = Path(args.reference).read_text(encoding="utf-8")
    metrics = [args.metric] if args.metric else ["r1", "r2", "rl"]
    for m in metrics:
        s = rouge_l(cand, ref) if m == "rl" else rouge_n(cand, ref, int(m[1]))
        print(f"{m}\tP={s.precision:.4f}\tR={s.recall:.4f}\tF1={s.f1:.4f}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config with [backend] [optimizer] [search] [run] tables")
    common.add_argument("--seed", type=int)
    common.add_argument("--backend", help="http | mock:nearest_echo | mock:SCRIPT.json")
    common.add_argument("--early-stop-at", type=float, help="stop a report once a response scores at least this (off by default)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="radimpress", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="parse raw report files into a JSON-lines corpus")
    s.add_argument("--raw-dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--glob", default="*.txt")
    s.add_argument("--no-filter", action="store_true", help="keep reports failing the word-count rules")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("stats", parents=[common], help="corpus statistics")
    s.add_argument("--corpus", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("label", parents=[common], help="write the label-vector TSV for a corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--rules")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("search", parents=[common], help="nearest reports to a labelled report")
    s.add_argument("--labels", required=True)
    s.add_argument("--query-id", required=True)
    s.add_argument("--k", type=int, default=15)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("summarize", parents=[common], help="generate an impression for one findings text")
    s.add_argument("--corpus", required=True)
    s.add_argument("--labels")
    s.add_argument("--findings", required=True)
    s.add_argument("--trace")
    s.add_argument("--rules")
    s.add_argument("--template")
    s.set_defaults(func=cmd_summarize)

    for name, func, helptext in (
        ("eval", cmd_eval, "evaluate a test set against its reference impressions"),
        ("sweep", cmd_sweep, "hyper-parameter sweep over the evaluation"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--corpus", required=True)
        s.add_argument("--test", required=True)
        s.add_argument("--labels")
        s.add_argument("--out", required=True)
        s.add_argument("--preset", choices=sorted(PRESETS))
        s.add_argument("--mode", choices=["dynamic", "fixed"])
        s.add_argument("--no-iterative", action="store_true")
        s.add_argument("--limit", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--rules")
        s.add_argument("--template")
        if name == "sweep":
            s.add_argument("--axes", help="comma list of: " + ",".join(DEFAULT_GRID))
            s.add_argument("--cartesian", action="store_true")
            s.add_argument("--n-similar", dest="n_similar")
            s.add_argument("--threshold")
            s.add_argument("--capacities", help="e.g. 0:1,1:n")
            s.add_argument("--max-iterations", dest="max_iterations")
        s.set_defaults(func=func)

    s = sub.add_parser("score", parents=[common], help="Rouge P/R/F1 of a candidate against a reference")
    s.add_argument("--candidate", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--metric", choices=["r1", "r2", "rl"])
    s.set_defaults(func=cmd_score)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RuleSetError, PromptError, BackendSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, corpus_mod.CorpusError, SimilarityIndexError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
