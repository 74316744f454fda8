"""Batch evaluation, ablation presets, hyper-parameter sweeps and report rendering."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .backends import Backend, estimate_cost
from .corpus import RadiologyReport
from .labeler import RuleSet, label_report
from .optimizer import OptimizationError, OptimizationTrace, OptimizerConfig, optimize, retrieve_exemplars
from .prompts import ExemplarReport, Prompt, PromptTemplateConfig, dumps_prompt
from .rouge import rouge_all
from .similarity import IndexEntry, LabelIndex, SearchConfig

log = logging.getLogger(__name__)

# gpt-3.5-turbo list price, USD per 1k tokens
DEFAULT_PRICE_PROMPT = 0.002
DEFAULT_PRICE_COMPLETION = 0.002


@dataclass(frozen=True)
class RunConfig:
    prompt_mode: str = "dynamic"  # "dynamic" | "fixed"
    iterative: bool = True
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    backend: str = "mock:nearest_echo"
    seed: int = 0
    output_dir: str | None = None
    limit: int | None = None
    workers: int = 1
    price_per_1k_prompt: float = DEFAULT_PRICE_PROMPT
    price_per_1k_completion: float = DEFAULT_PRICE_COMPLETION

    def __post_init__(self):
        if self.prompt_mode not in ("dynamic", "fixed"):
            raise ValueError(f"prompt_mode must be 'dynamic' or 'fixed', got {self.prompt_mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.search.n_similar != self.optimizer.n_similar:
            object.__setattr__(self, "search", replace(self.search, n_similar=self.optimizer.n_similar))

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("output_dir")
        return d


PRESETS = {
    "fixed": dict(prompt_mode="fixed", iterative=False),
    "fixed+iter": dict(prompt_mode="fixed", iterative=True),
    "dynamic": dict(prompt_mode="dynamic", iterative=False),
    "dynamic+iter": dict(prompt_mode="dynamic", iterative=True),
}


@dataclass
class ReportResult:
    report_id: str
    r1: float = 0.0
    r2: float = 0.0
    rl: float = 0.0
    cost: float = 0.0
    status: str = "ok"
    impression: str = ""
    trace: OptimizationTrace | None = None
    prompt: Prompt | None = None


@dataclass
class EvalReport:
    rows: list[ReportResult] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def completed(self) -> list[ReportResult]:
        return [r for r in self.rows if r.status == "ok"]

    @property
    def skipped(self) -> int:
        return len(self.rows) - len(self.completed)

    def _mean(self, attr: str) -> float:
        done = self.completed
        return sum(getattr(r, attr) for r in done) / len(done) if done else 0.0

    @property
    def mean_r1(self) -> float:
        return self._mean("r1")

    @property
    def mean_r2(self) -> float:
        return self._mean("r2")

    @property
    def mean_rl(self) -> float:
        return self._mean("rl")

    @property
    def total_cost(self) -> float:
        return sum(r.cost for r in self.rows)


def build_index(corpus: Sequence[RadiologyReport], rules: RuleSet | None = None) -> LabelIndex:
    return LabelIndex(IndexEntry(r.id, label_report(r.findings, rules)) for r in corpus)


def fixed_exemplars(
    corpus: Sequence[RadiologyReport], n: int, seed: int, exclude: set[str] = frozenset()
) -> list[ExemplarReport]:
    """The first ``n`` reports of a seeded permutation of the corpus, minus ``exclude``."""
    pool = [r for r in corpus if r.id not in exclude]
    if len(pool) < n:
        raise ValueError(f"fixed prompt needs {n} corpus reports outside the test set, have {len(pool)}")
    order = np.random.default_rng(seed).permutation(len(pool))
    return [ExemplarReport(pool[i].findings, pool[i].impression, pool[i].id) for i in order[:n]]


def run_eval(
    test_set: Sequence[RadiologyReport],
    corpus: Sequence[RadiologyReport],
    cfg: RunConfig,
    backend: Backend,
    index: LabelIndex | None = None,
    rules: RuleSet | None = None,
    template: PromptTemplateConfig | None = None,
) -> EvalReport:
    """Generate and score an impression for every test report.

    Reports whose backend calls fail are kept as ``skipped`` rows and left
    out of the means.
    """
    tests = list(test_set)[: cfg.limit] if cfg.limit is not None else list(test_set)
    by_id = {r.id: r for r in corpus}
    opt_cfg = cfg.optimizer if cfg.iterative else replace(cfg.optimizer, max_iterations=1)
    shared = None
    if cfg.prompt_mode == "fixed":
        shared = fixed_exemplars(corpus, opt_cfg.n_similar, cfg.seed, {t.id for t in tests})
    elif index is None:
        index = build_index(corpus, rules)
    search = replace(cfg.search, seed=cfg.seed)

    def one(report: RadiologyReport) -> ReportResult:
        row = ReportResult(report.id)
        prompts: list[Prompt] = []
        try:
            if shared is not None:
                exemplars = shared
            else:
                exemplars = retrieve_exemplars(report.findings, by_id, index, search, rules, query_id=report.id)
            trace = optimize(report.findings, exemplars, backend, opt_cfg, template, prompts_out=prompts)
        except OptimizationError as exc:
            log.warning("report %s skipped: %s", report.id, exc)
            row.status, row.trace = "skipped", exc.trace
            row.prompt = prompts[0] if prompts else None
            row.cost = estimate_cost(exc.trace.completions, cfg.price_per_1k_prompt, cfg.price_per_1k_completion)
            return row
        scores = rouge_all(trace.final_response, report.impression)
        row.r1, row.r2, row.rl = scores["r1"].f1, scores["r2"].f1, scores["rl"].f1
        row.impression = trace.final_response
        row.trace, row.prompt = trace, prompts[0]
        row.cost = estimate_cost(trace.completions, cfg.price_per_1k_prompt, cfg.price_per_1k_completion)
        return row

    if cfg.workers == 1:
        rows = [one(r) for r in tests]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(one, tests))
    report = EvalReport(rows, cfg.echo())
    if cfg.output_dir:
        write_outputs(report, cfg.output_dir)
    return report


# -- rendering ---------------------------------------------------------------

_COLUMNS = ["id", "R-1", "R-2", "R-L", "Cost", "Status"]


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def render_report(report: EvalReport) -> tuple[str, str]:
    """Return (aligned text table, CSV) with one data line per report row.

    Rouge values are F1 percentages with two decimals; the text table adds
    a summary footer when there is at least one row.
    """
    lines = [[r.report_id, _pct(r.r1), _pct(r.r2), _pct(r.rl), f"{r.cost:.4f}", r.status] for r in report.rows]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    w.writerows(lines)

    widths = [max(len(c), *(len(l[i]) for l in lines)) if lines else len(c) for i, c in enumerate(_COLUMNS)]

    def fmt(cells):
        return "  ".join(c.ljust(wd) if i == 0 else c.rjust(wd) for i, (c, wd) in enumerate(zip(cells, widths))).rstrip()

    text = [fmt(_COLUMNS)] + [fmt(l) for l in lines]
    if lines:
        text.append(
            f"mean over {len(report.completed)} report(s): "
            f"R-1 {_pct(report.mean_r1)}  R-2 {_pct(report.mean_r2)}  R-L {_pct(report.mean_rl)}  "
            f"cost {report.total_cost:.4f}  skipped {report.skipped}"
        )
    return "\n".join(text) + "\n", buf.getvalue()


def write_outputs(report: EvalReport, out_dir) -> None:
    """report.txt, report.csv, traces/ID.json and prompts/ID.jsonl under ``out_dir``."""
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "prompts").mkdir(parents=True, exist_ok=True)
    text, csv_text = render_report(report)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(csv_text, encoding="utf-8")
    for row in report.rows:
        if row.trace is not None:
            payload = {"report_id": row.report_id, "status": row.status, **row.trace.to_dict()}
            (out / "traces" / f"{row.report_id}.json").write_text(
                json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
            )
        if row.prompt is not None:
            (out / "prompts" / f"{row.report_id}.jsonl").write_text(dumps_prompt(row.prompt), encoding="utf-8")


# -- sweeps ------------------------------------------------------------------

DEFAULT_GRID = {
    "n_similar": [5, 10, 15, 18],
    "threshold": [0.5, 0.65, 0.7, 0.75],
    "capacities": [(0, 1), (1, 0), (1, 1), (1, None), (None, 1), (None, None)],
    "max_iterations": [7, 12, 15, 17, 20],
}


def _cap(v) -> str:
    return "n" if v is None else str(v)


def _apply(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis == "capacities":
        gd, bd = value
        return replace(cfg, optimizer=replace(cfg.optimizer, good_capacity=gd, bad_capacity=bd))
    if axis == "n_similar":
        return replace(cfg, optimizer=replace(cfg.optimizer, n_similar=value), search=replace(cfg.search, n_similar=value))
    if axis in ("threshold", "max_iterations"):
        return replace(cfg, optimizer=replace(cfg.optimizer, **{axis: value}))
    raise ValueError(f"unknown sweep axis {axis!r}")


@dataclass
class SweepRow:
    setting: dict
    report: EvalReport


def _settings(grid: dict, cartesian: bool):
    axes = [a for a in grid if grid[a]]
    if not axes:
        raise ValueError("sweep grid is empty")
    if cartesian:
        for combo in itertools.product(*(grid[a] for a in axes)):
            yield dict(zip(axes, combo))
    else:
        for a in axes:
            for v in grid[a]:
                yield {a: v}


def run_sweep(
    grid: dict,
    base: RunConfig,
    run: Callable[[RunConfig], EvalReport],
    cartesian: bool = False,
) -> list[SweepRow]:
    """One :func:`run_eval` per grid setting.

    ``run`` maps a config to its report (normally a closure over
    :func:`run_eval` with a fresh backend). Per-axis mode varies one axis at
    a time around ``base``; cartesian mode runs every combination.
    """
    rows = []
    for setting in _settings(grid, cartesian):
        cfg = base
        for axis, value in setting.items():
            cfg = _apply(cfg, axis, value)
        rows.append(SweepRow(setting, run(cfg)))
    return rows


_SWEEP_COLUMNS = ["Type", "N_s", "T", "Gd", "Bd", "I", "R-1", "R-2", "R-L", "Cost", "Skipped"]


def render_sweep(rows: Sequence[SweepRow]) -> tuple[str, str]:
    lines = []
    for row in rows:
        c = row.report.config
        opt = c["optimizer"]
        lines.append([
            c["prompt_mode"] + ("+iter" if c["iterative"] else ""),
            str(opt["n_similar"]),
            f"{opt['threshold']:.2f}",
            _cap(opt["good_capacity"]),
            _cap(opt["bad_capacity"]),
            str(opt["max_iterations"]),
            _pct(row.report.mean_r1),
            _pct(row.report.mean_r2),
            _pct(row.report.mean_rl),
            f"{row.report.total_cost:.4f}",
            str(row.report.skipped),
        ])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_SWEEP_COLUMNS)
    w.writerows(lines)
    widths = [max([len(h)] + [len(l[i]) for l in lines]) for i, h in enumerate(_SWEEP_COLUMNS)]
    text = "\n".join("  ".join(c.rjust(wd) for c, wd in zip(cells, widths)) for cells in [_SWEEP_COLUMNS, *lines])
    return text + "\n", buf.getvalue()
