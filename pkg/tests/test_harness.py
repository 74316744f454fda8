import filecmp
from dataclasses import replace

import pytest

from radimpress.backends import MockBackend, MockScript, RateLimited
from radimpress.corpus import RadiologyReport
from radimpress.harness import (
    DEFAULT_GRID,
    PRESETS,
    EvalReport,
    ReportResult,
    RunConfig,
    build_index,
    fixed_exemplars,
    render_report,
    render_sweep,
    run_eval,
    run_sweep,
)
from radimpress.optimizer import OptimizerConfig
from radimpress.prompts import Role


def echo():
    return MockBackend(MockScript.nearest_echo())


def cfg(**kw):
    opt = kw.pop("optimizer", OptimizerConfig(max_iterations=3))
    return RunConfig(optimizer=opt, **kw)


def test_perfect_echo_scores_one(synthetic_corpus):
    test = [RadiologyReport("X-1", "The lungs are clear. No effusion is seen at all.", "No acute cardiopulmonary abnormality.")]
    rep = run_eval(test, synthetic_corpus, cfg(), MockBackend(MockScript.template(test[0].impression)))
    assert (rep.mean_r1, rep.mean_r2, rep.mean_rl) == (1.0, 1.0, 1.0)


def test_half_mean(synthetic_corpus):
    test = [
        RadiologyReport("X-1", "The lungs are clear. No effusion is seen at all.", "No acute process."),
        RadiologyReport("X-2", "Large right pleural effusion with adjacent atelectasis noted.", "Right effusion."),
    ]
    backend = MockBackend(MockScript.scripted(["No acute process.", "zebra quartz"]))
    rep = run_eval(test, synthetic_corpus, cfg(iterative=False), backend)
    assert backend.calls == 2
    assert [r.r1 for r in rep.rows] == [1.0, 0.0]
    assert rep.mean_r1 == 0.5


def test_dynamic_beats_fixed(synthetic_corpus, synthetic_test):
    dyn = run_eval(synthetic_test, synthetic_corpus, cfg(**PRESETS["dynamic"]), echo())
    fix = run_eval(synthetic_test, synthetic_corpus, cfg(**PRESETS["fixed"]), echo())
    assert dyn.mean_r1 > fix.mean_r1
    assert dyn.skipped == fix.skipped == 0


def test_fixed_mode_shares_exemplars(synthetic_corpus, synthetic_test):
    rep = run_eval(synthetic_test, synthetic_corpus, cfg(prompt_mode="fixed"), echo())
    blocks = {tuple(m.content for m in r.prompt.messages[:-1]) for r in rep.rows}
    assert len(blocks) == 1
    test_ids = {t.id for t in synthetic_test}
    assert not test_ids & set(rep.rows[0].trace.exemplar_ids)


def test_fixed_exemplars_seeded(synthetic_corpus):
    a = fixed_exemplars(synthetic_corpus, 5, seed=1)
    assert a == fixed_exemplars(synthetic_corpus, 5, seed=1)
    assert a != fixed_exemplars(synthetic_corpus, 5, seed=2)
    with pytest.raises(ValueError):
        fixed_exemplars(synthetic_corpus[:3], 5, seed=0)


def test_non_iterative_single_call(synthetic_corpus, synthetic_test):
    b = echo()
    run_eval(synthetic_test, synthetic_corpus, cfg(iterative=False), b)
    assert b.calls == len(synthetic_test)
    b = echo()
    run_eval(synthetic_test, synthetic_corpus, cfg(), b)
    assert b.calls == 3 * len(synthetic_test)


def test_limit(synthetic_corpus, synthetic_test):
    rep = run_eval(synthetic_test, synthetic_corpus, cfg(limit=2), echo())
    assert [r.report_id for r in rep.rows] == [t.id for t in synthetic_test[:2]]


def test_workers_match_sequential(synthetic_corpus, synthetic_test):
    a = run_eval(synthetic_test, synthetic_corpus, cfg(), echo())
    b = run_eval(synthetic_test, synthetic_corpus, cfg(workers=4), echo())
    assert render_report(a) == render_report(b)


def test_means_and_cost_invariants(synthetic_corpus, synthetic_test):
    rep = run_eval(synthetic_test, synthetic_corpus, cfg(), echo())
    for v in (rep.mean_r1, rep.mean_r2, rep.mean_rl):
        assert 0.0 <= v <= 1.0
    assert rep.mean_r1 == pytest.approx(sum(r.r1 for r in rep.rows) / len(rep.rows))
    assert rep.total_cost == pytest.approx(sum(r.cost for r in rep.rows)) and rep.total_cost > 0


class FailFor:
    """Nearest-echo mock that fails whenever a given findings text is queried."""

    def __init__(self, needle):
        self.inner, self.needle = echo(), needle

    def complete(self, prompt):
        if self.needle in prompt.messages[-1].content:
            raise RateLimited("quota")
        return self.inner.complete(prompt)


def test_skipped_policy(synthetic_corpus, synthetic_test, tmp_path):
    bad = synthetic_test[1]
    rep = run_eval(synthetic_test, synthetic_corpus, cfg(output_dir=str(tmp_path)), FailFor(bad.findings))
    assert rep.skipped == 1
    assert [r.status for r in rep.rows].count("skipped") == 1
    assert rep.mean_r1 == pytest.approx(sum(r.r1 for r in rep.completed) / (len(synthetic_test) - 1))
    text = (tmp_path / "report.txt").read_text()
    assert "skipped 1" in text
    assert (tmp_path / "traces" / f"{bad.id}.json").exists()


def test_output_layout(synthetic_corpus, synthetic_test, tmp_path):
    run_eval(synthetic_test, synthetic_corpus, cfg(output_dir=str(tmp_path)), echo())
    assert (tmp_path / "report.txt").exists() and (tmp_path / "report.csv").exists()
    for t in synthetic_test:
        assert (tmp_path / "traces" / f"{t.id}.json").exists()
        lines = (tmp_path / "prompts" / f"{t.id}.jsonl").read_text().splitlines()
        assert len(lines) == 2 * 15 + 2


def test_reproducible(synthetic_corpus, synthetic_test, tmp_path):
    for d in ("a", "b"):
        run_eval(synthetic_test, synthetic_corpus, cfg(output_dir=str(tmp_path / d), seed=7), echo())
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert filecmp.cmp(tmp_path / "a" / "report.csv", tmp_path / "b" / "report.csv", shallow=False)
    for name in cmp.subdirs["traces"].common_files:
        assert filecmp.cmp(tmp_path / "a" / "traces" / name, tmp_path / "b" / "traces" / name, shallow=False)
    assert not cmp.subdirs["traces"].left_only and not cmp.subdirs["traces"].right_only


def _golden_report():
    return EvalReport([
        ReportResult("A-1", 1.0, 1.0, 1.0, 0.003),
        ReportResult("B-22", 0.5, 0.0, 1 / 3, 0.01),
        ReportResult("C-3", status="skipped"),
    ])


def test_render_golden(fixtures_dir):
    text, csv_text = render_report(_golden_report())
    assert text == (fixtures_dir / "golden_report.txt").read_text()
    assert csv_text == (fixtures_dir / "golden_report.csv").read_text()


def test_render_empty_and_single():
    text, csv_text = render_report(EvalReport())
    assert text.splitlines() == ["id  R-1  R-2  R-L  Cost  Status"]
    assert csv_text == "id,R-1,R-2,R-L,Cost,Status\n"
    text, csv_text = render_report(EvalReport([ReportResult("Z", 0.25, 0.125, 0.5, 0.0)]))
    assert len(csv_text.splitlines()) == 2
    assert csv_text.splitlines()[1] == "Z,25.00,12.50,50.00,0.0000,ok"


def test_single_cell_sweep_equals_run_eval(synthetic_corpus, synthetic_test):
    base = cfg()
    rows = run_sweep({"threshold": [0.7]}, base, lambda c: run_eval(synthetic_test, synthetic_corpus, c, echo()))
    assert len(rows) == 1
    direct = run_eval(synthetic_test, synthetic_corpus, base, echo())
    assert render_report(rows[0].report) == render_report(direct)


def test_n_similar_axis(synthetic_corpus, synthetic_test):
    index = build_index(synthetic_corpus)
    rows = run_sweep({"n_similar": DEFAULT_GRID["n_similar"]}, cfg(),
                     lambda c: run_eval(synthetic_test, synthetic_corpus, c, echo(), index))
    counts = [r.report.config["optimizer"]["n_similar"] for r in rows]
    assert counts == [5, 10, 15, 18] and counts == sorted(counts)
    assert [len(r.report.rows[0].trace.exemplar_ids) for r in rows] == counts
    text, csv_text = render_sweep(rows)
    assert len(text.splitlines()) == len(csv_text.splitlines()) == 5


def test_threshold_extremes(synthetic_corpus, synthetic_test):
    def run(c):
        return run_eval(synthetic_test, synthetic_corpus, c, MockBackend(MockScript.scripted(["no acute effusion"])))

    rows = run_sweep({"threshold": [0.0, 1.0]}, cfg(), run)
    lo, hi = (r.report for r in rows)
    lo_cls = [rec.classification.value for row in lo.rows for rec in row.trace.records]
    hi_cls = [rec.classification.value for row in hi.rows for rec in row.trace.records]
    scores = [rec.score for row in lo.rows for rec in row.trace.records]
    assert all(s > 0 for s in scores)
    assert set(lo_cls) == {"good"} and set(hi_cls) == {"bad"}


def test_cartesian_sweep_size(synthetic_corpus, synthetic_test):
    grid = {"threshold": [0.5, 0.7], "max_iterations": [1, 2, 3]}
    calls = []
    rows = run_sweep(grid, cfg(), lambda c: calls.append(c) or EvalReport(config=c.echo()), cartesian=True)
    assert len(rows) == 6
    assert {(c.optimizer.threshold, c.optimizer.max_iterations) for c in calls} == {(t, i) for t in (0.5, 0.7) for i in (1, 2, 3)}
    assert len(run_sweep(grid, cfg(), lambda c: EvalReport(config=c.echo()))) == 5
    with pytest.raises(ValueError):
        run_sweep({}, cfg(), lambda c: None)


def test_capacity_axis_applies():
    seen = []
    run_sweep({"capacities": DEFAULT_GRID["capacities"]}, cfg(), lambda c: seen.append(c) or EvalReport(config=c.echo()))
    assert [(c.optimizer.good_capacity, c.optimizer.bad_capacity) for c in seen] == DEFAULT_GRID["capacities"]


def test_runconfig_validation():
    with pytest.raises(ValueError):
        RunConfig(prompt_mode="random")
    c = RunConfig(optimizer=OptimizerConfig(n_similar=5))
    assert c.search.n_similar == 5
    assert "output_dir" not in replace(c, output_dir="x").echo()
