from __future__ import annotations

from fractions import Fraction

import pytest

from fa_forge.errors import FaForgeError
from fa_forge.metrics import (
    CorpusReport,
    OpCounts,
    ReportRow,
    count_ops,
    load_corpus,
    parse_report_csv,
    render_report,
    run_corpus,
)
from fa_forge.optimizer import disjoint_union, optimize
from fa_forge.planner.backends import IrBackend
from fa_forge.planner.ir import ir_from_dict
from fa_forge.planner.templates import plan_all


def test_salary_gap_counts(gap_dags, gap_ir, uni_schema, uni_pool):
    assert count_ops(disjoint_union(gap_dags), uni_pool) == OpCounts(Fraction(3, 2), 3, 3, 6, 6, 3)
    assert count_ops(optimize(gap_dags, gap_ir, uni_schema)[0], uni_pool) == OpCounts(1, 2, 2, 6, 6, 6)


def test_unit_count_chain(uni_schema, uni_pool):
    ir = ir_from_dict({"subqueries": [{"intent": "Count"}]}, uni_schema)
    [dag] = plan_all(ir, None, uni_schema)
    assert count_ops(dag, uni_pool) == OpCounts(1, 1, 1, 1, 1, 0)


@pytest.fixture(scope="module")
def reports(corpus, adult_schema, small_adult_pool):
    cfg = {"run_engine": True, "seed": 0}
    on = run_corpus(corpus, IrBackend(), True, small_adult_pool, cfg, schema=adult_schema)
    off = run_corpus(corpus, IrBackend(), False, small_adult_pool, cfg, schema=adult_schema)
    empty = run_corpus(corpus, IrBackend(), True, small_adult_pool, {**cfg, "templates": {}},
                       schema=adult_schema, method="w/o preliminary DAG knowledge")
    return on, off, empty


def test_corpus_completes_and_is_correct(reports):
    on, _, _ = reports
    assert on.rows[0].ratio == 1.0
    outcomes = next(iter(on.outcomes.values()))
    assert len(outcomes) == 20 and all(o.correct for o in outcomes)


def test_optimizer_trend(reports):
    on, off, _ = reports
    a, b = on.rows[0].means, off.rows[0].means
    assert all(x < y for x, y in zip(a.heavy, b.heavy))
    assert a.cal > b.cal


def test_no_template_knowledge_gives_zero(reports):
    _, _, empty = reports
    row = empty.rows[0]
    assert row.ratio == 0 and row.means is None


def test_low_ratio_renders_dashes():
    rep = CorpusReport("toy", 10, [ReportRow("zero-shot", 0.1, None)])
    line = render_report(rep).splitlines()[-1]
    assert line == "| zero-shot | 10% | - | - | - | - | - | - |"


def test_ablation_markdown_has_three_rows(reports):
    from fa_forge.metrics import combine_reports

    text = render_report(combine_reports(list(reports)))
    assert len([ln for ln in text.splitlines() if ln.startswith("| ") and "Method" not in ln]) == 3


def test_csv_roundtrip(reports):
    from fa_forge.metrics import combine_reports

    rep = combine_reports(list(reports))
    assert parse_report_csv(render_report(rep, "csv")) == rep


def test_bad_inputs():
    with pytest.raises(FaForgeError):
        render_report(CorpusReport("x", 0, []), "html")
    with pytest.raises(FaForgeError):
        load_corpus('{"not": "a list"}')
    with pytest.raises(FaForgeError) as exc:
        run_corpus([], IrBackend(), True, None)
    assert exc.value.code == "empty-input"
