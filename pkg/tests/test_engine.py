from __future__ import annotations

import random
import statistics
from fractions import Fraction

import pytest

from fa_forge.engine import eval_calc, execute, load_clients, make_pool, plaintext_oracle, sample_laplace
from fa_forge.errors import CalcError, DataError, ExecutionError
from fa_forge.optimizer import optimize
from fa_forge.planner.ir import ir_from_dict
from fa_forge.planner.templates import plan_all
from fa_forge.synth import synth_rows, write_csv

HEADER = "age,name,role,salary\n"


def _plan(ir, schema):
    return optimize(plan_all(ir, None, schema), ir, schema)[0]


def _uni_rows(*salaries):
    return [{"age": 30, "name": f"c{i}", "role": "other", "salary": s} for i, s in enumerate(salaries)]


def test_three_row_csv(tmp_path, uni_schema):
    p = tmp_path / "three.csv"
    p.write_text(HEADER + "30,A,phd,100\n40,B,other,200.5\n50,C,professor,300\n")
    assert load_clients(p, uni_schema).n == 3


def test_census_sized_file(tmp_path, adult_schema):
    p = tmp_path / "adult.csv"
    write_csv(p, synth_rows(32563, 1, adult_schema))
    assert load_clients(p, adult_schema).n == 32563


def test_non_numeric_salary_reports_row(tmp_path, uni_schema):
    p = tmp_path / "bad.csv"
    p.write_text(HEADER + "30,A,phd,100\n40,B,other,lots\n")
    with pytest.raises(DataError) as exc:
        load_clients(p, uni_schema)
    assert exc.value.code == "type-coercion" and exc.value.row == 2


def test_missing_column_and_bounds(tmp_path, uni_schema):
    p = tmp_path / "cols.csv"
    p.write_text("age,name,salary\n30,A,1\n")
    with pytest.raises(DataError) as exc:
        load_clients(p, uni_schema)
    assert exc.value.code == "missing-column"
    with pytest.raises(DataError) as exc:
        make_pool([{"age": 300, "name": "x", "role": "phd", "salary": 1}], uni_schema)
    assert exc.value.code == "out-of-bounds"


def test_laplace_is_seeded():
    assert sample_laplace(1.0, random.Random(8)) == sample_laplace(1.0, random.Random(8))
    with pytest.raises(ExecutionError):
        sample_laplace(0, random.Random(0))


def test_laplace_moments():
    rng = random.Random(0)
    draws = [sample_laplace(1.0, rng) for _ in range(1_000_000)]
    assert abs(statistics.fmean(draws)) <= 0.01
    assert abs(statistics.pvariance(draws) - 2) <= 0.02


def test_count_phd_noise_off(uni_schema, uni_pool):
    ir = ir_from_dict({"subqueries": [{"intent": "Count", "filter": [["role", "=", "phd"]]}]}, uni_schema)
    assert execute(_plan(ir, uni_schema), uni_pool).by_base()["sum_one__role_eq_phd"] == 2


def test_mean_of_three(uni_schema):
    pool = make_pool(_uni_rows(10, 20, 30), uni_schema)
    ir = ir_from_dict({"subqueries": [{"intent": "Mean", "feature": "salary"}]}, uni_schema)
    assert execute(_plan(ir, uni_schema), pool).by_base()["mean_salary__all"] == 20


def test_gap_with_paillier_matches_oracle(gap_dags, gap_ir, uni_schema, uni_pool):
    from fa_forge.crypto import keygen

    dag = optimize(gap_dags, gap_ir, uni_schema)[0]
    res = execute(dag, uni_pool, keygen(256, random.Random(0)), rng=4)
    want = plaintext_oracle(gap_ir, uni_pool)
    assert res.by_base()["mean_salary__all"] == want["mean_salary__all"] == Fraction("79525.149")
    assert res.by_base()["combine_diff_2_3"] == want["combine_diff_2_3"] == Fraction("107416.5")


def test_audit_holds_sizes_only(gap_dags, gap_ir, uni_schema, uni_pool):
    res = execute(optimize(gap_dags, gap_ir, uni_schema)[0], uni_pool, noise_enabled=True, rng=1)
    for rec in res.audit:
        assert isinstance(rec.inputs, int) and isinstance(rec.outputs, int)
    assert res.epsilon_total == 6.0
    assert res.to_dict()["noise"] is True


def test_empty_group_and_percentage(adult_schema, uni_schema):
    pool = make_pool(_uni_rows(1, 2), uni_schema)
    ir = ir_from_dict({"subqueries": [{"intent": "Mean", "feature": "salary",
                                       "filter": [["role", "=", "phd"]]}]}, uni_schema)
    with pytest.raises(ExecutionError) as exc:
        plaintext_oracle(ir, pool)
    assert exc.value.code == "empty-group"
    rows = synth_rows(10, 0, adult_schema)
    for i, r in enumerate(rows):
        r["hours_per_week"] = 50 if i < 4 else 30
    pct = ir_from_dict({"subqueries": [{"intent": "Percentage", "condition": [["hours_per_week", ">", 40]]}]},
                       adult_schema)
    assert list(plaintext_oracle(pct, make_pool(rows, adult_schema)).values()) == [Fraction(2, 5)]


def test_corpus_noise_off_equals_oracle(corpus, adult_schema, small_adult_pool):
    from fa_forge.planner.backends import IrBackend

    for entry in corpus:
        ir, dags = IrBackend().plan(entry, adult_schema)
        got = execute(optimize(dags, ir, adult_schema)[0], small_adult_pool, rng=0).by_base()
        for name, value in plaintext_oracle(ir, small_adult_pool).items():
            assert got[name] == value, (entry.id, name)


def test_eval_calc_examples():
    b = {"S_p": 60, "S_d": 40, "S_o": 100, "N_p": 3, "N_d": 2, "N_o": 5}
    assert eval_calc("(S_p + S_d + S_o) / (N_p + N_d + N_o)", b) == 20
    assert eval_calc("a - a", {"a": Fraction(7, 3)}) == 0
    with pytest.raises(CalcError) as exc:
        eval_calc("x / 0", {"x": 1})
    assert exc.value.code == "division-by-zero"


def test_lenient_mode_records_calc_errors(uni_schema):
    pool = make_pool(_uni_rows(1, 2), uni_schema)
    ir = ir_from_dict({"subqueries": [{"intent": "Mean", "feature": "salary",
                                       "filter": [["role", "=", "phd"]]}]}, uni_schema)
    dag = _plan(ir, uni_schema)
    with pytest.raises(ExecutionError):
        execute(dag, pool)
    res = execute(dag, pool, strict=False)
    assert res.answers["mean_salary__role_eq_phd"] is None
    assert res.errors == {"mean_salary__role_eq_phd": "division-by-zero"}
