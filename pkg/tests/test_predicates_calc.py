from __future__ import annotations

from fractions import Fraction

import pytest

from fa_forge import calc, naming
from fa_forge.answerer import compose_answer, format_value
from fa_forge.errors import CalcError, PlanError
from fa_forge.predicates import Predicate, parse_predicate, predicate_from_json
from fa_forge.synth import synth_rows

ROLES = ("professor", "phd", "other")


def test_atoms_are_normalized():
    a = Predicate.of(("role", "=", "phd"), ("age", ">", 30))
    b = Predicate.of(("age", ">", 30), ("role", "=", "phd"), ("role", "=", "phd"))
    assert a == b and a.text() == b.text()


def test_value_sets():
    assert Predicate.true().value_set("role", ROLES) == frozenset(ROLES)
    assert Predicate.of(("role", "!=", "phd")).value_set("role", ROLES) == {"professor", "other"}
    assert Predicate.of(("role", "in", ["phd", "other"]), ("role", "not in", ["other"])).value_set(
        "role", ROLES) == {"phd"}


def test_text_roundtrip():
    p = Predicate.of(("role", "in", ["phd", "other"]), ("age", ">=", 40))
    assert parse_predicate(p.text()) == p
    assert predicate_from_json(p.to_json()) == p


def test_schema_checks(uni_schema):
    with pytest.raises(PlanError):
        Predicate.of(("role", ">", "phd")).validate(uni_schema)
    with pytest.raises(PlanError):
        Predicate.of(("role", "=", "dean")).validate(uni_schema)
    with pytest.raises(PlanError):
        Predicate.of(("height", "=", 1)).validate(uni_schema)


def test_calc_references_and_rename():
    expr = "(a + b) / c - a"
    assert calc.references(expr) == ["a", "b", "c"]
    assert calc.references(calc.rename(expr, {"a": "x"})) == ["x", "b", "c"]
    assert calc.top_op(expr) == "-"
    assert calc.eval_calc("2 × 3 ÷ 4 − 1", {}) == Fraction(1, 2)
    with pytest.raises(CalcError):
        calc.parse("a +")
    with pytest.raises(CalcError):
        calc.eval_calc("a + 1", {})


def test_deterministic_names():
    prof = Predicate.of(("role", "=", "professor"))
    assert naming.mean_id("salary", prof) == "mean_salary__role_eq_professor"
    assert naming.answer_base(naming.union_suffix("mean_salary__all", 2)) == "mean_salary__all"


def test_answer_prose(gap_ir):
    answers = {"mean_salary__all": Fraction("79525.149"), "mean_salary__role_eq_professor": Fraction(1),
               "mean_salary__role_eq_phd": None, "combine_diff_2_3": Fraction("107416.5")}
    text = compose_answer(gap_ir, answers)
    assert text.startswith("The average salary is 79525.149.")
    assert "unavailable" in text and text.endswith("is 107416.5.")
    assert format_value(Fraction(1, 3)) == repr(1 / 3)


def test_synthetic_rows_cover_every_category(adult_schema):
    rows = synth_rows(60, 0, adult_schema)
    for f in adult_schema:
        spec = adult_schema[f]
        if spec.enumerable:
            assert {r[f] for r in rows} == set(spec.values)
    assert synth_rows(5, 3, adult_schema) == synth_rows(5, 3, adult_schema)
