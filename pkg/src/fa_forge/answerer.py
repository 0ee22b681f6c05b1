"""Turn execution results into a short prose answer.

The default answerer is template based so the whole pipeline runs offline.
Numbers are printed exactly as the engine released them (``repr`` of the
float); percentages also get a ``%`` rendering next to the raw fraction.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Mapping

from . import naming
from .dag import ONE
from .planner.ir import Intent, QueryIR, SubQuery
from .planner.templates import primary_answer
from .predicates import Predicate

_STAT_WORDS = {
    Intent.COUNT: "number of individuals",
    Intent.SUM: "total {feature}",
    Intent.MEAN: "average {feature}",
    Intent.PERCENTAGE: "percentage of individuals with {condition}",
    Intent.RATIO: "ratio of total {feature} to total {denominator}",
}


def format_value(v) -> str:
    return "unavailable" if v is None else repr(float(v))


def _stat_phrase(sub: SubQuery, stat: Intent) -> str:
    cond = sub.condition.text() if sub.condition is not None else ""
    return _STAT_WORDS[stat].format(feature=sub.feature, denominator=sub.denominator, condition=cond)


def _scope(pred: Predicate) -> str:
    return "" if pred.is_true else f" where {pred.text()}"


def _value_text(stat: Intent, v) -> str:
    if stat is Intent.PERCENTAGE and v is not None:
        return f"{format_value(v)} ({float(v) * 100:.2f}%)"
    return format_value(v)


def _stat_name(stat: Intent, sub: SubQuery, pred: Predicate) -> str:
    if stat is Intent.COUNT:
        return naming.sum_id(ONE, pred)
    if stat is Intent.SUM:
        return naming.sum_id(sub.feature, pred)
    if stat is Intent.MEAN:
        return naming.mean_id(sub.feature, pred)
    if stat is Intent.PERCENTAGE:
        return naming.pct_id(sub.condition, pred)
    return naming.ratio_id(sub.feature, sub.denominator, pred)


def describe_subquery(sub: SubQuery) -> str:
    if sub.intent is Intent.COMPARISON:
        a, b = sub.compare
        return f"difference in {_stat_phrase(sub, sub.inner)} between {a.text()} and {b.text()}{_scope(sub.filter)}"
    if sub.intent is Intent.GROUP_BY:
        return f"{_stat_phrase(sub, sub.inner)} by {sub.group_by}{_scope(sub.filter)}"
    return f"{_stat_phrase(sub, sub.intent)}{_scope(sub.filter)}"


def compose_answer(ir: QueryIR, answers: Mapping[str, Fraction | float | None]) -> str:
    """One sentence per sub-query and per combined result.

    ``answers`` is keyed by answer name (union suffixes already stripped).
    """
    parts = []
    for sub in ir.subqueries:
        desc = describe_subquery(sub)
        if sub.intent is Intent.GROUP_BY:
            groups = "; ".join(
                f"{g.only(sub.group_by)[0].text() if g.only(sub.group_by) else g.text()}: "
                f"{_value_text(sub.inner, answers.get(_stat_name(sub.inner, sub, g)))}"
                for g in sub.groups)
            parts.append(f"The {desc} is {groups}")
        else:
            stat = Intent.COMPARISON if sub.intent is Intent.COMPARISON else sub.intent
            parts.append(f"The {desc} is {_value_text(stat, answers.get(primary_answer(sub)))}")
    for c in ir.final_combine:
        a, b = ir.subqueries[c.left - 1], ir.subqueries[c.right - 1]
        word = "difference" if c.op == "diff" else "ratio"
        v = answers.get(naming.combine_id(c.op, c.left, c.right))
        parts.append(f"The {word} between the {describe_subquery(a)} and the {describe_subquery(b)} "
                     f"is {format_value(v)}")
    return ". ".join(parts) + "."


def compose_with_llm(ir: QueryIR, answers: Mapping[str, object], config, complete=None) -> str:
    """LLM phrasing; falls back to the template when a number is not copied verbatim."""
    from .planner.llm import llm_complete, load_prompt, render_prompt

    complete = complete or llm_complete
    results = json.dumps({k: format_value(v) for k, v in answers.items()}, indent=1, sort_keys=True)
    text = complete(render_prompt(load_prompt("answerer"), query=ir.text, results=results), config)
    if all(format_value(v) in text for v in answers.values()):
        return text.strip()
    return compose_answer(ir, answers)
