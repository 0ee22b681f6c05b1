"""Structured query IR: a query split into single-intent sub-queries.

JSON form::

    {"text": "average salary ... and the difference between ...",
     "subqueries": [
        {"intent": "Mean", "feature": "salary", "filter": true},
        {"intent": "Mean", "feature": "salary", "filter": [["role", "=", "professor"]]},
        {"intent": "Mean", "feature": "salary", "filter": "role = phd"}],
     "final_combine": [{"op": "diff", "args": [2, 3]}]}

Sub-query indices in ``final_combine`` are 1-based. Extra per-intent keys:
``condition`` (Percentage), ``denominator`` (Ratio), ``compare`` (Comparison,
exactly two predicates), ``stat`` (inner intent of Comparison/GroupBy),
``group_by`` and optional numeric ``buckets`` (GroupBy).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from ..errors import DecodeError, PlanError, SchemaViolation
from ..predicates import Atom, Predicate, predicate_from_json
from ..schema import Schema


class Intent(str, Enum):
    COUNT = "Count"
    SUM = "Sum"
    MEAN = "Mean"
    PERCENTAGE = "Percentage"
    RATIO = "Ratio"
    COMPARISON = "Comparison"
    GROUP_BY = "GroupBy"


STAT_INTENTS = (Intent.COUNT, Intent.SUM, Intent.MEAN, Intent.PERCENTAGE, Intent.RATIO)
COMBINE_OPS = {"diff": "-", "ratio": "/"}
_COMBINE_TEXT = re.compile(r"^\s*(diff|ratio)\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*$")


@dataclass(frozen=True)
class SubQuery:
    intent: Intent
    feature: str | None = None
    filter: Predicate = field(default_factory=Predicate.true)
    group_by: str | None = None
    compare: tuple[Predicate, Predicate] | None = None
    condition: Predicate | None = None
    denominator: str | None = None
    stat: Intent | None = None
    buckets: tuple[float, ...] | None = None
    groups: tuple[Predicate, ...] | None = None

    @property
    def inner(self) -> Intent:
        """The statistic actually computed per chain group."""
        return self.stat if self.intent in (Intent.COMPARISON, Intent.GROUP_BY) else self.intent

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"intent": self.intent.value}
        if self.feature is not None:
            out["feature"] = self.feature
        out["filter"] = True if self.filter.is_true else self.filter.to_json()
        if self.condition is not None:
            out["condition"] = self.condition.to_json()
        if self.denominator is not None:
            out["denominator"] = self.denominator
        if self.compare is not None:
            out["compare"] = [p.to_json() for p in self.compare]
        if self.stat is not None:
            out["stat"] = self.stat.value
        if self.group_by is not None:
            out["group_by"] = self.group_by
        if self.buckets is not None:
            out["buckets"] = list(self.buckets)
        return out


@dataclass(frozen=True)
class Combine:
    op: str
    left: int
    right: int

    def to_dict(self) -> dict[str, Any]:
        return {"op": self.op, "args": [self.left, self.right]}

    def __str__(self) -> str:
        return f"{self.op}({self.left},{self.right})"


@dataclass(frozen=True)
class QueryIR:
    text: str
    subqueries: tuple[SubQuery, ...]
    final_combine: tuple[Combine, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"text": self.text, "subqueries": [s.to_dict() for s in self.subqueries]}
        if self.final_combine:
            out["final_combine"] = [c.to_dict() for c in self.final_combine]
        return out

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _intent(value: Any, where: str) -> Intent:
    try:
        return Intent(value)
    except ValueError:
        raise PlanError(f"{where}: unknown intent {value!r}", "unknown-intent") from None


def _numeric_feature(name: Any, schema: Schema | None, where: str) -> str:
    if not isinstance(name, str):
        raise PlanError(f"{where}: feature name required", "schema-mismatch")
    if schema is not None:
        if name not in schema:
            raise PlanError(f"{where}: unknown feature {name!r}", "unknown-feature")
        if not schema[name].is_numeric:
            raise PlanError(f"{where}: feature {name!r} is not numeric", "schema-mismatch")
    return name


def _default_stat(feature, condition, denominator) -> Intent:
    if denominator is not None:
        return Intent.RATIO
    if feature is not None:
        return Intent.MEAN
    if condition is not None:
        return Intent.PERCENTAGE
    return Intent.COUNT


def expand_groups(group_by: str, base: Predicate, schema: Schema,
                  buckets: tuple[float, ...] | None = None) -> tuple[Predicate, ...]:
    """One predicate per group: enumerated categorical values or numeric buckets."""
    if group_by not in schema:
        raise PlanError(f"unknown group_by feature {group_by!r}", "unknown-feature")
    spec = schema[group_by]
    if spec.enumerable:
        if buckets is not None:
            raise PlanError(f"buckets given for categorical feature {group_by!r}", "schema-mismatch")
        return tuple(base & Predicate((Atom.make(group_by, "=", v),)) for v in spec.values)
    if spec.is_numeric:
        if not buckets:
            raise PlanError(f"numeric group_by {group_by!r} needs explicit buckets", "schema-mismatch")
        edges = sorted(buckets)
        out = [base & Predicate((Atom.make(group_by, "<", edges[0]),))]
        for lo, hi in zip(edges, edges[1:]):
            out.append(base & Predicate((Atom.make(group_by, ">=", lo), Atom.make(group_by, "<", hi))))
        out.append(base & Predicate((Atom.make(group_by, ">=", edges[-1]),)))
        return tuple(out)
    raise PlanError(f"group_by feature {group_by!r} has no enumerable values", "schema-mismatch")


def _check_stat_args(stat: Intent, feature, condition, denominator, schema, where):
    if stat is Intent.COUNT:
        if feature is not None or condition is not None or denominator is not None:
            raise PlanError(f"{where}: Count takes only a filter", "arity")
    elif stat in (Intent.SUM, Intent.MEAN):
        _numeric_feature(feature, schema, where)
        if condition is not None or denominator is not None:
            raise PlanError(f"{where}: {stat.value} takes a feature and a filter", "arity")
    elif stat is Intent.PERCENTAGE:
        if condition is None or condition.is_true:
            raise PlanError(f"{where}: Percentage needs a nontrivial condition", "arity")
        if feature is not None or denominator is not None:
            raise PlanError(f"{where}: Percentage takes a condition and a filter", "arity")
        if schema is not None:
            condition.validate(schema)
    elif stat is Intent.RATIO:
        _numeric_feature(feature, schema, where)
        _numeric_feature(denominator, schema, where)
        if condition is not None:
            raise PlanError(f"{where}: Ratio takes feature, denominator and filter", "arity")
    else:
        raise PlanError(f"{where}: {stat.value} cannot be used as an inner statistic", "unknown-intent")


def subquery_from_dict(raw: Any, schema: Schema | None = None, where: str = "subquery") -> SubQuery:
    if not isinstance(raw, Mapping):
        raise PlanError(f"{where}: sub-query must be an object", "parse-error")
    known = {"intent", "feature", "filter", "group_by", "compare", "condition", "denominator", "stat", "buckets"}
    extra = set(raw) - known
    if extra:
        raise PlanError(f"{where}: unknown key(s) {sorted(extra)}", "parse-error")
    intent = _intent(raw.get("intent"), where)
    try:
        filt = predicate_from_json(raw.get("filter", True), f"{where}.filter")
        condition = predicate_from_json(raw["condition"], f"{where}.condition") if "condition" in raw else None
        compare = raw.get("compare")
        if compare is not None:
            if not isinstance(compare, list):
                raise PlanError(f"{where}: compare must be a list of two predicates", "arity")
            compare = tuple(predicate_from_json(p, f"{where}.compare[{i}]") for i, p in enumerate(compare))
    except SchemaViolation as exc:
        raise PlanError(f"{where}: {exc}", "parse-error") from None
    if schema is not None:
        filt.validate(schema)
        for p in compare or ():
            p.validate(schema)
    feature = raw.get("feature")
    denominator = raw.get("denominator")
    group_by = raw.get("group_by")
    buckets = raw.get("buckets")
    if buckets is not None:
        if intent is not Intent.GROUP_BY or not isinstance(buckets, list) or not buckets:
            raise PlanError(f"{where}: buckets only apply to GroupBy and must be a nonempty list", "arity")
        buckets = tuple(buckets)
    stat = _intent(raw["stat"], where) if raw.get("stat") is not None else None

    if intent is Intent.COMPARISON:
        if compare is None or len(compare) != 2:
            n = 0 if compare is None else len(compare)
            raise PlanError(f"{where}: Comparison needs exactly two compare predicates, got {n}", "arity")
    elif compare is not None:
        raise PlanError(f"{where}: only Comparison carries compare predicates", "arity")
    if group_by is not None and intent is not Intent.GROUP_BY:
        raise PlanError(f"{where}: only GroupBy carries group_by", "arity")

    groups = None
    if intent in (Intent.COMPARISON, Intent.GROUP_BY):
        stat = stat or _default_stat(feature, condition, denominator)
        _check_stat_args(stat, feature, condition, denominator, schema, where)
        if intent is Intent.GROUP_BY:
            if not isinstance(group_by, str):
                raise PlanError(f"{where}: GroupBy needs group_by", "arity")
            if schema is None:
                raise PlanError(f"{where}: GroupBy expansion needs a schema", "schema-mismatch")
            groups = expand_groups(group_by, filt, schema, buckets)
        else:
            groups = tuple(filt & p for p in compare)
    else:
        if stat is not None:
            raise PlanError(f"{where}: stat only applies to Comparison/GroupBy", "arity")
        _check_stat_args(intent, feature, condition, denominator, schema, where)

    return SubQuery(intent, feature, filt, group_by, compare, condition, denominator, stat, buckets, groups)


def _combine_from(raw: Any, n: int, where: str) -> Combine:
    if isinstance(raw, str):
        m = _COMBINE_TEXT.match(raw)
        if not m:
            raise PlanError(f"{where}: cannot read combine expression {raw!r}", "parse-error")
        op, i, j = m.group(1), int(m.group(2)), int(m.group(3))
    elif isinstance(raw, Mapping):
        op, args = raw.get("op"), raw.get("args")
        if not isinstance(args, list) or len(args) != 2 or not all(isinstance(a, int) for a in args):
            raise PlanError(f"{where}: args must be two sub-query indices", "parse-error")
        i, j = args
    else:
        raise PlanError(f"{where}: combine must be an object or 'op(i,j)' text", "parse-error")
    if op not in COMBINE_OPS:
        raise PlanError(f"{where}: unknown combine op {op!r}", "parse-error")
    for k in (i, j):
        if not 1 <= k <= n:
            raise PlanError(f"{where}: sub-query index {k} out of range 1..{n}", "unresolved-reference")
    return Combine(op, i, j)


def ir_from_dict(raw: Any, schema: Schema | None = None) -> QueryIR:
    if not isinstance(raw, Mapping):
        raise PlanError("IR must be a JSON object", "parse-error")
    subs = raw.get("subqueries")
    if not isinstance(subs, list) or not subs:
        raise PlanError("IR needs a nonempty 'subqueries' list", "parse-error")
    parsed = tuple(subquery_from_dict(s, schema, f"subqueries[{i}]") for i, s in enumerate(subs))
    fc = raw.get("final_combine") or []
    if not isinstance(fc, list):
        fc = [fc]
    combines = tuple(_combine_from(c, len(parsed), f"final_combine[{i}]") for i, c in enumerate(fc))
    for c in combines:
        for k in (c.left, c.right):
            if parsed[k - 1].intent is Intent.GROUP_BY:
                raise PlanError(f"final_combine {c}: GroupBy has no single answer", "unresolved-reference")
    text = raw.get("text", "")
    if not isinstance(text, str):
        raise PlanError("IR text must be a string", "parse-error")
    return QueryIR(text, parsed, combines)


def parse_ir(text: str, schema: Schema | None = None) -> QueryIR:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid IR JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    return ir_from_dict(raw, schema)
