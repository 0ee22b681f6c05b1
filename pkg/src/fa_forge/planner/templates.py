"""DAG template repository and the fine-grained planner.

Each statistic reduces to encrypted sums over one Access node per filter
group: counts are sums of the ``"1"`` indicator slot, means divide a value sum
by a count, percentages are means of a condition indicator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .. import naming
from ..calc import references
from ..dag import ONE, DpParams, FaDag, Node, OpKind, indicator_slot, parse_slot, rebuild
from ..errors import PlanError
from ..predicates import Predicate
from ..schema import Schema
from .ir import COMBINE_OPS, Intent, QueryIR, SubQuery

DEFAULT_EPSILON = 1.0


def slot_sensitivity(slot: str, schema: Schema | None) -> float:
    kind, arg = parse_slot(slot)
    if kind != "feature":
        return 1.0
    if schema is None or arg not in schema:
        raise PlanError(f"no sensitivity bound known for feature {arg!r}", "schema-mismatch")
    return float(schema[arg].max_abs())


def chain_nodes(access: str, pred: Predicate, slot: str, dp: DpParams) -> tuple[list[Node], list[tuple[str, str]]]:
    """Encrypt -> Aggregate -> NoiseAdd -> Decrypt for one slot of ``access``."""
    ids = naming.chain_ids(slot, pred)
    nodes = [
        Node(ids["Encrypt"], OpKind.ENCRYPT, feature=slot),
        Node(ids["Aggregate"], OpKind.AGGREGATE, feature=slot, agg_fn="sum"),
        Node(ids["NoiseAdd"], OpKind.NOISE_ADD, feature=slot, dp_params=dp),
        Node(ids["Decrypt"], OpKind.DECRYPT, feature=slot),
    ]
    path = [access] + [n.id for n in nodes]
    return nodes, list(zip(path, path[1:]))


class PlanBuilder:
    """Collects Access slots and Calculate nodes, then emits one FaDag."""

    def __init__(self, schema: Schema | None, epsilon: float = DEFAULT_EPSILON):
        self.schema = schema
        self.epsilon = epsilon
        self.slots: dict[Predicate, list[str]] = {}
        self.calcs: dict[str, str] = {}
        self.answers: list[str] = []

    def total(self, pred: Predicate, slot: str) -> str:
        """Id of the decrypted noisy sum of ``slot`` over clients matching ``pred``."""
        slots = self.slots.setdefault(pred, [])
        if slot not in slots:
            slots.append(slot)
        return naming.sum_id(slot, pred)

    def calculate(self, node_id: str, expr: str) -> str:
        self.calcs[node_id] = expr
        return node_id

    def answer(self, node_id: str) -> None:
        if node_id not in self.answers:
            self.answers.append(node_id)

    def build(self) -> FaDag:
        nodes: list[Node] = []
        edges: list[tuple[str, str]] = []
        for pred, slots in self.slots.items():
            acc = naming.access_id(pred)
            nodes.append(Node(acc, OpKind.ACCESS, predicate=pred, outputs=tuple(sorted(slots))))
            for slot in sorted(slots):
                dp = DpParams(self.epsilon, slot_sensitivity(slot, self.schema))
                cn, ce = chain_nodes(acc, pred, slot, dp)
                nodes += cn
                edges += ce
        for cid, expr in self.calcs.items():
            nodes.append(Node(cid, OpKind.CALCULATE, calc_expr=expr))
            edges += [(ref, cid) for ref in references(expr)]
        return rebuild(nodes, edges, self.answers)


# statistics: (builder, sub, group predicate) -> (answer id, required final op)
StatFn = Callable[[PlanBuilder, SubQuery, Predicate], tuple[str, "str | None"]]


def _count(b: PlanBuilder, sub: SubQuery, pred: Predicate):
    return b.total(pred, ONE), None


def _sum(b: PlanBuilder, sub: SubQuery, pred: Predicate):
    return b.total(pred, sub.feature), None


def _mean(b: PlanBuilder, sub: SubQuery, pred: Predicate):
    s, n = b.total(pred, sub.feature), b.total(pred, ONE)
    return b.calculate(naming.mean_id(sub.feature, pred), f"{s} / {n}"), "/"


def _percentage(b: PlanBuilder, sub: SubQuery, pred: Predicate):
    s, n = b.total(pred, indicator_slot(sub.condition)), b.total(pred, ONE)
    return b.calculate(naming.pct_id(sub.condition, pred), f"{s} / {n}"), "/"


def _ratio(b: PlanBuilder, sub: SubQuery, pred: Predicate):
    s, d = b.total(pred, sub.feature), b.total(pred, sub.denominator)
    return b.calculate(naming.ratio_id(sub.feature, sub.denominator, pred), f"{s} / {d}"), "/"


@dataclass(frozen=True)
class DagTemplate:
    """A DAG skeleton for one intent.

    ``skeleton`` is the human/LLM-readable shape; ``arity`` is the number of
    Access output slots per filter group.
    """

    intent: Intent
    skeleton: str
    arity: int
    stat: StatFn | None = None

    def describe(self) -> str:
        return f"{self.intent.value} (outputs per Access: {self.arity}): {self.skeleton}"


_CHAIN = "Encrypt -> Aggregate(sum) -> NoiseAdd(epsilon, sensitivity) -> Decrypt"

DEFAULT_TEMPLATES: dict[Intent, DagTemplate] = {
    Intent.COUNT: DagTemplate(Intent.COUNT, f"Access(filter; outputs=[1]) -> {_CHAIN}; answer = Decrypt", 1, _count),
    Intent.SUM: DagTemplate(Intent.SUM, f"Access(filter; outputs=[feature]) -> {_CHAIN}; answer = Decrypt", 1, _sum),
    Intent.MEAN: DagTemplate(
        Intent.MEAN,
        f"Access(filter; outputs=[1, feature]) -> 2 x [{_CHAIN}] -> Calculate(sum_feature / sum_one)",
        2, _mean),
    Intent.PERCENTAGE: DagTemplate(
        Intent.PERCENTAGE,
        f"Access(filter; outputs=[1, [condition]]) -> 2 x [{_CHAIN}] -> Calculate(sum_indicator / sum_one)",
        2, _percentage),
    Intent.RATIO: DagTemplate(
        Intent.RATIO,
        f"Access(filter; outputs=[feature, denominator]) -> 2 x [{_CHAIN}] -> Calculate(sum_feature / sum_denominator)",
        2, _ratio),
    Intent.COMPARISON: DagTemplate(
        Intent.COMPARISON,
        "inner statistic template instantiated for filter AND group A and for filter AND group B, "
        "then Calculate(stat_A - stat_B)",
        0),
    Intent.GROUP_BY: DagTemplate(
        Intent.GROUP_BY,
        "inner statistic template instantiated once per group value (filter AND group_by = value), "
        "k parallel chains, one answer per group",
        0),
}


def default_templates() -> dict[Intent, DagTemplate]:
    return dict(DEFAULT_TEMPLATES)


def render_templates(templates: Mapping[Intent, DagTemplate]) -> str:
    if not templates:
        return "(no templates available)"
    return "\n".join(f"- {t.describe()}" for t in templates.values())


def _stat_fn(templates: Mapping[Intent, DagTemplate], intent: Intent) -> StatFn:
    tpl = templates.get(intent)
    if tpl is None or tpl.stat is None:
        raise PlanError(f"no DAG template for intent {intent.value}", "no-template")
    return tpl.stat


def instantiate(b: PlanBuilder, sub: SubQuery, templates: Mapping[Intent, DagTemplate]) -> list[tuple[str, str | None]]:
    """Add ``sub`` to the builder; returns (answer id, required op) pairs."""
    if sub.intent not in templates:
        raise PlanError(f"no DAG template for intent {sub.intent.value}", "no-template")
    if sub.intent is Intent.COMPARISON:
        stat = _stat_fn(templates, sub.inner)
        a, op_a = stat(b, sub, sub.groups[0])
        c, op_c = stat(b, sub, sub.groups[1])
        diff = b.calculate(naming.cmp_id(a, sub.groups[1]), f"{a} - {c}")
        wants = [(a, op_a), (c, op_c), (diff, "-")]
    elif sub.intent is Intent.GROUP_BY:
        stat = _stat_fn(templates, sub.inner)
        wants = [stat(b, sub, g) for g in sub.groups]
    else:
        wants = [_stat_fn(templates, sub.intent)(b, sub, sub.filter)]
    for name, _ in wants:
        b.answer(name)
    return wants


def _check_schema(sub: SubQuery, schema: Schema | None) -> None:
    if schema is None:
        return
    preds = [sub.filter] + list(sub.groups or ()) + ([sub.condition] if sub.condition else [])
    for p in preds:
        p.validate(schema)
    for f in (sub.feature, sub.denominator):
        if f is not None and (f not in schema or not schema[f].is_numeric):
            raise PlanError(f"feature {f!r} is not a numeric feature of the schema", "schema-mismatch")


def fine_plan(sub: SubQuery, templates: Mapping[Intent, DagTemplate] | None = None,
              schema: Schema | None = None, epsilon: float = DEFAULT_EPSILON) -> FaDag:
    """Preliminary DAG for one sub-query."""
    templates = DEFAULT_TEMPLATES if templates is None else templates
    _check_schema(sub, schema)
    b = PlanBuilder(schema, epsilon)
    instantiate(b, sub, templates)
    return b.build()


def primary_answer(sub: SubQuery) -> str:
    """The single answer a ``final_combine`` refers to."""
    if sub.intent is Intent.GROUP_BY:
        raise PlanError("GroupBy has no single answer", "unresolved-reference")
    wants = instantiate(PlanBuilder(None), sub, DEFAULT_TEMPLATES)
    return wants[-1][0]


def expected_answers(ir: QueryIR) -> list[tuple[str, list[tuple[str, str | None]]]]:
    """Per sub-intent label, the answer ids a complete plan must release."""
    out = []
    for i, sub in enumerate(ir.subqueries, 1):
        wants = instantiate(PlanBuilder(None), sub, DEFAULT_TEMPLATES)
        out.append((f"subquery {i} ({sub.intent.value})", wants))
    for c in ir.final_combine:
        out.append((f"final_combine {c}", [(naming.combine_id(c.op, c.left, c.right), COMBINE_OPS[c.op])]))
    return out


def answer_ids(ir: QueryIR) -> list[str]:
    seen: list[str] = []
    for _, wants in expected_answers(ir):
        for name, _ in wants:
            if name not in seen:
                seen.append(name)
    return seen


def plan_all(ir: QueryIR, templates: Mapping[Intent, DagTemplate] | None = None,
             schema: Schema | None = None, epsilon: float = DEFAULT_EPSILON) -> list[FaDag]:
    return [fine_plan(s, templates, schema, epsilon) for s in ir.subqueries]
