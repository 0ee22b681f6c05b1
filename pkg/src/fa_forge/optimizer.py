"""Deterministic DAG optimizer.

Three rewrite rules run in a fixed order over the union of the preliminary
DAGs:

``MergeCommon``
    hash-consing. Access nodes with the same normalized predicate are fused
    (their output slots united); every other node is unified with nodes of
    equal content *and* equal (already unified) predecessors.
``PartitionPredicates``
    a broad Access chain whose client set is the disjoint union of narrower
    Access chains (plus a computable remainder on one categorical feature) is
    replaced by those chains; its decrypted totals become sums.
``AugmentImplied``
    one Calculate per ``final_combine`` entry.

Every rule is split into a *decision* (what to rewrite) and an *application*
(how). The trace records decisions so :func:`replay` can re-apply them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from . import calc, naming
from .dag import FaDag, Node, OpKind, canonical_key, rebuild, topo_order
from .errors import PlanError
from .planner.ir import COMBINE_OPS, QueryIR
from .planner.templates import primary_answer
from .predicates import Atom, Predicate
from .schema import Schema
from .validator import check_structure

MERGE, PARTITION, AUGMENT = "MergeCommon", "PartitionPredicates", "AugmentImplied"
_MAX_PARTITIONS = 10_000


@dataclass(frozen=True)
class RewriteStep:
    rule: str
    before: tuple[str, ...]
    after: tuple[str, ...]
    detail: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {"rule": self.rule, "before": list(self.before), "after": list(self.after), "detail": self.detail}


@dataclass
class RewriteTrace:
    steps: list[RewriteStep] = field(default_factory=list)

    def rules(self) -> list[str]:
        return [s.rule for s in self.steps]

    def to_dict(self) -> dict[str, Any]:
        return {"steps": [s.to_dict() for s in self.steps]}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RewriteTrace":
        return cls([RewriteStep(s["rule"], tuple(s["before"]), tuple(s["after"]), s.get("detail", {}))
                    for s in raw.get("steps", [])])


def _canon(expr: str) -> str:
    return calc.render(calc.parse(expr))


def _check_inputs(dags: Sequence[FaDag]) -> None:
    for i, d in enumerate(dags, 1):
        bad = check_structure(d)
        if bad:
            raise PlanError(f"input DAG {i} is structurally invalid: {bad[0].message}", "invalid-input-dag")


# union --------------------------------------------------------------------

def disjoint_union(dags: Sequence[FaDag]) -> FaDag:
    """Side-by-side union; ids clashing with an earlier DAG get ``__q<k>``."""
    nodes: dict[str, Node] = {}
    edges: set[tuple[str, str]] = set()
    answers: list[str] = []
    for k, dag in enumerate(dags, 1):
        ren = {}
        for nid in sorted(dag.nodes):
            new = nid
            while new in nodes:
                new = naming.union_suffix(nid, k) if new == nid else new + "_"
            ren[nid] = new
        for nid, node in dag.nodes.items():
            expr = calc.rename(node.calc_expr, ren) if node.calc_expr is not None else None
            nodes[ren[nid]] = Node(ren[nid], node.kind, node.feature, node.predicate, node.outputs,
                                   node.agg_fn, node.dp_params, expr)
        edges |= {(ren[u], ren[v]) for u, v in dag.edges}
        answers += [ren[a] for a in dag.answer_nodes if ren[a] not in answers]
    return rebuild(nodes.values(), edges, answers)


# merge --------------------------------------------------------------------

def _depths(dag: FaDag) -> dict[str, int]:
    preds = dag.predecessor_map()
    depth: dict[str, int] = {}
    for nid in topo_order(dag):
        depth[nid] = 1 + max((depth[p] for p in preds[nid]), default=-1)
    return depth


def merge_mapping(dag: FaDag) -> dict[str, str]:
    """Map every id to the id of its merge class (smallest id wins)."""
    mapping: dict[str, str] = {}
    by_pred: dict[str, str] = {}
    for acc in dag.of_kind(OpKind.ACCESS):
        mapping[acc.id] = by_pred.setdefault(acc.predicate.text(), acc.id)
    preds = dag.predecessor_map()
    depth = _depths(dag)
    seen: dict[str, str] = {}
    for nid in sorted(dag.nodes, key=lambda n: (depth[n], n)):
        node = dag.nodes[nid]
        if node.kind is OpKind.ACCESS:
            continue
        if node.calc_expr is not None:
            node = Node(nid, node.kind, calc_expr=calc.rename(node.calc_expr, mapping))
        # Calculates only merge under the same answer name so no answer is lost
        tag = naming.answer_base(nid) if node.kind is OpKind.CALCULATE else ""
        key = json.dumps([canonical_key(node), sorted({mapping[p] for p in preds[nid]}), tag])
        mapping[nid] = seen.setdefault(key, nid)
    return mapping


def apply_merge(dag: FaDag, mapping: dict[str, str]) -> FaDag:
    outputs: dict[str, set[str]] = {}
    for nid, node in dag.nodes.items():
        if node.kind is OpKind.ACCESS:
            outputs.setdefault(mapping.get(nid, nid), set()).update(node.outputs)
    nodes = []
    for nid, node in dag.nodes.items():
        if mapping.get(nid, nid) != nid:
            continue
        if node.kind is OpKind.ACCESS:
            node = Node(nid, node.kind, predicate=node.predicate, outputs=tuple(sorted(outputs[nid])))
        elif node.calc_expr is not None:
            node = Node(nid, node.kind, calc_expr=calc.rename(node.calc_expr, mapping))
        nodes.append(node)
    m = lambda x: mapping.get(x, x)  # noqa: E731
    edges = {(m(u), m(v)) for u, v in dag.edges}
    answers: list[str] = []
    for a in dag.answer_nodes:
        if m(a) not in answers:
            answers.append(m(a))
    return rebuild(nodes, edges, answers)


def _merge_step(dag: FaDag) -> tuple[FaDag, list[RewriteStep]]:
    mapping = merge_mapping(dag)
    classes: dict[str, list[str]] = {}
    for nid, win in mapping.items():
        classes.setdefault(win, []).append(nid)
    merged = {w: sorted(ms) for w, ms in sorted(classes.items()) if len(ms) > 1}
    if not merged:
        return dag, []
    before = tuple(sorted(n for ms in merged.values() for n in ms))
    step = RewriteStep(MERGE, before, tuple(merged), {"classes": merged})
    return apply_merge(dag, mapping), [step]


def merge_common(dags: Sequence[FaDag] | FaDag) -> FaDag:
    """Union of the inputs with common operations unified."""
    dags = [dags] if isinstance(dags, FaDag) else list(dags)
    _check_inputs(dags)
    return _merge_step(disjoint_union(dags))[0]


# partition ----------------------------------------------------------------

def _chains(dag: FaDag, access_id: str, maps=None) -> dict[str, list[str]] | None:
    """Per output slot, the simple chain ``[enc, agg, noise, dec]`` below an
    Access node; None when any chain branches, joins or repeats a stage."""
    succ, pred = maps or (dag.successor_map(), dag.predecessor_map())
    out: dict[str, list[str]] = {}
    expect = (OpKind.AGGREGATE, OpKind.NOISE_ADD, OpKind.DECRYPT)
    for enc in succ[access_id]:
        node = dag.nodes[enc]
        if node.kind is not OpKind.ENCRYPT or node.feature in out or pred[enc] != [access_id]:
            return None
        chain = [enc]
        for kind in expect:
            nxt = succ[chain[-1]]
            if len(nxt) != 1 or dag.nodes[nxt[0]].kind is not kind or len(pred[nxt[0]]) != 1:
                return None
            chain.append(nxt[0])
        out[node.feature] = chain
    if set(out) != set(dag.nodes[access_id].outputs):
        return None
    return out


@dataclass(frozen=True)
class PartitionChoice:
    access: str
    feature: str
    children: tuple[str, ...]


def _universe(schema: Schema, feature: str) -> tuple[str, ...] | None:
    if feature not in schema or not schema[feature].enumerable:
        return None
    return schema[feature].values


def _children(dag: FaDag, p0: Node, feature: str, universe, maps) -> list[str]:
    base = p0.predicate.without(feature)
    v0 = p0.predicate.value_set(feature, universe)
    if not v0:
        return []
    cands = []
    for acc in dag.of_kind(OpKind.ACCESS):
        if acc.id == p0.id or acc.predicate.without(feature) != base:
            continue
        vc = acc.predicate.value_set(feature, universe)
        if vc and vc < v0 and _chains(dag, acc.id, maps) is not None:
            cands.append((-len(vc), acc.id, vc))
    chosen, covered = [], set()
    for _, aid, vc in sorted(cands):
        if not (vc & covered):
            chosen.append(aid)
            covered |= vc
    return sorted(chosen)


def _remainder(p0: Predicate, feature: str, universe, covered: frozenset) -> Predicate | None:
    rest = p0.value_set(feature, universe) - covered
    if not rest:
        return None
    base = p0.without(feature)
    if len(rest) == 1:
        atom = Atom.make(feature, "=", next(iter(rest)))
    elif not p0.only(feature) and len(covered) < len(rest):
        atom = Atom.make(feature, "not in", sorted(covered))
    else:
        atom = Atom.make(feature, "in", sorted(rest))
    return base & Predicate((atom,))


def find_partition(dag: FaDag, schema: Schema | None) -> PartitionChoice | None:
    """Broadest partitionable Access first; the feature with most children wins."""
    if schema is None:
        return None
    features = [f for f in sorted(schema.names()) if _universe(schema, f)]
    accs = sorted(dag.of_kind(OpKind.ACCESS), key=lambda a: (len(a.predicate.atoms), a.id))
    maps = (dag.successor_map(), dag.predecessor_map())
    for p0 in accs:
        if _chains(dag, p0.id, maps) is None:
            continue
        best = None
        for f in features:
            kids = _children(dag, p0, f, _universe(schema, f), maps)
            if kids and (best is None or len(kids) > len(best[1])):
                best = (f, kids)
        if best is not None:
            return PartitionChoice(p0.id, best[0], tuple(best[1]))
    return None


def _fresh(taken: set[str], base: str) -> str:
    nid, k = base, 2
    while nid in taken:
        nid, k = f"{base}_{k}", k + 1
    taken.add(nid)
    return nid


def apply_partition(dag: FaDag, choice: PartitionChoice, schema: Schema) -> tuple[FaDag, RewriteStep]:
    from .planner.templates import chain_nodes

    universe = _universe(schema, choice.feature)
    p0 = dag.nodes[choice.access]
    p0_chains = _chains(dag, p0.id)
    if p0_chains is None or universe is None:
        raise PlanError(f"cannot partition {p0.id!r}", "invalid-partition")
    nodes = dict(dag.nodes)
    edges = set(dag.edges)
    taken = set(nodes)
    dp = {slot: dag.nodes[ch[2]].dp_params for slot, ch in p0_chains.items()}
    added: list[str] = []

    def grow(access: Node, slots: Iterable[str]) -> dict[str, str]:
        """Make sure ``access`` has a chain per slot; returns slot -> decrypt id."""
        have = _chains(dag, access.id) if access.id in dag.nodes else {}
        decs = {s: ch[-1] for s, ch in have.items()}
        missing = [s for s in slots if s not in decs]
        if not missing:
            return decs
        nodes[access.id] = Node(access.id, OpKind.ACCESS, predicate=access.predicate,
                                outputs=tuple(sorted(set(access.outputs or ()) | set(missing))))
        for s in missing:
            cn, _ = chain_nodes(access.id, access.predicate, s, dp[s])
            ids = [_fresh(taken, n.id) for n in cn]
            path = [access.id] + ids
            for n, nid in zip(cn, ids):
                nodes[nid] = Node(nid, n.kind, n.feature, agg_fn=n.agg_fn, dp_params=n.dp_params)
            edges.update(zip(path, path[1:]))
            added.extend(ids)
            decs[s] = ids[-1]
        return decs

    slots = sorted(p0_chains)
    parts: list[dict[str, str]] = []
    covered: set = set()
    for cid in choice.children:
        child = dag.nodes[cid]
        covered |= child.predicate.value_set(choice.feature, universe)
        parts.append(grow(child, slots))
    rem = _remainder(p0.predicate, choice.feature, universe, frozenset(covered))
    if rem is not None:
        clash = [a.id for a in dag.of_kind(OpKind.ACCESS) if a.predicate == rem]
        if clash:
            raise PlanError(f"remainder {rem} already has a non-simple chain", "invalid-partition")
        rid = _fresh(taken, naming.access_id(rem))
        added.append(rid)
        parts.append(grow(Node(rid, OpKind.ACCESS, predicate=rem, outputs=()), slots))

    removed = [p0.id] + [n for ch in p0_chains.values() for n in ch[:-1]]
    for nid in removed:
        del nodes[nid]
    edges = {(u, v) for u, v in edges if u not in removed and v not in removed}
    for slot, chain in p0_chains.items():
        dec = chain[-1]
        terms = [p[slot] for p in parts]
        nodes[dec] = Node(dec, OpKind.CALCULATE, calc_expr=_canon(calc.sum_of(terms)))
        edges.update((t, dec) for t in terms)
    out = rebuild(nodes.values(), edges, dag.answer_nodes)
    step = RewriteStep(PARTITION, tuple(sorted(removed + [c[-1] for c in p0_chains.values()])),
                       tuple(sorted(added + [c[-1] for c in p0_chains.values()])),
                       {"access": choice.access, "feature": choice.feature, "children": list(choice.children),
                        "remainder": None if rem is None else rem.text()})
    return out, step


def _partition_steps(dag: FaDag, schema: Schema | None) -> tuple[FaDag, list[RewriteStep]]:
    steps = []
    for _ in range(_MAX_PARTITIONS):
        choice = find_partition(dag, schema)
        if choice is None:
            return dag, steps
        dag, step = apply_partition(dag, choice, schema)
        steps.append(step)
    raise PlanError("partitioning did not reach a fixpoint", "invalid-partition")


def partition_predicates(dag: FaDag, ir: QueryIR | None = None, schema: Schema | None = None) -> FaDag:
    """Rewrite broad Access chains as disjoint partitions (to a fixpoint).

    Declines (returns the input unchanged) without a schema, since remainders
    need the enumerated value set.
    """
    return _partition_steps(dag, schema)[0]


# augment --------------------------------------------------------------------

def _resolve(dag: FaDag, name: str, index: int) -> str:
    for cand in (naming.union_suffix(name, index), name):
        if cand in dag.answer_nodes:
            return cand
    for a in dag.answer_nodes:
        if naming.answer_base(a) == name:
            return a
    raise PlanError(f"no answer node for {name!r}", "unresolved-reference")


def _augment_steps(dag: FaDag, ir: QueryIR) -> tuple[FaDag, list[RewriteStep]]:
    steps = []
    for c in ir.final_combine:
        cid = naming.combine_id(c.op, c.left, c.right)
        if cid in dag.nodes:
            if cid not in dag.answer_nodes:
                dag = dag.copy()
                dag.add_answer(cid)
            continue
        left = _resolve(dag, primary_answer(ir.subqueries[c.left - 1]), c.left)
        right = _resolve(dag, primary_answer(ir.subqueries[c.right - 1]), c.right)
        dag = dag.copy()
        dag.add_node(Node(cid, OpKind.CALCULATE, calc_expr=_canon(f"{left} {COMBINE_OPS[c.op]} {right}")))
        dag.add_edge(left, cid)
        dag.add_edge(right, cid)
        dag.add_answer(cid)
        steps.append(RewriteStep(AUGMENT, (left, right), (cid,), {"combine": str(c)}))
    return dag, steps


def augment_implied(dag: FaDag, ir: QueryIR) -> FaDag:
    return _augment_steps(dag, ir)[0]


# drivers ----------------------------------------------------------------------

def naive_plan(dags: Sequence[FaDag], ir: QueryIR) -> FaDag:
    """The unoptimized baseline: disjoint union plus the implied combines."""
    _check_inputs(dags)
    return augment_implied(disjoint_union(dags), ir)


def optimize(dags: Sequence[FaDag] | FaDag, ir: QueryIR, schema: Schema | None = None) -> tuple[FaDag, RewriteTrace]:
    dags = [dags] if isinstance(dags, FaDag) else list(dags)
    _check_inputs(dags)
    dag, trace = disjoint_union(dags), RewriteTrace()
    for rule in (_merge_step, lambda d: _partition_steps(d, schema), lambda d: _augment_steps(d, ir)):
        dag, steps = rule(dag)
        trace.steps += steps
    bad = check_structure(dag)
    if bad:
        raise PlanError(f"optimizer produced an invalid DAG: {bad[0].message}", "internal")
    return dag, trace


def replay(dags: Sequence[FaDag] | FaDag, ir: QueryIR, trace: RewriteTrace, schema: Schema | None = None) -> FaDag:
    """Re-apply the recorded decisions of ``trace`` to the inputs."""
    dags = [dags] if isinstance(dags, FaDag) else list(dags)
    dag = disjoint_union(dags)
    for step in trace.steps:
        if step.rule == MERGE:
            mapping = {n: w for w, ms in step.detail["classes"].items() for n in ms}
            dag = apply_merge(dag, mapping)
        elif step.rule == PARTITION:
            d = step.detail
            dag, _ = apply_partition(dag, PartitionChoice(d["access"], d["feature"], tuple(d["children"])), schema)
        elif step.rule == AUGMENT:
            sub = QueryIR(ir.text, ir.subqueries, tuple(c for c in ir.final_combine if str(c) == step.detail["combine"]))
            dag, _ = _augment_steps(dag, sub)
        else:
            raise PlanError(f"unknown rewrite rule {step.rule!r}", "parse-error")
    return dag
