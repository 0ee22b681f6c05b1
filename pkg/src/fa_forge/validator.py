"""Structure checker and completeness check for FA DAGs.

Both checks return a list of :class:`Violation`; a clean plan yields ``[]``.
``check_structure`` accepts a :class:`FaDag` or its raw JSON-like dict, so
LLM-produced or hand-edited plans with unknown kinds can be diagnosed rather
than rejected at decode time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping

from . import calc
from .dag import KIND_NAMES, FaDag
from .errors import FaForgeError
from .naming import answer_base


class Code(str, Enum):
    UNKNOWN_KIND = "UnknownKind"
    MISSING_PARAM = "MissingParam"
    ORDER_VIOLATION = "OrderViolation"
    MISSING_STAGE = "MissingStage"
    DANGLING_OUTPUT = "DanglingOutput"
    INCOMPLETE_ANSWER = "IncompleteAnswer"


@dataclass(frozen=True)
class Violation:
    code: Code
    nodes: tuple[str, ...]
    message: str

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code.value, "nodes": list(self.nodes), "message": self.message}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


_STAGE = {name: i for i, name in enumerate(KIND_NAMES)}
_REQUIRED = {
    "Access": {"predicate", "outputs"},
    "Encrypt": {"feature"},
    "Aggregate": {"agg_fn"},
    "NoiseAdd": {"dp_params"},
    "Decrypt": set(),
    "Calculate": {"calc_expr"},
}
_OPTIONAL = {"Access": {"feature"}, "Aggregate": {"feature"}, "NoiseAdd": {"feature"}, "Decrypt": {"feature"}}


def _as_raw(dag: FaDag | Mapping[str, Any]) -> tuple[dict, list, list]:
    raw = dag.to_dict() if isinstance(dag, FaDag) else dag
    nodes = raw.get("nodes") if isinstance(raw, Mapping) else None
    nodes = dict(nodes) if isinstance(nodes, Mapping) else {}
    edges = [
        tuple(e) for e in raw.get("edges", [])
        if isinstance(e, (list, tuple)) and len(e) == 2 and all(isinstance(x, str) for x in e)
    ]
    answers = [a for a in raw.get("answer_nodes", []) if isinstance(a, str)]
    return nodes, edges, answers


def _kahn_survivors(ids: set[str], edges: list[tuple[str, str]]) -> set[str]:
    indeg = {n: 0 for n in ids}
    succ: dict[str, list[str]] = {n: [] for n in ids}
    for u, v in edges:
        indeg[v] += 1
        succ[u].append(v)
    ready = [n for n, d in indeg.items() if d == 0]
    left = set(ids)
    while ready:
        n = ready.pop()
        left.discard(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    return left


def _find_cycle_nodes(ids: Iterable[str], edges: list[tuple[str, str]]) -> set[str]:
    """Nodes on or between cycles: survivors of Kahn peeling in both directions."""
    ids = set(ids)
    live = [(u, v) for u, v in set(edges) if u in ids and v in ids]
    forward = _kahn_survivors(ids, live)
    backward = _kahn_survivors(ids, [(v, u) for u, v in live])
    return forward & backward


def check_structure(dag: FaDag | Mapping[str, Any]) -> list[Violation]:
    nodes, edges, answers = _as_raw(dag)
    out: list[Violation] = []

    def flag(code, ids, msg):
        out.append(Violation(code, tuple(ids), msg))

    kinds: dict[str, str] = {}
    for nid, body in nodes.items():
        kind = body.get("kind") if isinstance(body, Mapping) else None
        if kind not in _STAGE:
            flag(Code.UNKNOWN_KIND, [nid], f"node {nid!r} has kind {kind!r}, not an FA operation")
            continue
        kinds[nid] = kind
        present = {k for k, v in body.items() if k != "kind" and v is not None}
        missing = _REQUIRED[kind] - present
        extra = present - _REQUIRED[kind] - _OPTIONAL.get(kind, set())
        if missing:
            flag(Code.MISSING_PARAM, [nid], f"{kind} node {nid!r} lacks {sorted(missing)}")
        if extra:
            flag(Code.MISSING_PARAM, [nid], f"{kind} node {nid!r} carries foreign params {sorted(extra)}")
        if kind == "NoiseAdd" and "dp_params" in present:
            dp = body["dp_params"]
            ok = isinstance(dp, Mapping) and all(
                isinstance(dp.get(k), (int, float)) and dp.get(k) > 0 for k in ("epsilon", "sensitivity")
            )
            if not ok:
                flag(Code.MISSING_PARAM, [nid], f"NoiseAdd {nid!r} needs positive epsilon and sensitivity")
        if kind == "Access" and "outputs" in present and not body["outputs"]:
            flag(Code.MISSING_PARAM, [nid], f"Access {nid!r} emits no outputs")
        if kind == "Aggregate" and body.get("agg_fn") not in (None, "sum"):
            flag(Code.MISSING_PARAM, [nid], f"Aggregate {nid!r} uses unsupported agg_fn {body.get('agg_fn')!r}")

    for u, v in edges:
        if u not in nodes or v not in nodes:
            flag(Code.ORDER_VIOLATION, [u, v], f"edge {u}->{v} references a missing node")

    on_cycle = _find_cycle_nodes(nodes, edges)
    if on_cycle:
        flag(Code.ORDER_VIOLATION, sorted(on_cycle), "edges form a cycle; no valid execution order exists")

    preds: dict[str, list[str]] = {n: [] for n in nodes}
    succs: dict[str, list[str]] = {n: [] for n in nodes}
    for u, v in sorted(set(edges)):
        if u in nodes and v in nodes:
            preds[v].append(u)
            succs[u].append(v)

    # (f) no edge into the same or an earlier stage, except the chaining
    # NoiseAdd->NoiseAdd and Calculate->Calculate
    for u, v in sorted(set(edges)):
        if u in kinds and v in kinds:
            ku, kv = kinds[u], kinds[v]
            same_ok = ku == kv and ku in ("NoiseAdd", "Calculate")
            if _STAGE[kv] < _STAGE[ku] or (_STAGE[kv] == _STAGE[ku] and not same_ok):
                flag(Code.ORDER_VIOLATION, [u, v], f"edge {ku} {u!r} -> {kv} {v!r} runs against the FA pipeline order")

    def kinds_of(ids):
        return [kinds.get(p) for p in ids]

    for nid in sorted(kinds):
        kind = kinds[nid]
        body = nodes[nid]
        ps = preds[nid]
        pk = kinds_of(ps)
        # predecessors from an earlier-but-wrong stage mean a stage was skipped;
        # later or same-stage ones are already reported as order violations
        earlier_wrong = [p for p in ps if kinds.get(p) and _STAGE[kinds[p]] < _STAGE[kind]]
        if kind == "Access":
            continue
        if kind == "Encrypt":
            acc = [p for p, k in zip(ps, pk) if k == "Access"]
            if len(acc) != 1 or len(ps) != 1:
                flag(Code.MISSING_STAGE if not acc else Code.ORDER_VIOLATION, [nid] + ps,
                     f"Encrypt {nid!r} must have exactly one Access predecessor, has {ps}")
            elif body.get("feature") not in (nodes[acc[0]].get("outputs") or []):
                flag(Code.MISSING_PARAM, [nid, acc[0]],
                     f"Encrypt {nid!r} slot {body.get('feature')!r} is not an output of {acc[0]!r}")
        elif kind == "Aggregate":
            bad = [p for p in earlier_wrong if kinds[p] != "Encrypt"]
            if not ps or bad:
                flag(Code.MISSING_STAGE, [nid] + (bad or []), f"Aggregate {nid!r} must consume only Encrypt outputs")
        elif kind == "NoiseAdd":
            good = [p for p, k in zip(ps, pk) if k in ("Aggregate", "NoiseAdd")]
            if len(good) != 1 or len(ps) != 1:
                code = Code.MISSING_STAGE if not good else Code.ORDER_VIOLATION
                flag(code, [nid] + ps, f"NoiseAdd {nid!r} must consume exactly one Aggregate or NoiseAdd")
        elif kind == "Decrypt":
            good = [p for p, k in zip(ps, pk) if k == "NoiseAdd"]
            if len(good) != 1 or len(ps) != 1:
                code = Code.MISSING_STAGE if not good else Code.ORDER_VIOLATION
                flag(code, [nid] + ps, f"Decrypt {nid!r} must consume exactly one NoiseAdd (DP before release)")
        elif kind == "Calculate":
            bad = [p for p in earlier_wrong if kinds[p] != "Decrypt"]
            if not ps or bad:
                flag(Code.MISSING_STAGE, [nid] + bad, f"Calculate {nid!r} must consume only Decrypt/Calculate outputs")
            expr = body.get("calc_expr")
            if isinstance(expr, str):
                try:
                    refs = calc.references(expr)
                except FaForgeError as exc:
                    flag(Code.MISSING_PARAM, [nid], f"Calculate {nid!r}: {exc}")
                    refs = None
                if refs is not None:
                    stray = [r for r in refs if r not in ps]
                    unused = [p for p in ps if p not in refs]
                    if stray:
                        flag(Code.ORDER_VIOLATION, [nid] + stray,
                             f"Calculate {nid!r} references {stray} which are not its inputs")
                    if unused:
                        flag(Code.DANGLING_OUTPUT, [nid] + unused,
                             f"Calculate {nid!r} has inputs {unused} its expression never uses")

    # dangling data: unconsumed slots and released values nobody uses
    for nid in sorted(kinds):
        kind = kinds[nid]
        if kind == "Access":
            outs = nodes[nid].get("outputs") or []
            enc_slots = {nodes[s].get("feature") for s in succs[nid] if kinds.get(s) == "Encrypt"}
            dangling = [o for o in outs if o not in enc_slots]
            if dangling:
                flag(Code.DANGLING_OUTPUT, [nid], f"Access {nid!r} outputs {dangling} are never encrypted")
        elif not succs[nid] and nid not in answers:
            flag(Code.DANGLING_OUTPUT, [nid], f"{kind} {nid!r} leads nowhere and is not an answer")

    # (g) answers
    if not answers:
        flag(Code.INCOMPLETE_ANSWER, [], "plan designates no answer nodes")
    for a in answers:
        if a not in nodes:
            flag(Code.INCOMPLETE_ANSWER, [a], f"answer {a!r} is not a node")
        elif kinds.get(a) not in ("Calculate", "Decrypt"):
            flag(Code.INCOMPLETE_ANSWER, [a], f"answer {a!r} is a {nodes[a].get('kind')}, not a released value")

    return sorted(set(out), key=lambda v: (v.code.value, v.nodes, v.message))


def _answer_lookup(dag: FaDag | Mapping[str, Any]) -> dict[str, list[str]]:
    nodes, _, answers = _as_raw(dag)
    table: dict[str, list[str]] = {}
    for a in answers:
        if a in nodes:
            table.setdefault(answer_base(a), []).append(a)
    return table


def check_completeness(dag: FaDag | Mapping[str, Any], ir) -> list[Violation]:
    """One ``IncompleteAnswer`` per sub-intent whose answers are missing or
    lack the final operation (division for means/percentages/ratios,
    subtraction for comparisons)."""
    from .planner.templates import expected_answers

    nodes, _, _ = _as_raw(dag)
    table = _answer_lookup(dag)
    out = []
    for label, wants in expected_answers(ir):
        missing = []
        for name, op in wants:
            hits = table.get(name, [])
            ok = False
            for hit in hits:
                body = nodes[hit]
                if op is None:
                    ok = body.get("kind") in ("Decrypt", "Calculate")
                elif body.get("kind") == "Calculate":
                    try:
                        ok = calc.top_op(body.get("calc_expr", "")) == op
                    except FaForgeError:
                        ok = False
                if ok:
                    break
            if not ok:
                missing.append(name)
        if missing:
            out.append(Violation(Code.INCOMPLETE_ANSWER, tuple(missing),
                                 f"{label}: no answer node computes {', '.join(missing)}"))
    return out


def completion_ratio(outcomes: Iterable[bool]) -> Fraction:
    outcomes = list(outcomes)
    if not outcomes:
        raise FaForgeError("completion ratio of an empty outcome list", "empty-input")
    return Fraction(sum(bool(o) for o in outcomes), len(outcomes))


def is_complete(dag: FaDag | Mapping[str, Any], ir) -> bool:
    return not check_structure(dag) and not check_completeness(dag, ir)


__all__ = [
    "Code",
    "Violation",
    "check_structure",
    "check_completeness",
    "completion_ratio",
    "is_complete",
]
