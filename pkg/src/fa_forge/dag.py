"""Typed operation DAG for federated-analytics workflows.

Node kinds follow the canonical FA pipeline::

    Access -> Encrypt -> Aggregate -> NoiseAdd -> Decrypt -> Calculate

An Access node reads a client's single record, evaluates its predicate and
emits one scalar per *output slot*. A slot is ``"1"`` (the participation
indicator), a numeric feature name, or ``"[<predicate text>]"`` (a 0/1
indicator of a condition). Encrypt through Decrypt carry the slot they
process in ``feature``.
"""

from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping

from . import calc
from .errors import (
    CycleError,
    DecodeError,
    DuplicateIdError,
    MalformedParamsError,
    SchemaViolation,
    UnknownIdError,
)
from .predicates import Predicate, parse_predicate, predicate_from_json


class OpKind(str, Enum):
    ACCESS = "Access"
    ENCRYPT = "Encrypt"
    AGGREGATE = "Aggregate"
    NOISE_ADD = "NoiseAdd"
    DECRYPT = "Decrypt"
    CALCULATE = "Calculate"

    @property
    def stage(self) -> int:
        return _STAGES[self]

    @classmethod
    def parse(cls, value: str) -> "OpKind":
        try:
            return cls(value)
        except ValueError:
            raise MalformedParamsError(f"unknown node kind {value!r}") from None


_STAGES = {k: i for i, k in enumerate(OpKind)}
KIND_NAMES = tuple(k.value for k in OpKind)

ONE = "1"
_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def indicator_slot(condition: Predicate) -> str:
    return f"[{condition.text()}]"


def parse_slot(slot: str) -> tuple[str, Any]:
    """``("one", None)``, ``("feature", name)`` or ``("indicator", Predicate)``."""
    if slot == ONE:
        return "one", None
    if slot.startswith("[") and slot.endswith("]"):
        return "indicator", parse_predicate(slot[1:-1])
    return "feature", slot


def slot_slug(slot: str) -> str:
    kind, arg = parse_slot(slot)
    if kind == "one":
        return "one"
    if kind == "indicator":
        return "ind_" + arg.slug()
    return arg


@dataclass(frozen=True)
class DpParams:
    epsilon: float
    sensitivity: float

    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon


@dataclass(frozen=True)
class Node:
    id: str
    kind: OpKind
    feature: str | None = None
    predicate: Predicate | None = None
    outputs: tuple[str, ...] | None = None
    agg_fn: str | None = None
    dp_params: DpParams | None = None
    calc_expr: str | None = None

    def __post_init__(self):
        if isinstance(self.kind, str) and not isinstance(self.kind, OpKind):
            object.__setattr__(self, "kind", OpKind.parse(self.kind))
        if self.outputs is not None and not isinstance(self.outputs, tuple):
            object.__setattr__(self, "outputs", tuple(self.outputs))

    def check(self) -> None:
        """Raise :class:`MalformedParamsError` unless params match the kind."""
        k = self.kind
        if not isinstance(self.id, str) or not _ID_RE.match(self.id):
            raise MalformedParamsError(f"node id {self.id!r} is not an identifier")

        def need(cond, what):
            if not cond:
                raise MalformedParamsError(f"{k.value} node {self.id!r}: {what}")

        need((self.predicate is not None) == (k is OpKind.ACCESS), "predicate is required on Access and only there")
        need((self.outputs is not None) == (k is OpKind.ACCESS), "outputs are required on Access and only there")
        if k is OpKind.ACCESS:
            need(len(self.outputs) > 0, "outputs must be nonempty")
            need(len(set(self.outputs)) == len(self.outputs), "outputs must be distinct")
        need((self.agg_fn is not None) == (k is OpKind.AGGREGATE), "agg_fn is required on Aggregate and only there")
        if k is OpKind.AGGREGATE:
            need(self.agg_fn == "sum", "only agg_fn 'sum' is supported")
        need((self.dp_params is not None) == (k is OpKind.NOISE_ADD), "dp_params required on NoiseAdd and only there")
        if k is OpKind.NOISE_ADD:
            need(self.dp_params.epsilon > 0 and self.dp_params.sensitivity > 0, "epsilon and sensitivity must be > 0")
        need((self.calc_expr is not None) == (k is OpKind.CALCULATE), "calc_expr required on Calculate and only there")
        if k is OpKind.CALCULATE:
            need(self.feature is None, "Calculate takes no feature")
            try:
                calc.parse(self.calc_expr)
            except Exception as exc:
                raise MalformedParamsError(f"Calculate node {self.id!r}: bad expression: {exc}") from None
        if k is OpKind.ENCRYPT:
            need(self.feature is not None, "Encrypt needs the slot it encrypts in 'feature'")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.feature is not None:
            out["feature"] = self.feature
        if self.predicate is not None:
            out["predicate"] = self.predicate.to_json()
        if self.outputs is not None:
            out["outputs"] = list(self.outputs)
        if self.agg_fn is not None:
            out["agg_fn"] = self.agg_fn
        if self.dp_params is not None:
            out["dp_params"] = {"epsilon": self.dp_params.epsilon, "sensitivity": self.dp_params.sensitivity}
        if self.calc_expr is not None:
            out["calc_expr"] = self.calc_expr
        return out


def canonical_key(node: Node) -> str:
    """Content key: equal for nodes that differ only by id."""
    payload = node.to_dict()
    if node.predicate is not None:
        payload["predicate"] = node.predicate.text()
    if node.calc_expr is not None:
        payload["calc_expr"] = calc.rename(node.calc_expr, {})
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass
class FaDag:
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)
    answer_nodes: list[str] = field(default_factory=list)

    # construction -----------------------------------------------------
    def add_node(self, node: Node) -> str:
        if node.id in self.nodes:
            raise DuplicateIdError(f"node id {node.id!r} already present")
        node.check()
        self.nodes[node.id] = node
        return node.id

    def add_edge(self, src: str, dst: str) -> None:
        for nid in (src, dst):
            if nid not in self.nodes:
                raise UnknownIdError(f"unknown node id {nid!r}")
        if (src, dst) in self.edges:
            return
        if src == dst or self._reaches(dst, src):
            raise CycleError(f"edge {src}->{dst} would create a cycle")
        self.edges.add((src, dst))

    def add_answer(self, node_id: str) -> None:
        if node_id not in self.nodes:
            raise UnknownIdError(f"unknown node id {node_id!r}")
        if node_id not in self.answer_nodes:
            self.answer_nodes.append(node_id)

    def _reaches(self, start: str, goal: str) -> bool:
        succ = self.successor_map()
        stack, seen = [start], {start}
        while stack:
            cur = stack.pop()
            if cur == goal:
                return True
            for nxt in succ.get(cur, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False

    # queries ------------------------------------------------------------
    def successor_map(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for u, v in sorted(self.edges):
            out[u].append(v)
        return out

    def predecessor_map(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for u, v in sorted(self.edges):
            out[v].append(u)
        return out

    def preds(self, node_id: str) -> list[str]:
        return sorted(u for u, v in self.edges if v == node_id)

    def succs(self, node_id: str) -> list[str]:
        return sorted(v for u, v in self.edges if u == node_id)

    def of_kind(self, kind: OpKind) -> list[Node]:
        return [self.nodes[n] for n in sorted(self.nodes) if self.nodes[n].kind is kind]

    def copy(self) -> "FaDag":
        return FaDag(dict(self.nodes), set(self.edges), list(self.answer_nodes))

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": {nid: self.nodes[nid].to_dict() for nid in sorted(self.nodes)},
            "edges": [list(e) for e in sorted(self.edges)],
            "answer_nodes": list(self.answer_nodes),
        }


def add_node(dag: FaDag, node: Node) -> str:
    return dag.add_node(node)


def add_edge(dag: FaDag, src: str, dst: str) -> None:
    dag.add_edge(src, dst)


def topo_order(dag: FaDag) -> list[str]:
    """Kahn's algorithm; ready nodes are released in lexicographic id order."""
    indeg = {nid: 0 for nid in dag.nodes}
    for _, v in dag.edges:
        indeg[v] += 1
    succ = dag.successor_map()
    ready = [nid for nid, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for nxt in succ[nid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, nxt)
    return order


def rebuild(nodes: Iterable[Node], edges: Iterable[tuple[str, str]], answers: Iterable[str]) -> FaDag:
    """Build a DAG from parts, re-checking every invariant."""
    dag = FaDag()
    for node in sorted(nodes, key=lambda n: n.id):
        dag.add_node(node)
    for u, v in sorted(set(edges)):
        dag.add_edge(u, v)
    for a in answers:
        dag.add_answer(a)
    return dag


# serialization ----------------------------------------------------------

_NODE_FIELDS = {"kind", "feature", "predicate", "outputs", "agg_fn", "dp_params", "calc_expr"}


def encode_dag(dag: FaDag, indent: int | None = None) -> str:
    sep = (",", ":") if indent is None else (",", ": ")
    return json.dumps(dag.to_dict(), sort_keys=True, indent=indent, separators=sep)


def node_from_dict(nid: str, raw: Any) -> Node:
    where = f"nodes.{nid}"
    if not isinstance(raw, Mapping):
        raise SchemaViolation(where, "node must be an object")
    extra = set(raw) - _NODE_FIELDS
    if extra:
        raise SchemaViolation(f"{where}.{sorted(extra)[0]}", "unknown field")
    kind = raw.get("kind")
    if kind not in KIND_NAMES:
        raise SchemaViolation(f"{where}.kind", f"unknown kind {kind!r}")
    feature = raw.get("feature")
    if feature is not None and not isinstance(feature, str):
        raise SchemaViolation(f"{where}.feature", "must be a string")
    predicate = None
    if "predicate" in raw:
        predicate = predicate_from_json(raw["predicate"], f"{where}.predicate")
    outputs = raw.get("outputs")
    if outputs is not None:
        if not isinstance(outputs, list) or not all(isinstance(o, str) for o in outputs):
            raise SchemaViolation(f"{where}.outputs", "must be a list of strings")
        outputs = tuple(outputs)
    dp = raw.get("dp_params")
    dp_params = None
    if dp is not None:
        if not isinstance(dp, Mapping) or not {"epsilon", "sensitivity"} <= set(dp):
            raise SchemaViolation(f"{where}.dp_params", "needs epsilon and sensitivity")
        if not all(isinstance(dp[k], (int, float)) and not isinstance(dp[k], bool) for k in ("epsilon", "sensitivity")):
            raise SchemaViolation(f"{where}.dp_params", "epsilon and sensitivity must be numbers")
        dp_params = DpParams(dp["epsilon"], dp["sensitivity"])
    agg_fn = raw.get("agg_fn")
    calc_expr = raw.get("calc_expr")
    if calc_expr is not None and not isinstance(calc_expr, str):
        raise SchemaViolation(f"{where}.calc_expr", "must be a string")
    node = Node(nid, OpKind(kind), feature, predicate, outputs, agg_fn, dp_params, calc_expr)
    try:
        node.check()
    except MalformedParamsError as exc:
        raise SchemaViolation(where, str(exc)) from None
    return node


def dag_from_dict(raw: Any) -> FaDag:
    if not isinstance(raw, Mapping):
        raise SchemaViolation("$", "top level must be an object")
    for key in ("nodes", "edges", "answer_nodes"):
        if key not in raw:
            raise SchemaViolation(key, "missing")
    if not isinstance(raw["nodes"], Mapping):
        raise SchemaViolation("nodes", "must be an object")
    if not isinstance(raw["edges"], list):
        raise SchemaViolation("edges", "must be a list")
    if not isinstance(raw["answer_nodes"], list):
        raise SchemaViolation("answer_nodes", "must be a list")
    dag = FaDag()
    for nid, body in raw["nodes"].items():
        dag.add_node(node_from_dict(nid, body))
    for i, e in enumerate(raw["edges"]):
        if not isinstance(e, list) or len(e) != 2:
            raise SchemaViolation(f"edges[{i}]", "edge must be [from, to]")
        try:
            dag.add_edge(e[0], e[1])
        except (UnknownIdError, CycleError) as exc:
            raise SchemaViolation(f"edges[{i}]", str(exc)) from None
    for i, a in enumerate(raw["answer_nodes"]):
        if a not in dag.nodes:
            raise SchemaViolation(f"answer_nodes[{i}]", f"unknown node id {a!r}")
        dag.add_answer(a)
    return dag


def decode_dag(text: str) -> FaDag:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid DAG JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    return dag_from_dict(raw)


def with_node(node: Node, **changes) -> Node:
    return replace(node, **changes)
