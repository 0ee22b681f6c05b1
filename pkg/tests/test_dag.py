from __future__ import annotations

import json

import pytest

from fa_forge.dag import DpParams, FaDag, Node, OpKind, canonical_key, decode_dag, encode_dag, topo_order
from fa_forge.errors import CycleError, DuplicateIdError, MalformedParamsError, SchemaViolation, UnknownIdError
from fa_forge.optimizer import optimize
from fa_forge.predicates import Predicate


def access(nid, *atoms, outputs=("salary",)):
    return Node(nid, OpKind.ACCESS, predicate=Predicate.of(*atoms), outputs=outputs)


def test_add_node_returns_id_and_rejects_duplicates():
    dag = FaDag()
    assert dag.add_node(access("a1")) == "a1"
    with pytest.raises(DuplicateIdError):
        dag.add_node(access("a1"))


def test_noise_without_params_is_malformed():
    with pytest.raises(MalformedParamsError):
        FaDag().add_node(Node("n1", OpKind.NOISE_ADD))


def test_edges_reject_cycles_and_unknown_ids():
    dag = FaDag()
    dag.add_node(access("a1"))
    dag.add_node(Node("e1", OpKind.ENCRYPT, feature="salary"))
    dag.add_edge("a1", "e1")
    assert dag.edges == {("a1", "e1")}
    with pytest.raises(CycleError):
        dag.add_edge("e1", "a1")
    with pytest.raises(UnknownIdError):
        dag.add_edge("a1", "zz")


def _bare(ids, edges):
    dag = FaDag()
    for i in ids:
        dag.add_node(Node(i, OpKind.CALCULATE, calc_expr="1"))
    for u, v in edges:
        dag.add_edge(u, v)
    return dag


def test_topo_order_examples():
    assert topo_order(_bare("aeg", [("a", "e"), ("e", "g")])) == ["a", "e", "g"]
    assert topo_order(_bare("ba", [])) == ["a", "b"]
    order = topo_order(_bare("abcd", [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]))
    assert order[0] == "a" and order[-1] == "d"


def test_canonical_key_ignores_id_and_atom_order():
    one = access("x", ("role", "=", "professor"))
    assert canonical_key(one) == canonical_key(access("y", ("role", "=", "professor")))
    assert canonical_key(one) != canonical_key(access("x", ("role", "=", "phd")))
    ab = access("p", ("role", "=", "phd"), ("age", ">", 30))
    ba = access("q", ("age", ">", 30), ("role", "=", "phd"))
    assert canonical_key(ab) == canonical_key(ba)


def test_empty_dag_roundtrip():
    text = encode_dag(FaDag())
    assert json.loads(text) == {"nodes": {}, "edges": [], "answer_nodes": []}
    assert encode_dag(decode_dag(text)) == text


def test_gap_optimized_roundtrips_byte_identically(gap_dags, gap_ir, uni_schema):
    dag, _ = optimize(gap_dags, gap_ir, uni_schema)
    text = encode_dag(dag, indent=2)
    assert encode_dag(decode_dag(text), indent=2) == text


def test_unknown_kind_rejected_on_decode():
    raw = {"nodes": {"x": {"kind": "Compress"}}, "edges": [], "answer_nodes": []}
    with pytest.raises(SchemaViolation):
        decode_dag(json.dumps(raw))


def test_dp_scale():
    assert DpParams(0.5, 2.0).scale == 4.0
