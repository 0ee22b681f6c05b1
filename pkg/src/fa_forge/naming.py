"""Deterministic node ids.

Every id is a function of the sub-query's intent, target slot and predicate,
so two planners (or the plaintext oracle) agree on answer names without
sharing state. When a disjoint union has to rename a clashing id it appends
``__q<k>``; :func:`answer_base` strips that suffix again.
"""

from __future__ import annotations

import re

from .dag import slot_slug
from .predicates import Predicate

_UNION_SUFFIX = re.compile(r"__q\d+$")


def access_id(pred: Predicate) -> str:
    return f"access__{pred.slug()}"


def chain_ids(slot: str, pred: Predicate) -> dict[str, str]:
    """Ids of the Encrypt..Decrypt chain for one slot of one Access node."""
    s, p = slot_slug(slot), pred.slug()
    return {
        "Encrypt": f"enc_{s}__{p}",
        "Aggregate": f"agg_{s}__{p}",
        "NoiseAdd": f"noise_{s}__{p}",
        "Decrypt": f"sum_{s}__{p}",
    }


def sum_id(slot: str, pred: Predicate) -> str:
    return chain_ids(slot, pred)["Decrypt"]


def mean_id(feature: str, pred: Predicate) -> str:
    return f"mean_{feature}__{pred.slug()}"


def pct_id(condition: Predicate, pred: Predicate) -> str:
    return f"pct_{condition.slug()}__{pred.slug()}"


def ratio_id(num: str, den: str, pred: Predicate) -> str:
    return f"ratio_{num}_{den}__{pred.slug()}"


def cmp_id(stat_a: str, group_b: Predicate) -> str:
    return f"cmp_{stat_a}__vs__{group_b.slug()}"


def combine_id(op: str, i: int, j: int) -> str:
    return f"combine_{op}_{i}_{j}"


def answer_base(node_id: str) -> str:
    return _UNION_SUFFIX.sub("", node_id)


def union_suffix(node_id: str, k: int) -> str:
    return f"{node_id}__q{k}"
