"""Seeded single-point mutations of encoded DAGs, used by the validator suite."""

from __future__ import annotations

import copy
import random

KINDS = ("edge-reversal", "noise-deletion", "answer-calc-deletion", "unknown-kind")


def _drop(raw: dict, nid: str) -> dict:
    raw["nodes"].pop(nid)
    raw["edges"] = [e for e in raw["edges"] if nid not in e]
    return raw


def mutate(raw: dict, kind: str, rng: random.Random) -> dict | None:
    """One mutation of ``kind``; None when the DAG offers no target for it."""
    raw = copy.deepcopy(raw)
    nodes = raw["nodes"]
    if kind == "edge-reversal":
        if not raw["edges"]:
            return None
        i = rng.randrange(len(raw["edges"]))
        u, v = raw["edges"][i]
        raw["edges"][i] = [v, u]
        return raw
    if kind == "noise-deletion":
        targets = sorted(n for n, b in nodes.items() if b["kind"] == "NoiseAdd")
        return _drop(raw, rng.choice(targets)) if targets else None
    if kind == "answer-calc-deletion":
        targets = sorted(n for n in raw["answer_nodes"] if nodes[n]["kind"] == "Calculate")
        return _drop(raw, rng.choice(targets)) if targets else None
    if kind == "unknown-kind":
        nid = rng.choice(sorted(nodes))
        nodes[nid]["kind"] = rng.choice(["Compress", "Shuffle", "Sample", "access", ""])
        return raw
    raise ValueError(kind)
