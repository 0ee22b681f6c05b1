"""Simulated execution of an operation DAG over one-record clients.

Access and Encrypt run per client; Aggregate folds ciphertexts in client index
order; NoiseAdd adds encrypted Laplace noise on the server side; Decrypt
decodes fixed point; Calculate evaluates on exact rationals.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import calc, naming
from .calc import eval_calc
from .crypto import (
    DEFAULT_SCALE,
    Ciphertext,
    KeyPair,
    add_cipher,
    decode_fixed,
    decrypt,
    encode_fixed,
    encrypt,
    mock_keygen,
)
from .dag import ONE, FaDag, Node, OpKind, parse_slot, topo_order
from .errors import CalcError, DataError, ExecutionError
from .planner.ir import COMBINE_OPS, Intent, QueryIR, SubQuery
from .planner.templates import primary_answer
from .predicates import Predicate
from .schema import Schema

__all__ = [
    "AuditRecord",
    "ClientPool",
    "ExecutionResult",
    "access_matches",
    "eval_calc",
    "execute",
    "load_clients",
    "plaintext_oracle",
    "sample_laplace",
]


@dataclass(frozen=True)
class ClientPool:
    schema: Schema
    records: tuple[Mapping[str, Any], ...]

    def __post_init__(self):
        if not self.records:
            raise DataError("a client pool needs at least one client", "empty-pool")

    @property
    def n(self) -> int:
        return len(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _coerce(spec, raw: str, row: int):
    if spec.is_numeric:
        try:
            value = Fraction(Decimal(raw.strip()))
        except (InvalidOperation, ValueError):
            raise DataError(f"row {row}: {spec.name}={raw!r} is not a number", "type-coercion", row) from None
        if spec.bounds is not None and not spec.bounds[0] <= value <= spec.bounds[1]:
            raise DataError(f"row {row}: {spec.name}={raw} outside bounds {list(spec.bounds)}", "out-of-bounds", row)
        return value
    if spec.values is not None and raw not in spec.values:
        raise DataError(f"row {row}: {spec.name}={raw!r} not in the enumeration", "type-coercion", row)
    return raw


def make_pool(rows: Sequence[Mapping[str, Any]], schema: Schema) -> ClientPool:
    """Pool from in-memory rows (values as strings or numbers)."""
    records = []
    for i, row in enumerate(rows, 1):
        missing = [f for f in schema.names() if f not in row]
        if missing:
            raise DataError(f"row {i}: missing feature(s) {missing}", "missing-column", i)
        records.append({f: _coerce(schema[f], str(row[f]), i) for f in schema.names()})
    return ClientPool(schema, tuple(records))


def load_clients(csv_path: str | Path, schema: Schema) -> ClientPool:
    """One client per data row; data rows are numbered from 1."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [f for f in schema.names() if f not in header]
        if missing:
            raise DataError(f"{csv_path}: missing column(s) {missing}", "missing-column")
        records = [{f: _coerce(schema[f], row[f] or "", i) for f in schema.names()}
                   for i, row in enumerate(reader, 1)]
    return ClientPool(schema, tuple(records))


def sample_laplace(b: float, rng: random.Random) -> float:
    """Inverse-CDF draw from Laplace(0, b)."""
    if not b > 0:
        raise ExecutionError(f"Laplace scale must be positive, got {b}", "nonpositive-scale")
    u = rng.random() - 0.5
    while u == -0.5:
        u = rng.random() - 0.5
    return b * math.copysign(1.0, u) * math.log(1 - 2 * abs(u))


def slot_value(slot: str, record: Mapping[str, Any]):
    kind, arg = parse_slot(slot)
    if kind == "one":
        return 1
    if kind == "indicator":
        return 1 if arg.holds(record) else 0
    return record[arg]


def access_matches(node: Node, pool: ClientPool) -> list[int]:
    return [i for i, r in enumerate(pool.records) if node.predicate.holds(r)]


@dataclass(frozen=True)
class AuditRecord:
    """Sizes only: how many inputs a node consumed and outputs it produced."""

    node: str
    kind: str
    inputs: int
    outputs: int

    def to_dict(self) -> dict[str, Any]:
        return {"node": self.node, "kind": self.kind, "inputs": self.inputs, "outputs": self.outputs}


@dataclass
class ExecutionResult:
    answers: dict[str, Fraction]
    audit: list[AuditRecord]
    seed: int | None
    noise: bool
    epsilon_total: float
    errors: dict[str, str] = field(default_factory=dict)

    def by_base(self) -> dict[str, Fraction]:
        """Answers keyed by their name without any union suffix."""
        return {naming.answer_base(k): v for k, v in self.answers.items()}

    def to_dict(self) -> dict[str, Any]:
        return {
            "answers": {k: (None if v is None else float(v)) for k, v in self.answers.items()},
            "audit": [a.to_dict() for a in self.audit],
            "epsilon_total": self.epsilon_total,
            "errors": dict(sorted(self.errors.items())),
            "noise": self.noise,
            "seed": self.seed,
        }


def _check_overflow(dag: FaDag, pool: ClientPool, n: int, scale: int) -> None:
    # worst case |sum| of any chain, plus generous head-room for noise
    for node in dag.of_kind(OpKind.ACCESS):
        for slot in node.outputs:
            kind, arg = parse_slot(slot)
            bound = 1 if kind != "feature" else max(abs(r[arg]) for r in pool.records)
            if 2 * (pool.n * bound + 10**9) * scale >= n:
                raise ExecutionError(f"slot {slot!r} of {node.id!r} may overflow the plaintext space",
                                     "overflow", node.id)


def _rngs(rng: random.Random | int | None) -> tuple[int | None, random.Random, random.Random]:
    if isinstance(rng, random.Random):
        return None, rng, rng
    seed = rng
    return seed, random.Random(f"noise:{seed}"), random.Random(f"crypto:{seed}")


def execute(dag: FaDag, pool: ClientPool, keys: KeyPair | None = None,
            rng: random.Random | int | None = 0, noise_enabled: bool = False,
            scale: int = DEFAULT_SCALE, strict: bool = True) -> ExecutionResult:
    """Run ``dag`` over ``pool``.

    ``rng`` may be a seed (noise and encryption randomness then come from two
    independent streams derived from it) or a shared :class:`random.Random`.
    ``keys`` defaults to the mock scheme. With ``strict=False`` Calculate
    failures are recorded in ``errors`` instead of raised.
    """
    keys = keys or mock_keygen()
    pk, sk = keys.public, keys.secret
    seed, noise_rng, crypto_rng = _rngs(rng)
    _check_overflow(dag, pool, pk.n, scale)
    preds = dag.predecessor_map()
    per_client: dict[str, list[tuple[int, Any]]] = {}   # Access: per slot values
    cipher_lists: dict[str, list[Ciphertext]] = {}      # Encrypt outputs
    cipher: dict[str, Ciphertext] = {}                  # Aggregate / NoiseAdd outputs
    value: dict[str, Fraction | None] = {}              # Decrypt / Calculate outputs
    audit: list[AuditRecord] = []
    errors: dict[str, str] = {}
    eps_total = 0.0

    for nid in topo_order(dag):
        node = dag.nodes[nid]
        kind = node.kind
        if kind is OpKind.ACCESS:
            matched = access_matches(node, pool)
            per_client[nid] = [(i, pool.records[i]) for i in matched]
            audit.append(AuditRecord(nid, kind.value, pool.n, len(matched)))
        elif kind is OpKind.ENCRYPT:
            (src,) = preds[nid]
            rows = per_client[src]
            cipher_lists[nid] = [
                encrypt(pk, encode_fixed(slot_value(node.feature, r), scale, pk.n), crypto_rng) for _, r in rows]
            audit.append(AuditRecord(nid, kind.value, len(rows), len(rows)))
        elif kind is OpKind.AGGREGATE:
            items = [c for p in preds[nid] for c in cipher_lists[p]]
            acc = items[0] if items else encrypt(pk, 0, crypto_rng)
            for c in items[1:]:
                acc = add_cipher(pk, acc, c)
            cipher[nid] = acc
            audit.append(AuditRecord(nid, kind.value, len(items), 1))
        elif kind is OpKind.NOISE_ADD:
            (src,) = preds[nid]
            eps_total += node.dp_params.epsilon
            noise = sample_laplace(node.dp_params.scale, noise_rng) if noise_enabled else 0
            cipher[nid] = add_cipher(pk, cipher[src], encrypt(pk, encode_fixed(noise, scale, pk.n), crypto_rng))
            audit.append(AuditRecord(nid, kind.value, 1, 1))
        elif kind is OpKind.DECRYPT:
            (src,) = preds[nid]
            value[nid] = decode_fixed(decrypt(sk, cipher[src]), scale, pk.n)
            audit.append(AuditRecord(nid, kind.value, 1, 1))
        else:
            refs = calc.references(node.calc_expr)
            if any(value.get(r) is None for r in refs):
                value[nid] = None
                errors.setdefault(nid, "upstream-error")
            else:
                try:
                    value[nid] = Fraction(eval_calc(node.calc_expr, value))
                except CalcError as exc:
                    if strict:
                        raise ExecutionError(f"Calculate {nid!r}: {exc}", exc.code, nid,
                                             epsilon_sensitive=noise_enabled) from None
                    value[nid] = None
                    errors[nid] = exc.code
            audit.append(AuditRecord(nid, kind.value, len(refs), 1))

    answers = {a: value.get(a) for a in dag.answer_nodes}
    return ExecutionResult(answers, audit, seed, noise_enabled, eps_total, errors)


# plaintext oracle -------------------------------------------------------------

def _fixed(x, scale: int) -> Fraction:
    return decode_fixed(encode_fixed(x, scale), scale)


def _group_stat(stat: Intent, sub: SubQuery, pred: Predicate, rows, scale: int) -> tuple[str, Fraction]:
    rows = [r for r in rows if pred.holds(r)]
    if stat is Intent.COUNT:
        return naming.sum_id(ONE, pred), Fraction(len(rows))
    if stat is Intent.SUM:
        return naming.sum_id(sub.feature, pred), sum((_fixed(r[sub.feature], scale) for r in rows), Fraction(0))
    if stat is Intent.RATIO:
        num = sum((_fixed(r[sub.feature], scale) for r in rows), Fraction(0))
        den = sum((_fixed(r[sub.denominator], scale) for r in rows), Fraction(0))
        if den == 0:
            raise ExecutionError(f"ratio over {pred} has a zero denominator", "empty-group")
        return naming.ratio_id(sub.feature, sub.denominator, pred), num / den
    if not rows:
        raise ExecutionError(f"no client matches {pred}", "empty-group")
    if stat is Intent.MEAN:
        total = sum((_fixed(r[sub.feature], scale) for r in rows), Fraction(0))
        return naming.mean_id(sub.feature, pred), total / len(rows)
    hits = sum(1 for r in rows if sub.condition.holds(r))
    return naming.pct_id(sub.condition, pred), Fraction(hits, len(rows))


def plaintext_oracle(ir: QueryIR, pool: ClientPool, scale: int = DEFAULT_SCALE) -> dict[str, Fraction]:
    """Exact answers straight from the records, keyed by answer name.

    Numeric values are first rounded to the fixed-point grid, so results are
    comparable with an encrypted run at the same ``scale``.
    """
    rows = pool.records
    out: dict[str, Fraction] = {}
    for sub in ir.subqueries:
        if sub.intent is Intent.COMPARISON:
            a_name, a = _group_stat(sub.inner, sub, sub.groups[0], rows, scale)
            b_name, b = _group_stat(sub.inner, sub, sub.groups[1], rows, scale)
            out[a_name], out[b_name] = a, b
            out[naming.cmp_id(a_name, sub.groups[1])] = a - b
        elif sub.intent is Intent.GROUP_BY:
            for g in sub.groups:
                name, v = _group_stat(sub.inner, sub, g, rows, scale)
                out[name] = v
        else:
            name, v = _group_stat(sub.intent, sub, sub.filter, rows, scale)
            out[name] = v
    for c in ir.final_combine:
        left = out[primary_answer(ir.subqueries[c.left - 1])]
        right = out[primary_answer(ir.subqueries[c.right - 1])]
        if c.op == "ratio" and right == 0:
            raise ExecutionError(f"{c}: division by zero", "division-by-zero")
        out[naming.combine_id(c.op, c.left, c.right)] = left - right if COMBINE_OPS[c.op] == "-" else left / right
    return out
