"""Filter predicates: conjunctions of atomic comparisons on record features.

The empty conjunction is the trivially-true predicate. Predicates are kept in a
normal form (atoms sorted, set literals sorted, duplicates dropped) so that two
predicates written in a different order compare and hash equal.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .errors import PlanError, SchemaViolation
from .schema import Schema

OPS = ("=", "!=", "<", "<=", ">", ">=", "in", "not in")
SET_OPS = ("in", "not in")
ORDER_OPS = ("<", "<=", ">", ">=")
_ALIASES = {"==": "=", "≠": "!=", "<>": "!=", "≤": "<=", "≥": ">=", "notin": "not in", "not_in": "not in"}
_OP_SLUG = {"=": "eq", "!=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge", "in": "in", "not in": "notin"}

_FEATURE_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_\-]*)\s*")
_OP_RE = re.compile(r"(not in|in|!=|<=|>=|==|<>|=|<|>|≠|≤|≥)\s*")
_AND_RE = re.compile(r"\s+and\s+|\s*&&?\s*")
_SAFE_VALUE = re.compile(r"^[A-Za-z0-9]+$")


def _value_key(value: Any) -> str:
    return json.dumps(value, sort_keys=True)


def normalize_op(op: str) -> str:
    op = _ALIASES.get(op, op)
    if op not in OPS:
        raise SchemaViolation("predicate.op", f"unknown comparator {op!r}")
    return op


@dataclass(frozen=True)
class Atom:
    feature: str
    op: str
    value: Any

    @classmethod
    def make(cls, feature: str, op: str, value: Any) -> "Atom":
        op = normalize_op(op)
        if op in SET_OPS:
            if isinstance(value, (str, bytes)) or not isinstance(value, Iterable):
                raise SchemaViolation("predicate.value", f"{op!r} needs a list literal")
            value = tuple(sorted(set(value), key=_value_key))
            if not value:
                raise SchemaViolation("predicate.value", f"{op!r} needs a nonempty list")
        elif isinstance(value, (list, tuple, dict)):
            raise SchemaViolation("predicate.value", f"{op!r} needs a scalar literal")
        return cls(feature, op, value)

    def sort_key(self) -> tuple[str, str, str]:
        return (self.feature, self.op, _value_key(list(self.value) if self.op in SET_OPS else self.value))

    def holds(self, record: Mapping[str, Any]) -> bool:
        x = record[self.feature]
        op, v = self.op, self.value
        if op == "=":
            return x == v
        if op == "!=":
            return x != v
        if op == "in":
            return x in v
        if op == "not in":
            return x not in v
        if op == "<":
            return x < v
        if op == "<=":
            return x <= v
        if op == ">":
            return x > v
        return x >= v

    def text(self) -> str:
        lit = list(self.value) if self.op in SET_OPS else self.value
        return f"{self.feature} {self.op} {json.dumps(lit)}"

    def to_json(self) -> list[Any]:
        lit = list(self.value) if self.op in SET_OPS else self.value
        return [self.feature, self.op, lit]

    def slug(self) -> tuple[str, bool]:
        """Identifier fragment plus whether it is lossless."""
        vals = self.value if self.op in SET_OPS else (self.value,)
        parts, lossless = [], True
        for v in vals:
            s = str(v)
            if isinstance(v, bool) or not _SAFE_VALUE.match(s):
                lossless = False
            parts.append(re.sub(r"[^A-Za-z0-9]+", "_", s).strip("_") or "x")
        return f"{self.feature}_{_OP_SLUG[self.op]}_{'_'.join(parts)}", lossless


@dataclass(frozen=True)
class Predicate:
    atoms: tuple[Atom, ...] = ()

    def __post_init__(self):
        uniq = {a.sort_key(): a for a in self.atoms}
        object.__setattr__(self, "atoms", tuple(uniq[k] for k in sorted(uniq)))

    @classmethod
    def true(cls) -> "Predicate":
        return cls(())

    @classmethod
    def of(cls, *atoms: tuple[str, str, Any]) -> "Predicate":
        return cls(tuple(Atom.make(*a) for a in atoms))

    @property
    def is_true(self) -> bool:
        return not self.atoms

    def __and__(self, other: "Predicate") -> "Predicate":
        return Predicate(self.atoms + other.atoms)

    def holds(self, record: Mapping[str, Any]) -> bool:
        return all(a.holds(record) for a in self.atoms)

    def features(self) -> set[str]:
        return {a.feature for a in self.atoms}

    def text(self) -> str:
        if self.is_true:
            return "true"
        return " and ".join(a.text() for a in self.atoms)

    def to_json(self) -> list[list[Any]]:
        return [a.to_json() for a in self.atoms]

    def slug(self) -> str:
        """Deterministic identifier fragment; hashed suffix when lossy."""
        if self.is_true:
            return "all"
        parts = [a.slug() for a in self.atoms]
        s = "_and_".join(p for p, _ in parts)
        if not all(ok for _, ok in parts):
            s += "_h" + hashlib.sha1(self.text().encode()).hexdigest()[:6]
        return s

    def without(self, feature: str) -> "Predicate":
        return Predicate(tuple(a for a in self.atoms if a.feature != feature))

    def only(self, feature: str) -> tuple[Atom, ...]:
        return tuple(a for a in self.atoms if a.feature == feature)

    def value_set(self, feature: str, universe: Iterable[str]) -> frozenset | None:
        """Values of a categorical ``feature`` admitted by this predicate.

        ``None`` when an ordering comparator on the feature makes the set
        undecidable from the enumeration alone.
        """
        allowed = set(universe)
        for a in self.only(feature):
            if a.op == "=":
                allowed &= {a.value}
            elif a.op == "!=":
                allowed -= {a.value}
            elif a.op == "in":
                allowed &= set(a.value)
            elif a.op == "not in":
                allowed -= set(a.value)
            else:
                return None
        return frozenset(allowed)

    def validate(self, schema: Schema) -> None:
        for a in self.atoms:
            if a.feature not in schema:
                raise PlanError(f"unknown feature {a.feature!r} in predicate", "unknown-feature")
            spec = schema[a.feature]
            if spec.is_categorical:
                if a.op in ORDER_OPS:
                    raise PlanError(f"comparator {a.op!r} on categorical feature {a.feature!r}", "schema-mismatch")
                if spec.values is not None:
                    lits = a.value if a.op in SET_OPS else (a.value,)
                    bad = [v for v in lits if v not in spec.values]
                    if bad:
                        raise PlanError(f"value(s) {bad} not in enumeration of {a.feature!r}", "schema-mismatch")
            else:
                lits = a.value if a.op in SET_OPS else (a.value,)
                if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in lits):
                    raise PlanError(f"numeric feature {a.feature!r} compared with non-number", "schema-mismatch")

    def __str__(self) -> str:
        return self.text()


def predicate_from_json(raw: Any, where: str = "predicate") -> Predicate:
    """Accept ``true``/``null``, a list of ``[feature, op, value]`` triples or
    ``{"feature","op","value"}`` objects, or the text form."""
    if raw is True or raw is None:
        return Predicate.true()
    if isinstance(raw, str):
        return parse_predicate(raw)
    if not isinstance(raw, list):
        raise SchemaViolation(where, "expected true, a list of atoms, or predicate text")
    atoms = []
    for i, item in enumerate(raw):
        if isinstance(item, Mapping):
            try:
                item = [item["feature"], item["op"], item["value"]]
            except KeyError as exc:
                raise SchemaViolation(f"{where}[{i}]", f"missing key {exc.args[0]!r}") from None
        if not isinstance(item, list) or len(item) != 3 or not isinstance(item[0], str):
            raise SchemaViolation(f"{where}[{i}]", "atom must be [feature, op, value]")
        if not isinstance(item[1], str):
            raise SchemaViolation(f"{where}[{i}].op", "comparator must be a string")
        atoms.append(Atom.make(item[0], item[1], item[2]))
    return Predicate(tuple(atoms))


def parse_predicate(text: str) -> Predicate:
    """Parse the text form, e.g. ``role = "phd" and hours_per_week > 40``."""
    text = text.strip()
    if text in ("", "true"):
        return Predicate.true()
    decoder = json.JSONDecoder()
    atoms, pos = [], 0
    while True:
        m = _FEATURE_RE.match(text, pos)
        if not m:
            raise SchemaViolation("predicate", f"expected a feature name at offset {pos} in {text!r}")
        feature, pos = m.group(1), m.end()
        m = _OP_RE.match(text, pos)
        if not m:
            raise SchemaViolation("predicate", f"expected a comparator at offset {pos} in {text!r}")
        op, pos = m.group(1), m.end()
        try:
            value, pos = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            # bare words are accepted as string literals
            m = re.compile(r"[^\s\]]+").match(text, pos)
            if not m:
                raise SchemaViolation("predicate", f"expected a literal at offset {pos} in {text!r}") from None
            value, pos = m.group(0), m.end()
        atoms.append(Atom.make(feature, op, value))
        if pos >= len(text):
            break
        m = _AND_RE.match(text, pos)
        if not m:
            raise SchemaViolation("predicate", f"expected 'and' at offset {pos} in {text!r}")
        pos = m.end()
    return Predicate(tuple(atoms))
