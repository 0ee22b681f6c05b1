"""Dataset schema: feature names, types, enumerations and DP sensitivity bounds.

Schema files are JSON objects mapping each feature name to a spec::

    {"role":   {"type": "categorical", "values": ["professor", "phd", "other"]},
     "salary": {"type": "numeric", "bounds": [0, 400000], "sensitivity": 400000},
     "name":   {"type": "categorical"}}

A categorical feature without ``values`` is free text: it can be filtered with
``=``/``!=`` but is never enumerated for grouping or partitioning.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import DecodeError, SchemaViolation

CATEGORICAL = "categorical"
NUMERIC = "numeric"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    type: str
    values: tuple[str, ...] | None = None
    bounds: tuple[float, float] | None = None
    sensitivity: float | None = None

    @property
    def is_categorical(self) -> bool:
        return self.type == CATEGORICAL

    @property
    def is_numeric(self) -> bool:
        return self.type == NUMERIC

    @property
    def enumerable(self) -> bool:
        return self.is_categorical and self.values is not None

    def max_abs(self) -> float:
        """Per-client contribution bound used as the Laplace sensitivity."""
        if self.sensitivity is not None:
            return self.sensitivity
        if self.bounds is not None:
            return max(abs(self.bounds[0]), abs(self.bounds[1]))
        return 1.0

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"type": self.type}
        if self.values is not None:
            out["values"] = list(self.values)
        if self.bounds is not None:
            out["bounds"] = list(self.bounds)
        if self.sensitivity is not None:
            out["sensitivity"] = self.sensitivity
        return out


@dataclass(frozen=True)
class Schema:
    features: Mapping[str, FeatureSpec] = field(default_factory=dict)

    def __contains__(self, name: object) -> bool:
        return name in self.features

    def __getitem__(self, name: str) -> FeatureSpec:
        return self.features[name]

    def __iter__(self):
        return iter(self.features)

    def __len__(self) -> int:
        return len(self.features)

    def names(self) -> list[str]:
        return list(self.features)

    def to_dict(self) -> dict[str, Any]:
        return {name: spec.to_dict() for name, spec in self.features.items()}

    def describe(self) -> str:
        """Compact one-line-per-feature text used inside LLM prompts."""
        lines = []
        for name, spec in self.features.items():
            if spec.enumerable:
                lines.append(f"- {name} (categorical): {', '.join(spec.values)}")
            elif spec.is_categorical:
                lines.append(f"- {name} (categorical, free text)")
            else:
                lo, hi = spec.bounds if spec.bounds else ("?", "?")
                lines.append(f"- {name} (numeric, range {lo}..{hi})")
        return "\n".join(lines)


def schema_from_dict(raw: Mapping[str, Any]) -> Schema:
    if not isinstance(raw, Mapping):
        raise SchemaViolation("schema", "expected an object mapping feature names to specs")
    features: dict[str, FeatureSpec] = {}
    for name, spec in raw.items():
        where = f"schema.{name}"
        if not isinstance(spec, Mapping):
            raise SchemaViolation(where, "feature spec must be an object")
        ftype = spec.get("type")
        if ftype not in (CATEGORICAL, NUMERIC):
            raise SchemaViolation(f"{where}.type", f"unknown feature type {ftype!r}")
        values = spec.get("values")
        if values is not None:
            if ftype != CATEGORICAL or not isinstance(values, list) or not values:
                raise SchemaViolation(f"{where}.values", "values must be a nonempty list on a categorical feature")
            values = tuple(str(v) for v in values)
            if len(set(values)) != len(values):
                raise SchemaViolation(f"{where}.values", "duplicate values")
        bounds = spec.get("bounds")
        if bounds is not None:
            if ftype != NUMERIC or not isinstance(bounds, list) or len(bounds) != 2:
                raise SchemaViolation(f"{where}.bounds", "bounds must be [lo, hi] on a numeric feature")
            bounds = (bounds[0], bounds[1])
        sens = spec.get("sensitivity")
        if sens is not None and (not isinstance(sens, (int, float)) or sens <= 0):
            raise SchemaViolation(f"{where}.sensitivity", "sensitivity must be a positive number")
        features[name] = FeatureSpec(name, ftype, values, bounds, sens)
    return Schema(features)


def load_schema(path: str | Path) -> Schema:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid schema JSON in {path}: {exc.msg}", exc.lineno, exc.colno) from exc
    return schema_from_dict(raw)
