"""Seeded synthetic census-style population (18 features incl. PII columns).

The real census extract with PII columns is not redistributable, so the
bundled corpus runs on this generator. The first rows cycle through every
enumerated value so each category is populated even in small pools.
"""

from __future__ import annotations

import csv
import random
from importlib import resources
from pathlib import Path

from .engine import ClientPool, make_pool
from .schema import Schema, load_schema

_FIRST = ["Alex", "Sam", "Jordan", "Taylor", "Morgan", "Riley", "Casey", "Jamie", "Robin", "Drew"]
_LAST = ["Smith", "Garcia", "Chen", "Okafor", "Novak", "Singh", "Haddad", "Kim", "Silva", "Brown"]


def bundled_schema(name: str = "adult_pii") -> Schema:
    with resources.as_file(resources.files("fa_forge.data").joinpath("schemas", f"{name}.json")) as p:
        return load_schema(p)


def synth_rows(n: int, seed: int = 0, schema: Schema | None = None) -> list[dict[str, object]]:
    schema = schema or bundled_schema()
    rng = random.Random(seed)
    edu_values = schema["education"].values
    rows = []
    for i in range(n):
        row: dict[str, object] = {}
        for f in schema:
            spec = schema[f]
            if spec.enumerable:
                vals = spec.values
                row[f] = vals[i % len(vals)] if i < 2 * len(vals) else rng.choice(vals)
        row["education_num"] = edu_values.index(row["education"]) + 1
        row["age"] = rng.randint(17, 90)
        row["hours_per_week"] = min(99, max(1, int(rng.gauss(41, 11))))
        row["capital_gain"] = 0 if rng.random() < 0.85 else rng.randint(100, 99999)
        row["capital_loss"] = 0 if rng.random() < 0.9 else rng.randint(100, 4356)
        base = 12000 + 4200 * int(row["education_num"]) + 350 * int(row["hours_per_week"])
        salary = max(0.0, min(500000.0, rng.gauss(base, base * 0.25)))
        row["salary"] = f"{salary:.2f}"
        row["name"] = f"{rng.choice(_FIRST)} {rng.choice(_LAST)}"
        row["dob"] = f"{2024 - int(row['age'])}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}"
        row["ssn"] = f"{rng.randint(100, 899):03d}-{rng.randint(1, 99):02d}-{rng.randint(1, 9999):04d}"
        row["zip"] = f"{rng.randint(1000, 99999):05d}"
        rows.append({f: row[f] for f in schema})
    return rows


def synth_pool(n: int, seed: int = 0, schema: Schema | None = None) -> ClientPool:
    schema = schema or bundled_schema()
    return make_pool(synth_rows(n, seed, schema), schema)


def write_csv(path: str | Path, rows: list[dict[str, object]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
