"""Operation counts, corpus runs and report tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .crypto import KeyPair
from .dag import FaDag, OpKind
from .engine import ClientPool, access_matches, execute, plaintext_oracle
from .errors import DataError, FaForgeError
from .optimizer import naive_plan, optimize
from .planner.ir import QueryIR, ir_from_dict
from .planner.templates import answer_ids
from .schema import Schema
from .validator import check_completeness, check_structure, completion_ratio

COLUMNS = ("Ratio", "Acce", "Enc", "Aggr", "DP", "Dec", "Cal")
_FIELDS = ("acce", "enc", "aggr", "dp", "dec", "cal")


@dataclass(frozen=True)
class OpCounts:
    acce: Any
    enc: Any
    aggr: Any
    dp: Any
    dec: Any
    cal: Any

    def __post_init__(self):
        if any(getattr(self, f) < 0 for f in _FIELDS):
            raise ValueError("operation counts must be nonnegative")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f) for f in _FIELDS)

    def to_dict(self) -> dict[str, float]:
        return {f: float(getattr(self, f)) for f in _FIELDS}

    @property
    def heavy(self) -> tuple:
        return self.acce, self.enc, self.aggr


def count_ops(dag: FaDag, pool: ClientPool) -> OpCounts:
    """Per-client means for Access/Encrypt/Aggregate, node counts for the rest."""
    if pool is None or pool.n == 0:
        raise DataError("operation counts need a nonempty pool", "empty-pool")
    n = pool.n
    matches = {a.id: len(access_matches(a, pool)) for a in dag.of_kind(OpKind.ACCESS)}
    acce = sum(matches.values())
    enc = sum(matches[a.id] * len(a.outputs) for a in dag.of_kind(OpKind.ACCESS))
    preds = dag.predecessor_map()
    aggr = 0
    for g in dag.of_kind(OpKind.AGGREGATE):
        for e in preds[g.id]:
            aggr += sum(matches.get(a, 0) for a in preds[e])
    return OpCounts(Fraction(acce, n), Fraction(enc, n), Fraction(aggr, n),
                    len(dag.of_kind(OpKind.NOISE_ADD)), len(dag.of_kind(OpKind.DECRYPT)),
                    len(dag.of_kind(OpKind.CALCULATE)))


def mean_counts(counts: Sequence[OpCounts]) -> OpCounts | None:
    if not counts:
        return None
    k = len(counts)
    return OpCounts(*(float(sum(Fraction(getattr(c, f)) for c in counts) / k) for f in _FIELDS))


# corpus --------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusEntry:
    id: str
    text: str
    ir: Mapping[str, Any]
    expected: Mapping[str, float] | None = None


def load_corpus(raw: str | Iterable[Mapping[str, Any]]) -> list[CorpusEntry]:
    """Parse the corpus JSON array (text or already-decoded)."""
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FaForgeError(f"invalid corpus JSON: {exc.msg}", "parse-error") from None
    if not isinstance(raw, list):
        raise FaForgeError("corpus must be a JSON array", "parse-error")
    out = []
    for i, e in enumerate(raw):
        if not isinstance(e, Mapping) or not {"id", "text", "ir"} <= set(e):
            raise FaForgeError(f"corpus[{i}] needs id, text and ir", "parse-error")
        out.append(CorpusEntry(str(e["id"]), e["text"], e["ir"], e.get("expected")))
    return out


@dataclass
class QueryOutcome:
    id: str
    complete: bool
    correct: bool | None = None
    counts: OpCounts | None = None
    violations: list[str] = field(default_factory=list)
    error: str | None = None
    dag: FaDag | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "complete": self.complete,
            "correct": self.correct,
            "counts": None if self.counts is None else self.counts.to_dict(),
            "violations": self.violations,
            "error": self.error,
        }


@dataclass
class ReportRow:
    method: str
    ratio: float
    means: OpCounts | None

    def cells(self) -> list[str]:
        if self.means is None:
            return ["-"] * 6
        return [_fmt(v) for v in self.means.as_tuple()]


@dataclass
class CorpusReport:
    dataset: str
    query_count: int
    rows: list[ReportRow]
    outcomes: dict[str, list[QueryOutcome]] = field(default_factory=dict, compare=False)

    def row(self, method: str) -> ReportRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "query_count": self.query_count,
            "rows": [{"method": r.method, "ratio": r.ratio,
                      "means": None if r.means is None else r.means.to_dict()} for r in self.rows],
            "outcomes": {m: [o.to_dict() for o in os] for m, os in self.outcomes.items()},
        }


def _fmt(v: float) -> str:
    return repr(float(v))


def run_query(entry: CorpusEntry, backend, use_optimizer: bool, pool: ClientPool, schema: Schema,
              keys: KeyPair | None = None, seed: int = 0, templates=None, epsilon: float = 1.0,
              run_engine: bool = True) -> QueryOutcome:
    """Plan, optionally optimize, validate, count and (noise off) execute one query."""
    try:
        ref = ir_from_dict(entry.ir, schema)
        ir, dags = backend.plan(entry, schema, templates=templates, epsilon=epsilon)
        dag = optimize(dags, ir, schema)[0] if use_optimizer else naive_plan(dags, ir)
    except FaForgeError as exc:
        return QueryOutcome(entry.id, False, error=f"{exc.code}: {exc}")
    bad = check_structure(dag) + check_completeness(dag, ref)
    out = QueryOutcome(entry.id, not bad, violations=[v.message for v in bad], dag=dag)
    out.counts = count_ops(dag, pool)
    if run_engine and out.complete:
        try:
            got = execute(dag, pool, keys, rng=seed).by_base()
            want = plaintext_oracle(ref, pool)
            out.correct = all(got.get(name) == want[name] for name in answer_ids(ref))
        except FaForgeError as exc:
            out.correct, out.error = False, f"{exc.code}: {exc}"
    return out


def summarize(method: str, outcomes: Sequence[QueryOutcome]) -> ReportRow:
    ratio = completion_ratio(o.complete for o in outcomes)
    done = [o.counts for o in outcomes if o.complete]
    means = mean_counts(done) if ratio >= Fraction(1, 2) else None
    return ReportRow(method, float(ratio), means)


def run_corpus(corpus: Sequence[CorpusEntry], backend, use_optimizer: bool, pool: ClientPool,
               config: Mapping[str, Any] | None = None, *, schema: Schema | None = None,
               method: str | None = None, dataset: str = "corpus") -> CorpusReport:
    """One report row for (backend, optimizer flag) over the whole corpus.

    ``config`` keys: ``keys``, ``seed``, ``templates``, ``epsilon``, ``run_engine``.
    """
    if not corpus:
        raise FaForgeError("corpus is empty", "empty-input")
    config = dict(config or {})
    schema = schema or pool.schema
    outcomes = [run_query(e, backend, use_optimizer, pool, schema,
                          keys=config.get("keys"), seed=config.get("seed", 0),
                          templates=config.get("templates"), epsilon=config.get("epsilon", 1.0),
                          run_engine=config.get("run_engine", True)) for e in corpus]
    method = method or f"{backend.name}{'' if use_optimizer else ' (no optimizer)'}"
    return CorpusReport(dataset, len(corpus), [summarize(method, outcomes)], {method: outcomes})


def combine_reports(reports: Sequence[CorpusReport]) -> CorpusReport:
    first = reports[0]
    rows = [r for rep in reports for r in rep.rows]
    outcomes = {m: o for rep in reports for m, o in rep.outcomes.items()}
    return CorpusReport(first.dataset, first.query_count, rows, outcomes)


# rendering -------------------------------------------------------------------

def render_report(report: CorpusReport, fmt: str = "markdown") -> str:
    if fmt == "markdown":
        head = f"Dataset: {report.dataset} ({report.query_count} queries)\n\n"
        lines = ["| Method | " + " | ".join(COLUMNS) + " |", "|---" * (len(COLUMNS) + 1) + "|"]
        for r in report.rows:
            cells = ["-"] * 6 if r.means is None else [f"{float(v):.2f}" for v in r.means.as_tuple()]
            lines.append(f"| {r.method} | {r.ratio * 100:.0f}% | " + " | ".join(cells) + " |")
        return head + "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Method", "Dataset", "Queries", *COLUMNS])
        for r in report.rows:
            w.writerow([r.method, report.dataset, report.query_count, _fmt(r.ratio), *r.cells()])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    raise FaForgeError(f"unknown report format {fmt!r}", "unknown-format")


def parse_report_csv(text: str) -> CorpusReport:
    rows, dataset, count = [], "", 0
    for rec in csv.DictReader(io.StringIO(text)):
        dataset, count = rec["Dataset"], int(rec["Queries"])
        vals = [rec[c] for c in COLUMNS[1:]]
        means = None if all(v == "-" for v in vals) else OpCounts(*(float(v) for v in vals))
        rows.append(ReportRow(rec["Method"], float(rec["Ratio"]), means))
    return CorpusReport(dataset, count, rows)
