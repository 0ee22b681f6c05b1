"""Planner backends: structured IR, and three LLM-driven variants.

``ir``               the query arrives already decomposed (offline path)
``llm-hierarchical`` LLM coarse decomposition, then template fine planning
``llm-zero-shot``    one flat LLM call producing the whole DAG
``llm-one-shot``     as zero-shot, with one worked example in the prompt

Every backend's ``plan`` returns ``(QueryIR, [preliminary FaDag, ...])``.
"""

from __future__ import annotations

import json
from typing import Any, Mapping, Protocol

from ..dag import FaDag, encode_dag
from ..errors import BackendError, FaForgeError
from ..schema import FeatureSpec, Schema
from .ir import QueryIR, SubQuery, ir_from_dict, parse_ir
from .llm import ENV_KEY, LlmConfig, llm_complete, load_prompt, render_prompt, repair_llm_output
from .templates import DEFAULT_EPSILON, DEFAULT_TEMPLATES, plan_all, render_templates

BACKENDS = ("ir", "llm-zero-shot", "llm-one-shot", "llm-hierarchical")


class Backend(Protocol):
    name: str

    def plan(self, entry, schema: Schema, templates=None,
             epsilon: float = DEFAULT_EPSILON) -> tuple[QueryIR, list[FaDag]]: ...


def _entry_ir(entry, schema: Schema) -> QueryIR:
    raw = entry.ir if hasattr(entry, "ir") else entry
    if isinstance(raw, QueryIR):
        return raw
    if isinstance(raw, str):
        return parse_ir(raw, schema)
    return ir_from_dict(raw, schema)


def _text(entry) -> str:
    return entry.text if hasattr(entry, "text") else str(entry)


class IrBackend:
    name = "ir"

    def decompose(self, entry, schema: Schema) -> QueryIR:
        return _entry_ir(entry, schema)

    def plan(self, entry, schema, templates=None, epsilon=DEFAULT_EPSILON):
        ir = self.decompose(entry, schema)
        return ir, plan_all(ir, templates, schema, epsilon)


class LlmHierarchicalBackend:
    name = "llm-hierarchical"

    def __init__(self, config: LlmConfig, complete=llm_complete):
        self.config = config
        self.complete = complete

    def decompose(self, entry, schema: Schema) -> QueryIR:
        text = _text(entry)
        prompt = render_prompt(load_prompt("coarse"), schema=schema.describe(), query=text)
        reply = self.complete(prompt, self.config)
        ir = repair_llm_output(reply, "ir", schema=schema, config=self.config, prompt=prompt,
                               complete=self.complete)
        return QueryIR(text, ir.subqueries, ir.final_combine)

    def plan(self, entry, schema, templates=None, epsilon=DEFAULT_EPSILON):
        ir = self.decompose(entry, schema)
        return ir, plan_all(ir, templates, schema, epsilon)


_EXAMPLE_IR = {
    "subqueries": [
        {"intent": "Mean", "feature": "salary", "filter": True},
        {"intent": "Mean", "feature": "salary", "filter": [["role", "=", "professor"]]},
    ],
}


class LlmFlatBackend:
    """Single planner call; the reference IR is kept for optimization."""

    def __init__(self, config: LlmConfig, one_shot: bool = False, complete=llm_complete):
        self.config = config
        self.one_shot = one_shot
        self.complete = complete
        self.name = "llm-one-shot" if one_shot else "llm-zero-shot"

    def _prompt(self, text: str, schema: Schema) -> str:
        if not self.one_shot:
            return render_prompt(load_prompt("flat"), schema=schema.describe(), query=text)
        from ..optimizer import optimize

        demo_schema = Schema({"role": FeatureSpec("role", "categorical", ("professor", "phd", "other")),
                               "salary": FeatureSpec("salary", "numeric", bounds=(0, 300000))})
        demo_ir = ir_from_dict(_EXAMPLE_IR, demo_schema)
        demo, _ = optimize(plan_all(demo_ir, DEFAULT_TEMPLATES, demo_schema), demo_ir, demo_schema)
        return render_prompt(load_prompt("one_shot"), schema=schema.describe(), query=text,
                             example_query="average salary overall and of professors",
                             example_dag=encode_dag(demo, indent=1))

    def plan(self, entry, schema, templates=None, epsilon=DEFAULT_EPSILON):
        ir = _entry_ir(entry, schema)
        prompt = self._prompt(_text(entry), schema)
        reply = self.complete(prompt, self.config)
        dag = repair_llm_output(reply, "dag", config=self.config, prompt=prompt, complete=self.complete)
        return ir, [dag]


def make_backend(name: str, llm: LlmConfig | None = None, complete=llm_complete) -> Any:
    if name == "ir":
        return IrBackend()
    if name not in BACKENDS:
        raise BackendError(f"unknown backend {name!r}; choose from {', '.join(BACKENDS)}", "backend-unavailable")
    if llm is None or not llm.endpoint:
        raise BackendError(f"backend {name!r} needs an LLM endpoint and an API key in {ENV_KEY}",
                           "backend-unavailable")
    if name == "llm-hierarchical":
        return LlmHierarchicalBackend(llm, complete)
    return LlmFlatBackend(llm, one_shot=name == "llm-one-shot", complete=complete)


def coarse_decompose(query_text: str | Mapping[str, Any], backend: Any, schema: Schema) -> list[SubQuery]:
    """Single-intent sub-queries in order of appearance.

    With the ``ir`` backend ``query_text`` must be the structured IR (JSON text
    or decoded object); LLM backends take natural language.
    """
    if isinstance(backend, str):
        backend = make_backend(backend)
    if not hasattr(backend, "decompose"):
        raise BackendError(f"backend {backend.name!r} has no coarse planner", "backend-unavailable")
    try:
        return list(backend.decompose(query_text, schema).subqueries)
    except BackendError:
        raise
    except FaForgeError as exc:
        if exc.code == "unrepairable":
            raise FaForgeError(f"query could not be decomposed: {exc}", "undecomposable") from None
        raise


def suggest_optimized(dags: list[FaDag], ir: QueryIR, config: LlmConfig, schema: Schema,
                      complete=llm_complete) -> FaDag | None:
    """Ask the model for an optimized DAG; None unless it validates and
    still answers every sub-intent of ``ir``."""
    from ..validator import check_completeness

    prompt = render_prompt(load_prompt("optimizer"), query=ir.text,
                           dags=json.dumps([json.loads(encode_dag(d)) for d in dags], indent=1))
    try:
        dag = repair_llm_output(complete(prompt, config), "dag", config=config, prompt=prompt, complete=complete)
    except FaForgeError:
        return None
    return None if check_completeness(dag, ir) else dag


__all__ = [
    "BACKENDS",
    "IrBackend",
    "LlmFlatBackend",
    "LlmHierarchicalBackend",
    "coarse_decompose",
    "make_backend",
    "render_templates",
    "suggest_optimized",
]
