"""Coarse decomposition, template-based fine planning and LLM backends."""

from .ir import COMBINE_OPS, Combine, Intent, QueryIR, SubQuery, ir_from_dict, parse_ir, subquery_from_dict
from .templates import (
    DEFAULT_TEMPLATES,
    DagTemplate,
    default_templates,
    expected_answers,
    fine_plan,
    plan_all,
    primary_answer,
)

__all__ = [
    "COMBINE_OPS",
    "Combine",
    "DEFAULT_TEMPLATES",
    "DagTemplate",
    "Intent",
    "QueryIR",
    "SubQuery",
    "default_templates",
    "expected_answers",
    "fine_plan",
    "ir_from_dict",
    "parse_ir",
    "plan_all",
    "primary_answer",
    "subquery_from_dict",
]
