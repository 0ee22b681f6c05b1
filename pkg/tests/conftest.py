from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import pytest

from fa_forge.engine import load_clients
from fa_forge.metrics import load_corpus
from fa_forge.planner.ir import parse_ir
from fa_forge.planner.templates import plan_all
from fa_forge.synth import bundled_schema, synth_pool

DATA = Path(str(resources.files("fa_forge.data")))
FIXTURES = DATA / "fixtures"
CORPUS = DATA / "corpus" / "adult_pii_queries.json"


@pytest.fixture(scope="session")
def uni_schema():
    return bundled_schema("university")


@pytest.fixture(scope="session")
def adult_schema():
    return bundled_schema("adult_pii")


@pytest.fixture(scope="session")
def uni_pool(uni_schema):
    return load_clients(FIXTURES / "university_n10.csv", uni_schema)


@pytest.fixture(scope="session")
def gap_ir(uni_schema):
    return parse_ir((FIXTURES / "salary_gap_ir.json").read_text(), uni_schema)


@pytest.fixture
def gap_dags(gap_ir, uni_schema):
    return plan_all(gap_ir, None, uni_schema)


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(CORPUS.read_text())


@pytest.fixture(scope="session")
def adult_pool(adult_schema):
    return synth_pool(1000, 0, adult_schema)


@pytest.fixture(scope="session")
def small_adult_pool(adult_schema):
    return synth_pool(120, 7, adult_schema)


def dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
