"""Acceptance suite: eight end-to-end criteria, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even under output capture.
"""

from __future__ import annotations

import math
import random
import statistics
import time
from fractions import Fraction

import pytest

from fa_forge import cli
from fa_forge.crypto import add_cipher, decrypt, encrypt, keygen
from fa_forge.dag import encode_dag
from fa_forge.engine import execute, plaintext_oracle
from fa_forge.metrics import OpCounts, count_ops, run_corpus
from fa_forge.optimizer import disjoint_union, optimize
from fa_forge.planner.backends import IrBackend
from fa_forge.planner.ir import ir_from_dict
from fa_forge.planner.templates import answer_ids, plan_all
from fa_forge.validator import check_structure

from conftest import CORPUS, FIXTURES
from mutations import KINDS, mutate

ORACLE_KEY_BITS = 512


@pytest.fixture
def verdict(capsys):
    def report(n: int, name: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n} ({name}): {detail}")
        assert ok, detail

    return report


def test_c1_homomorphic_addition(verdict):
    rng = random.Random(2024)
    start = time.perf_counter()
    cases = bad = 0
    for k in range(25):
        kp = keygen(64, random.Random(k))
        half = kp.public.n // 2
        for _ in range(40):
            a, b = rng.randrange(half), rng.randrange(half)
            c = add_cipher(kp.public, encrypt(kp.public, a, rng), encrypt(kp.public, b, rng))
            bad += decrypt(kp.secret, c) != a + b
            cases += 1
    elapsed = time.perf_counter() - start
    verdict(1, "AHE correctness", cases >= 1000 and bad == 0 and elapsed < 10,
            f"{cases} cases, {bad} mismatches, {elapsed:.2f}s (limit 10s)")


def _fixture_dags(uni_schema, gap_ir, corpus, adult_schema):
    dags = plan_all(gap_ir, None, uni_schema)
    dags.append(optimize(dags, gap_ir, uni_schema)[0])
    for entry in corpus:
        ir, prelim = IrBackend().plan(entry, adult_schema)
        dags.extend(prelim)
        dags.append(optimize(prelim, ir, adult_schema)[0])
    return dags


def test_c2_validator_mutation_suite(verdict, uni_schema, gap_ir, corpus, adult_schema):
    start = time.perf_counter()
    dags = _fixture_dags(uni_schema, gap_ir, corpus, adult_schema)
    false_pos = sum(bool(check_structure(d)) for d in dags)
    tried = caught = 0
    for i, dag in enumerate(dags):
        raw = dag.to_dict()
        for kind in KINDS:
            for s in range(3):
                mutant = mutate(raw, kind, random.Random(f"{i}:{kind}:{s}"))
                if mutant is None:
                    continue
                tried += 1
                caught += bool(check_structure(mutant))
    elapsed = time.perf_counter() - start
    verdict(2, "validator mutation suite", caught == tried and false_pos == 0 and elapsed < 5,
            f"{caught}/{tried} mutants flagged over {len(dags)} DAGs, {false_pos} false positives, "
            f"{elapsed:.2f}s (limit 5s)")


def test_c3_oracle_equivalence(verdict, corpus, adult_schema, adult_pool):
    start = time.perf_counter()
    keys = keygen(ORACLE_KEY_BITS, random.Random(3))
    mismatched = []
    for entry in corpus:
        ir, dags = IrBackend().plan(entry, adult_schema)
        got = execute(optimize(dags, ir, adult_schema)[0], adult_pool, keys, rng=0).by_base()
        want = plaintext_oracle(ir, adult_pool, 100)
        if any(got.get(k) != want[k] for k in answer_ids(ir)):
            mismatched.append(entry.id)
    elapsed = time.perf_counter() - start
    verdict(3, "oracle equivalence", not mismatched and len(corpus) == 20 and elapsed < 60,
            f"{len(corpus) - len(mismatched)}/{len(corpus)} exact on {adult_pool.n} clients with "
            f"{ORACLE_KEY_BITS}-bit Paillier, {elapsed:.1f}s (limit 60s)")


def test_c4_gap_operation_counts(verdict, uni_schema, uni_pool, gap_ir):
    dags = plan_all(gap_ir, None, uni_schema)
    naive = count_ops(disjoint_union(dags), uni_pool)
    opt = count_ops(optimize(dags, gap_ir, uni_schema)[0], uni_pool)
    want_naive = OpCounts(Fraction(3, 2), 3, 3, 6, 6, 3)
    want_opt = OpCounts(1, 2, 2, 6, 6, 6)
    verdict(4, "salary-gap example counts", naive == want_naive and opt == want_opt,
            f"naive {naive.to_dict()} optimized {opt.to_dict()}")


def test_c5_optimizer_trend(verdict, corpus, adult_schema, adult_pool):
    cfg = {"run_engine": False}
    off = run_corpus(corpus, IrBackend(), False, adult_pool, cfg, schema=adult_schema).rows[0]
    on = run_corpus(corpus, IrBackend(), True, adult_pool, cfg, schema=adult_schema).rows[0]
    ok = (on.ratio == 1.0 and off.means is not None and on.means is not None
          and all(a < b for a, b in zip(on.means.heavy, off.means.heavy))
          and on.means.cal > off.means.cal)
    detail = (f"ratio {on.ratio:.2f}; acce/enc/aggr {[round(float(x), 3) for x in off.means.heavy]} -> "
              f"{[round(float(x), 3) for x in on.means.heavy]}; cal {float(off.means.cal):.2f} -> "
              f"{float(on.means.cal):.2f}")
    verdict(5, "optimizer trend", ok, detail)


def test_c6_dp_noise_statistics(verdict, uni_schema, uni_pool):
    ir = ir_from_dict({"subqueries": [{"intent": "Count", "filter": [["role", "=", "phd"]]}]}, uni_schema)
    dag = optimize(plan_all(ir, None, uni_schema, epsilon=1.0), ir, uni_schema)[0]
    [(noise_node, body)] = [(k, v) for k, v in dag.to_dict()["nodes"].items() if v["kind"] == "NoiseAdd"]
    assert body["dp_params"] == {"epsilon": 1.0, "sensitivity": 1.0}, noise_node
    name = answer_ids(ir)[0]
    truth = plaintext_oracle(ir, uni_pool)[name]
    draws = [float(execute(dag, uni_pool, None, rng=s, noise_enabled=True).by_base()[name]) for s in range(1000)]
    mean, std = statistics.fmean(draws), statistics.stdev(draws)
    rel = abs(std - math.sqrt(2)) / math.sqrt(2)
    verdict(6, "DP statistics", rel <= 0.05 and abs(mean - float(truth)) <= 0.1,
            f"std {std:.4f} vs sqrt(2) ({rel * 100:.2f}% off, limit 5%), mean {mean:.4f} vs oracle {float(truth)}")


def test_c7_deterministic_artifacts(verdict, tmp_path):
    fixtures = ["--schema", "university", "--ir", str(FIXTURES / "salary_gap_ir.json"),
                "--data", str(FIXTURES / "university_n10.csv")]
    outs = []
    for k in range(2):
        run_out, bench_out = tmp_path / f"run{k}.json", tmp_path / f"bench{k}.json"
        assert cli.main(["run", *fixtures, "--noise", "--seed", "11", "--explain", "--key-bits", "256",
                         "--out", str(run_out)]) == 0
        assert cli.main(["bench", "--corpus", str(CORPUS), "--clients", "200", "--seed", "11",
                         "--format", "json", "--compare", "--out", str(bench_out)]) == 0
        outs.append((run_out.read_bytes(), bench_out.read_bytes()))
    same = outs[0] == outs[1]
    verdict(7, "determinism", same, "run and bench JSON byte-identical across repeats" if same
            else "artifacts differ between identical invocations")


def test_c8_idempotence_and_validity(verdict, corpus, adult_schema):
    not_idem, invalid = [], []
    for entry in corpus:
        ir, dags = IrBackend().plan(entry, adult_schema)
        once = optimize(dags, ir, adult_schema)[0]
        twice = optimize([once], ir, adult_schema)[0]
        if encode_dag(once) != encode_dag(twice):
            not_idem.append(entry.id)
        if check_structure(once):
            invalid.append(entry.id)
    verdict(8, "idempotence and validity", not not_idem and not invalid,
            f"{len(corpus)} queries; non-idempotent {not_idem or 'none'}; invalid {invalid or 'none'}")
