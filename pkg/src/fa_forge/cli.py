"""Command-line interface: plan, optimize, validate, run, bench, gen-keys.

Exit codes: 0 success, 2 invalid input or failed validation, 3 planner
backend unavailable (LLM endpoint, key or quota).
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .answerer import compose_answer, compose_with_llm
from .crypto import DEFAULT_KEY_BITS, keygen, keys_to_json, load_keys, mock_keygen
from .dag import FaDag, decode_dag, encode_dag
from .engine import execute, load_clients
from .errors import BackendError, FaForgeError
from .metrics import CorpusEntry, combine_reports, load_corpus, render_report, run_corpus
from .optimizer import naive_plan, optimize
from .planner.backends import BACKENDS, make_backend, suggest_optimized
from .planner.ir import QueryIR, parse_ir
from .planner.llm import ENV_KEY, LlmConfig
from .planner.templates import DEFAULT_EPSILON
from .schema import Schema, load_schema
from .synth import synth_pool
from .validator import check_completeness, check_structure

EXIT_OK, EXIT_INVALID, EXIT_BACKEND = 0, 2, 3


class InvalidInput(FaForgeError):
    code = "invalid-input"


@dataclass
class RunConfig:
    schema: Schema
    data: str | None
    keys: str | None
    key_bits: int
    mock_crypto: bool
    epsilon: float
    scale: int
    noise: bool
    seed: int
    llm: LlmConfig | None
    fmt: str

    def __post_init__(self):
        if self.noise and not self.epsilon > 0:
            raise InvalidInput("noise requires epsilon > 0")


def _bundled(kind: str, name: str) -> Path | None:
    for suffix in (".json", ""):
        p = resources.files("fa_forge.data").joinpath(kind, name + suffix)
        if p.is_file():
            return Path(str(p))
    return None


def resolve_schema(arg: str) -> Schema:
    path = Path(arg)
    if not path.is_file():
        path = _bundled("schemas", arg) or path
    if not path.is_file():
        raise InvalidInput(f"schema {arg!r} is neither a file nor a bundled schema")
    return load_schema(path)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc.strerror}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _llm_config(args) -> LlmConfig | None:
    endpoint = getattr(args, "llm_endpoint", None)
    if not endpoint:
        return None
    return LlmConfig.from_env(endpoint, model=args.llm_model, timeout=args.llm_timeout)


def _config(args) -> RunConfig:
    return RunConfig(resolve_schema(args.schema), getattr(args, "data", None), getattr(args, "keys", None),
                     getattr(args, "key_bits", DEFAULT_KEY_BITS), getattr(args, "mock_crypto", False),
                     args.epsilon, args.scale, getattr(args, "noise", False), args.seed, _llm_config(args),
                     getattr(args, "format", "markdown"))


def _backend(args, cfg: RunConfig):
    name = args.backend
    if name == "ir":
        return make_backend("ir")
    if cfg.llm is not None and not cfg.llm.api_key:
        raise BackendError(f"backend {name!r} needs an API key in {ENV_KEY}", "backend-unavailable")
    return make_backend(name, cfg.llm)


def _query(args, cfg: RunConfig) -> tuple[QueryIR, list[FaDag]]:
    """Structured IR from ``--ir`` or natural language via an LLM backend."""
    if args.ir:
        ir = parse_ir(_read(args.ir), cfg.schema)
        backend = _backend(args, cfg)
        return backend.plan(CorpusEntry("cli", ir.text, ir.to_dict()), cfg.schema, epsilon=cfg.epsilon)
    if args.nl:
        if args.backend != "llm-hierarchical":
            raise BackendError("natural-language input needs --backend llm-hierarchical and --llm-endpoint",
                               "backend-unavailable")
        return _backend(args, cfg).plan(args.nl, cfg.schema, epsilon=cfg.epsilon)
    raise InvalidInput("give --ir FILE or --nl TEXT")


def _keys(cfg: RunConfig):
    if cfg.keys:
        return load_keys(cfg.keys)
    if cfg.mock_crypto:
        return mock_keygen()
    return keygen(cfg.key_bits, random.Random(f"keys:{cfg.seed}"))


def _pool(args, cfg: RunConfig):
    if cfg.data:
        return load_clients(cfg.data, cfg.schema)
    if args.clients:
        return synth_pool(args.clients, cfg.seed, cfg.schema)
    raise InvalidInput("give --data CSV or --clients N (synthetic pool)")


# commands ---------------------------------------------------------------------

def cmd_plan(args) -> int:
    cfg = _config(args)
    ir, dags = _query(args, cfg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ir.json").write_text(ir.to_json() + "\n", encoding="utf-8")
        for k, d in enumerate(dags, 1):
            (out / f"dag_{k}.json").write_text(encode_dag(d, indent=2) + "\n", encoding="utf-8")
        print(f"wrote ir.json and {len(dags)} preliminary DAG file(s) to {out}")
    else:
        payload = {"ir": ir.to_dict(), "dags": [json.loads(encode_dag(d)) for d in dags]}
        _emit(json.dumps(payload, indent=2, sort_keys=True), None)
    return EXIT_OK


def _report_violations(violations) -> int:
    for v in violations:
        sys.stderr.write(v.to_json() + "\n")
    return EXIT_INVALID if violations else EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _config(args)
    ir = parse_ir(_read(args.ir), cfg.schema)
    dags = [decode_dag(_read(p)) for p in args.dag]
    if args.no_optimizer:
        dag, trace = naive_plan(dags, ir), None
    else:
        dag, trace = optimize(dags, ir, cfg.schema)
    if args.llm_suggest:
        if cfg.llm is None or not cfg.llm.api_key:
            raise BackendError(f"--llm-suggest needs --llm-endpoint and a key in {ENV_KEY}", "backend-unavailable")
        suggested = suggest_optimized(dags, ir, cfg.llm, cfg.schema)
        if suggested is not None:
            dag, trace = suggested, None
        else:
            sys.stderr.write("model suggestion rejected by the validator; kept the deterministic plan\n")
    if args.explain:
        payload = {"dag": json.loads(encode_dag(dag)), "trace": trace.to_dict() if trace else {"steps": []}}
        _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    else:
        _emit(encode_dag(dag, indent=2), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    text = _read(args.dag)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        decode_dag(text)  # raises with location
        raise
    violations = check_structure(raw)
    if args.ir and not violations:
        schema = resolve_schema(args.schema)
        violations += check_completeness(decode_dag(text), parse_ir(_read(args.ir), schema))
    if not violations:
        print("ok: no violations")
    return _report_violations(violations)


def cmd_run(args) -> int:
    cfg = _config(args)
    trace = None
    if args.dag:
        if not args.ir:
            raise InvalidInput("--dag needs --ir to phrase the answer")
        ir = parse_ir(_read(args.ir), cfg.schema)
        dag = decode_dag(_read(args.dag))
    else:
        ir, dags = _query(args, cfg)
        if args.no_optimizer:
            dag = naive_plan(dags, ir)
        else:
            dag, trace = optimize(dags, ir, cfg.schema)
    violations = check_structure(dag) or check_completeness(dag, ir)
    if violations:
        return _report_violations(violations)
    pool = _pool(args, cfg)
    result = execute(dag, pool, _keys(cfg), rng=cfg.seed, noise_enabled=cfg.noise, scale=cfg.scale, strict=False)
    answers = result.by_base()
    if cfg.llm is not None and args.llm_answer:
        answer = compose_with_llm(ir, answers, cfg.llm)
    else:
        answer = compose_answer(ir, answers)
    payload: dict[str, Any] = {"answer": answer, "result": result.to_dict()}
    if args.explain:
        payload["trace"] = trace.to_dict() if trace else {"steps": []}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    print(answer)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    corpus = load_corpus(_read(args.corpus))
    if not corpus:
        raise InvalidInput("corpus is empty")
    pool = _pool(args, cfg)
    backend = _backend(args, cfg)
    keys = None if args.key_bits is None else keygen(args.key_bits, random.Random(f"keys:{cfg.seed}"))
    base = {"keys": keys, "seed": cfg.seed, "epsilon": cfg.epsilon, "run_engine": not args.no_execute}
    name = Path(args.corpus).stem
    runs = []
    if args.ablation:
        runs.append(run_corpus(corpus, backend, True, pool, base, method="full pipeline", dataset=name))
        runs.append(run_corpus(corpus, backend, True, pool, {**base, "templates": {}},
                               method="w/o preliminary DAG knowledge", dataset=name))
        runs.append(run_corpus(corpus, backend, False, pool, base, method="w/o DAG optimizer", dataset=name))
    else:
        if args.compare or args.no_optimizer:
            runs.append(run_corpus(corpus, backend, False, pool, base, dataset=name))
        if not args.no_optimizer:
            runs.append(run_corpus(corpus, backend, True, pool, base, dataset=name))
    report = combine_reports(runs)
    _emit(render_report(report, cfg.fmt), args.out)
    if args.out:
        print(f"wrote {cfg.fmt} report to {args.out}")
    return EXIT_OK


def cmd_gen_keys(args) -> int:
    kp = keygen(args.bits, random.Random(args.seed) if args.seed is not None else None)
    Path(args.out).write_text(keys_to_json(kp) + "\n", encoding="utf-8")
    os.chmod(args.out, 0o600)
    print(f"wrote {args.bits}-bit key pair {kp.public.fingerprint} to {args.out}")
    return EXIT_OK


# parser -------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", default="adult_pii", help="schema file or bundled name (adult_pii, university)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="per-NoiseAdd privacy budget")
    p.add_argument("--scale", type=int, default=100, help="fixed-point scale")
    p.add_argument("--out", help="output path")


def _planning(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--ir", help="structured IR JSON file")
    src.add_argument("--nl", help="natural-language query (needs an LLM backend)")
    p.add_argument("--backend", choices=BACKENDS, default="ir")
    p.add_argument("--llm-endpoint", help=f"chat-completion URL; key read from {ENV_KEY}")
    p.add_argument("--llm-model", default="gpt-4")
    p.add_argument("--llm-timeout", type=float, default=30.0)


def _data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="client CSV (header row = schema features)")
    p.add_argument("--clients", type=int, help="use a synthetic pool of N clients instead of --data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fa-forge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="decompose a query and write preliminary DAGs")
    _common(p)
    _planning(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("optimize", help="merge preliminary DAGs into one optimized DAG")
    _common(p)
    p.add_argument("--ir", required=True)
    p.add_argument("--dag", nargs="+", required=True, help="preliminary DAG files")
    p.add_argument("--explain", action="store_true", help="include the rewrite trace")
    p.add_argument("--no-optimizer", action="store_true", help="plain union plus implied combines")
    p.add_argument("--llm-suggest", action="store_true",
                   help="ask the model for an optimized DAG; used only if it validates")
    p.add_argument("--llm-endpoint")
    p.add_argument("--llm-model", default="gpt-4")
    p.add_argument("--llm-timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("validate", help="check a DAG's structure (and completeness with --ir)")
    p.add_argument("--dag", required=True)
    p.add_argument("--ir")
    p.add_argument("--schema", default="adult_pii")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="plan, optimize and execute; print the answer")
    _common(p)
    _planning(p)
    _data(p)
    p.add_argument("--dag", help="execute this DAG instead of planning (needs --ir)")
    p.add_argument("--noise", action="store_true", help="add Laplace noise (default off)")
    key = p.add_mutually_exclusive_group()
    key.add_argument("--keys", help="key file from gen-keys")
    key.add_argument("--key-bits", type=int, default=DEFAULT_KEY_BITS)
    key.add_argument("--mock-crypto", action="store_true", help="identity encryption (fast)")
    p.add_argument("--no-optimizer", action="store_true")
    p.add_argument("--explain", action="store_true", help="include the rewrite trace in the JSON")
    p.add_argument("--llm-answer", action="store_true", help="phrase the answer with the LLM")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run a query corpus and print a report table")
    _common(p)
    _data(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--backend", choices=BACKENDS, default="ir")
    p.add_argument("--llm-endpoint")
    p.add_argument("--llm-model", default="gpt-4")
    p.add_argument("--llm-timeout", type=float, default=30.0)
    p.add_argument("--no-optimizer", action="store_true")
    p.add_argument("--compare", action="store_true", help="also report the no-optimizer row")
    p.add_argument("--ablation", action="store_true", help="full / w/o templates / w/o optimizer rows")
    p.add_argument("--key-bits", type=int, default=None, help="Paillier key size (default: mock scheme)")
    p.add_argument("--no-execute", action="store_true", help="skip execution and oracle checks")
    p.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-keys", help="generate a Paillier key pair file")
    p.add_argument("--bits", type=int, default=2048)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_keys)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendError as exc:
        sys.stderr.write(f"error [{exc.code}]: {exc}\n")
        return EXIT_BACKEND
    except FaForgeError as exc:
        sys.stderr.write(json.dumps({"code": exc.code, "message": str(exc)}) + "\n")
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
