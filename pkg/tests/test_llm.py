from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from fa_forge.answerer import compose_answer, compose_with_llm
from fa_forge.dag import encode_dag
from fa_forge.errors import BackendError, PlanError
from fa_forge.optimizer import optimize
from fa_forge.planner.backends import LlmFlatBackend, make_backend
from fa_forge.planner.llm import LlmConfig, extract_json, llm_complete, render_prompt, repair_llm_output
from fa_forge.validator import check_structure


class FakeChat:
    """Local chat-completion endpoint serving queued replies."""

    def __init__(self):
        self.replies: list[tuple[int, str]] = []
        self.requests: list[dict] = []
        fake = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                fake.requests.append({"body": body, "auth": self.headers.get("Authorization")})
                status, text = fake.replies.pop(0) if fake.replies else (200, "ok")
                payload = json.dumps({"choices": [{"message": {"content": text}}]}).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}/v1/chat/completions"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def config(self, **kw) -> LlmConfig:
        return LlmConfig(self.url, api_key="test-key", **kw)


@pytest.fixture
def chat():
    fake = FakeChat()
    yield fake
    fake.server.shutdown()


def test_request_shape_and_reply(chat):
    chat.replies.append((200, "hello there"))
    assert llm_complete("hi", chat.config()) == "hello there"
    req = chat.requests[0]
    assert req["body"]["temperature"] == 0
    assert req["body"]["messages"][-1] == {"role": "user", "content": "hi"}
    assert req["auth"] == "Bearer test-key"


def test_quota_and_network_errors(chat):
    chat.replies.append((429, ""))
    with pytest.raises(BackendError) as exc:
        llm_complete("hi", chat.config())
    assert exc.value.code == "quota"
    with pytest.raises(BackendError) as exc:
        llm_complete("hi", LlmConfig("http://127.0.0.1:9/none", timeout=0.5))
    assert exc.value.code == "network"


def test_key_never_in_repr():
    assert "secret-value" not in repr(LlmConfig("http://x", api_key="secret-value"))


def test_extract_json_variants():
    assert extract_json('```json\n{"a": 1}\n```') == {"a": 1}
    assert extract_json('Sure! The plan follows. {"b": [1, 2]}') == {"b": [1, 2]}
    with pytest.raises(PlanError):
        extract_json("no json here")


def test_render_prompt_fills_known_placeholders():
    assert render_prompt("{{a}} and {{ b }} and {{c}}", a="1", b="2") == "1 and 2 and {{c}}"


def test_unknown_kind_reprompts_once_then_gives_up(chat):
    bad = json.dumps({"nodes": {"x": {"kind": "Compress"}}, "edges": [], "answer_nodes": ["x"]})
    chat.replies.append((200, bad))
    with pytest.raises(PlanError) as exc:
        repair_llm_output(bad, "dag", config=chat.config(max_retries=1), prompt="plan it")
    assert exc.value.code == "unrepairable"
    assert len(chat.requests) == 1
    assert "rejected" in chat.requests[0]["body"]["messages"][-1]["content"]


def test_repair_accepts_corrected_answer(chat, gap_dags):
    good = encode_dag(gap_dags[0])
    chat.replies.append((200, "fixed:\n```json\n" + good + "\n```"))
    dag = repair_llm_output("garbage", "dag", config=chat.config(), prompt="plan it")
    assert encode_dag(dag) == good


def test_flat_backend_over_http(chat, gap_ir, gap_dags, uni_schema):
    from fa_forge.metrics import CorpusEntry

    reply = encode_dag(optimize(gap_dags, gap_ir, uni_schema)[0])
    chat.replies.append((200, reply))
    backend = make_backend("llm-one-shot", chat.config())
    assert isinstance(backend, LlmFlatBackend)
    ir, [dag] = backend.plan(CorpusEntry("q", gap_ir.text, gap_ir.to_dict()), uni_schema)
    assert check_structure(dag) == []
    assert "example" in chat.requests[0]["body"]["messages"][-1]["content"].lower()


def test_answerer_falls_back_when_numbers_change(chat, gap_ir):
    answers = {"mean_salary__all": 10, "mean_salary__role_eq_professor": 20,
               "mean_salary__role_eq_phd": 5, "combine_diff_2_3": 15}
    chat.replies.append((200, "Salaries are around 10k."))
    assert compose_with_llm(gap_ir, answers, chat.config()) == compose_answer(gap_ir, answers)
    verbatim = "Overall 10.0; professors 20.0; PhD 5.0; gap 15.0."
    chat.replies.append((200, verbatim))
    assert compose_with_llm(gap_ir, answers, chat.config()) == verbatim
