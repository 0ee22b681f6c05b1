"""Chat-completion transport, prompt templates and output repair.

The endpoint speaks the common chat-completion JSON protocol::

    POST {endpoint}
    {"model": ..., "temperature": 0, "messages": [{"role": "user", "content": ...}]}
    -> {"choices": [{"message": {"content": "..."}}]}

The API key is read from ``FA_FORGE_LLM_KEY``.
"""

from __future__ import annotations

import json
import os
import re
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from typing import Any, Callable

from ..dag import FaDag, dag_from_dict
from ..errors import BackendError, FaForgeError, PlanError
from ..schema import Schema
from .ir import QueryIR, ir_from_dict

ENV_KEY = "FA_FORGE_LLM_KEY"
_FENCE = re.compile(r"```[A-Za-z0-9_-]*\s*\n?(.*?)```", re.S)


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    model: str = "gpt-4"
    api_key: str | None = None
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 2

    @classmethod
    def from_env(cls, endpoint: str, **kwargs) -> "LlmConfig":
        return cls(endpoint, api_key=os.environ.get(ENV_KEY), **kwargs)

    def __repr__(self) -> str:
        key = "set" if self.api_key else "unset"
        return f"LlmConfig({self.endpoint!r}, model={self.model!r}, key={key}, temperature={self.temperature})"


def build_request(prompt_text: str, config: LlmConfig, system: str | None = None) -> urllib.request.Request:
    messages = ([{"role": "system", "content": system}] if system else []) + [
        {"role": "user", "content": prompt_text}]
    body = json.dumps({"model": config.model, "temperature": config.temperature, "messages": messages})
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    return urllib.request.Request(config.endpoint, data=body.encode(), headers=headers, method="POST")


def llm_complete(prompt_text: str, config: LlmConfig, system: str | None = None) -> str:
    """Send one prompt; returns the model's raw text."""
    if not config.endpoint:
        raise BackendError("no LLM endpoint configured", "backend-unavailable")
    req = build_request(prompt_text, config, system)
    try:
        with urllib.request.urlopen(req, timeout=config.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        if exc.code == 429:
            raise BackendError(f"LLM quota exhausted (HTTP 429) at {config.endpoint}", "quota") from None
        raise BackendError(f"LLM endpoint returned HTTP {exc.code}", "http-status") from None
    except (urllib.error.URLError, socket.timeout, TimeoutError, ConnectionError) as exc:
        reason = getattr(exc, "reason", exc)
        raise BackendError(f"cannot reach LLM endpoint {config.endpoint}: {reason}", "network") from None
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise BackendError("LLM endpoint sent a non-JSON response", "bad-response") from None
    try:
        text = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise BackendError("LLM response has no choices[0].message.content", "bad-response") from None
    if not isinstance(text, str) or not text.strip():
        raise BackendError("LLM returned empty text", "bad-response")
    return text


# prompts --------------------------------------------------------------------

def load_prompt(name: str) -> str:
    return resources.files("fa_forge.data").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def render_prompt(template: str, **values: str) -> str:
    """Fill ``{{name}}`` placeholders; unknown placeholders are left as is."""
    return re.sub(r"\{\{\s*(\w+)\s*\}\}", lambda m: values.get(m.group(1), m.group(0)), template)


# repair ---------------------------------------------------------------------

def extract_json(text: str) -> Any:
    """First JSON object in ``text``, looking inside code fences first."""
    chunks = [m.group(1) for m in _FENCE.finditer(text)] + [text]
    dec = json.JSONDecoder()
    for chunk in chunks:
        for i, ch in enumerate(chunk):
            if ch != "{":
                continue
            try:
                obj, _ = dec.raw_decode(chunk, i)
            except json.JSONDecodeError:
                continue
            if isinstance(obj, dict):
                return obj
    raise PlanError("no JSON object found in model output", "parse-error")


def _validate_dag(obj: Any) -> FaDag:
    from ..validator import check_structure

    dag = dag_from_dict(obj)
    bad = check_structure(dag)
    if bad:
        raise PlanError("; ".join(v.message for v in bad), "invalid-dag")
    return dag


def validate_output(text: str, expected: str, schema: Schema | None = None) -> QueryIR | FaDag:
    obj = extract_json(text)
    if expected == "ir":
        return ir_from_dict(obj, schema)
    if expected == "dag":
        return _validate_dag(obj)
    raise ValueError(f"unknown expected schema {expected!r}")


def repair_llm_output(text: str, expected: str, *, schema: Schema | None = None,
                      config: LlmConfig | None = None, prompt: str | None = None,
                      complete: Callable[[str, LlmConfig], str] = llm_complete) -> QueryIR | FaDag:
    """Parse ``text`` as ``expected`` ("ir" or "dag"), re-prompting on failure.

    Without ``config``/``prompt`` there is nothing to re-prompt with, so the
    first failure is final. Raises :class:`PlanError` ``unrepairable``.
    """
    retries = config.max_retries if (config and prompt) else 0
    for attempt in range(retries + 1):
        try:
            return validate_output(text, expected, schema)
        except FaForgeError as exc:
            problem = str(exc)
        if attempt == retries:
            break
        text = complete(f"{prompt}\n\nYour previous answer was rejected: {problem}\n"
                        "Reply again with only the corrected JSON object.", config)
    raise PlanError(f"model output unrepairable after {retries} retries: {problem}", "unrepairable")
