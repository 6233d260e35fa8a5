"""Uniform completion interface over scripted, record/replay, and live backends.

Every completion flows through :class:`Gateway`, which appends one JSON-lines
record per call to the recording log regardless of backend, so any run can be
replayed later with :class:`ReplayBackend`.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Protocol

log = logging.getLogger(__name__)


class GatewayError(RuntimeError):
    pass


class NoMatchingRule(GatewayError):
    pass


class ReplayExhausted(GatewayError):
    pass


class BackendUnavailable(GatewayError):
    """Planner-facing failure: the backend can't produce a completion now."""


class TransportError(BackendUnavailable):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    node_name: str
    system: str
    instructions: str
    rendered_observation: str
    max_tokens: int = 1024
    deterministic: bool = True


def request_hash(request: CompletionRequest) -> str:
    """Replay key: node name + rendered observation. Decoding params excluded so
    recordings survive decoding-config tweaks."""
    digest = hashlib.sha256()
    digest.update(request.node_name.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(request.rendered_observation.encode("utf-8"))
    return digest.hexdigest()


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


class Gateway:
    """Dispatch to a backend and record every exchange."""

    def __init__(self, backend: Backend, recording_path=None):
        self.backend = backend
        self.recording_path = recording_path
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> str:
        response = self.backend.complete(request)
        record = {
            "request_hash": request_hash(request),
            "node_name": request.node_name,
            "response_text": response,
        }
        with self._lock:
            self.records.append(record)
            if self.recording_path is not None:
                with open(self.recording_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")
        return response


def parse_rendered_observation_fields(rendered: str) -> dict[str, str]:
    """Best-effort field map from a canonically rendered observation.

    Used by scripted-rule matching; the chat history block is folded into one
    'chat_history' entry.
    """
    fields: dict[str, str] = {}
    current: str | None = None
    for line in rendered.splitlines():
        if line.startswith(("- ", "  ")) and current:
            fields[current] = fields[current] + "\n" + line
            continue
        head, sep, tail = line.partition(":")
        if sep and head and " " not in head.strip():
            current = head.strip()
            fields[current] = tail.strip()
        elif current:
            fields[current] = fields[current] + "\n" + line
    return fields


@dataclass
class ScriptedRule:
    """Ordered-match canned response. First matching rule wins; `once` rules are
    consumed and never match again."""

    node_name: str  # exact node name, or "*" for any
    response: str
    contains: tuple[tuple[str, str], ...] = ()
    equals: tuple[tuple[str, str], ...] = ()
    once: bool = False
    used: bool = field(default=False, compare=False)

    def matches(self, request: CompletionRequest, fields: dict[str, str]) -> bool:
        if self.once and self.used:
            return False
        if self.node_name not in ("*", request.node_name):
            return False
        for name, needle in self.contains:
            if needle not in fields.get(name, ""):
                return False
        for name, expected in self.equals:
            if fields.get(name) != expected:
                return False
        return True


class ScriptedBackend:
    def __init__(self, rules: list[ScriptedRule]):
        self.rules = list(rules)

    def complete(self, request: CompletionRequest) -> str:
        fields = parse_rendered_observation_fields(request.rendered_observation)
        for rule in self.rules:
            if rule.matches(request, fields):
                rule.used = True
                return rule.response
        raise NoMatchingRule(
            f"no rule (and no catch-all) for node {request.node_name!r}"
        )


class ReplayBackend:
    """Replays a recording log: per request hash, responses come back in the
    order they were recorded."""

    def __init__(self, recording_path):
        self._queues: dict[str, list[str]] = {}
        with open(recording_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                self._queues.setdefault(record["request_hash"], []).append(
                    record["response_text"]
                )

    def complete(self, request: CompletionRequest) -> str:
        queue = self._queues.get(request_hash(request))
        if not queue:
            raise ReplayExhausted(
                f"no recorded response left for node {request.node_name!r}"
            )
        return queue.pop(0)


BASE_URL_ENV = "SOUSCHEF_LLM_BASE_URL"
API_KEY_ENV = "SOUSCHEF_LLM_API_KEY"
MODEL_ENV = "SOUSCHEF_LLM_MODEL"


class LiveBackend:
    """Chat-completion HTTP backend. Endpoint and credential come from env vars;
    request/response bodies are logged with the credential redacted."""

    def __init__(self, base_url: str | None = None, api_key: str | None = None, model: str | None = None, timeout: float = 60.0):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV, "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.model = model or os.environ.get(MODEL_ENV, "gpt-4")
        self.timeout = timeout
        if not self.base_url:
            raise BackendUnavailable(f"live backend needs {BASE_URL_ENV}")

    def complete(self, request: CompletionRequest) -> str:
        import httpx

        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {
                    "role": "user",
                    "content": request.instructions
                    + "\n\nCurrent state of the world:\n"
                    + request.rendered_observation,
                },
            ],
            "temperature": 0 if request.deterministic else 1,
            "max_tokens": request.max_tokens,
        }
        log.info("live request %s: %s", request.node_name, json.dumps(body))
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers={"Authorization": "Bearer " + self.api_key},
                timeout=self.timeout,
            )
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        payload = response.json()
        log.info("live response %s: %s", request.node_name, json.dumps(payload))
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
