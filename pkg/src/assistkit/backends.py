"""Chat completion backends.

ChatBackend is the single seam through which every LLM-facing feature talks
to a model, so tests and offline runs can substitute scripted transcripts.
Transient failures are retried with exponential backoff (base 1 s, doubling,
jittered); after the attempt budget is spent BackendExhausted is raised.

Credentials come from the environment only:

    ASSIST_EVAL_ENDPOINT   chat completions URL
    ASSIST_EVAL_MODEL      model name sent in the payload
    ASSIST_EVAL_KEY        bearer token (optional)
"""

from __future__ import annotations

import os
import random
import time
from abc import ABC, abstractmethod
from typing import Callable, Sequence

from .errors import ToolkitError

ENV_ENDPOINT = "ASSIST_EVAL_ENDPOINT"
ENV_MODEL = "ASSIST_EVAL_MODEL"
ENV_KEY = "ASSIST_EVAL_KEY"

DEFAULT_ATTEMPTS = 3
DEFAULT_BACKOFF_BASE = 1.0

Message = dict  # {"role": "system"|"user"|"assistant", "content": str}


class TransientBackendError(ToolkitError):
    """A retryable failure (timeout, 5xx, connection reset)."""


class BackendExhausted(ToolkitError):
    """All retry attempts for one completion failed."""


class ChatBackend(ABC):
    """Produces one completion for a list of chat messages."""

    model_name: str = "unknown"

    @abstractmethod
    def complete(self, messages: Sequence[Message], temperature: float = 0.0) -> str: ...


class HttpChatBackend(ChatBackend):
    """OpenAI-style chat completions client.

    Wire contract: POST {"model", "messages", "temperature"} -> JSON with
    choices[0].message.content.  Network and 5xx errors surface as
    TransientBackendError so the retry wrapper can handle them.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        timeout: float = 120.0,
    ):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT, "")
        self.model_name = model or os.environ.get(ENV_MODEL, "")
        self._api_key = api_key if api_key is not None else os.environ.get(ENV_KEY, "")
        self._timeout = timeout
        if not self.endpoint or not self.model_name:
            raise ToolkitError(
                f"chat backend needs an endpoint and model; set {ENV_ENDPOINT} "
                f"and {ENV_MODEL} or pass them explicitly"
            )

    def complete(self, messages: Sequence[Message], temperature: float = 0.0) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            resp = requests.post(
                self.endpoint,
                json={
                    "model": self.model_name,
                    "messages": list(messages),
                    "temperature": temperature,
                },
                headers=headers,
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(f"request failed: {exc}") from exc
        if resp.status_code >= 500:
            raise TransientBackendError(f"server error {resp.status_code}")
        if resp.status_code != 200:
            raise ToolkitError(f"chat backend returned {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ToolkitError(f"malformed chat response: {exc}") from exc


class ScriptedBackend(ChatBackend):
    """Replays a fixed list of responses; used by tests and offline runs.

    Records every request in .requests as (messages, temperature).  Call
    indices listed in fail_at (0-based, counted over all calls including
    failing ones) raise TransientBackendError instead of answering.
    """

    model_name = "scripted"

    def __init__(
        self,
        responses: Sequence[str],
        *,
        loop: bool = False,
        fail_at: Sequence[int] = (),
    ):
        self._responses = list(responses)
        self._loop = loop
        self._fail_at = set(fail_at)
        self._given = 0
        self.calls = 0
        self.requests: list[tuple[list[Message], float]] = []

    def complete(self, messages: Sequence[Message], temperature: float = 0.0) -> str:
        call_index = self.calls
        self.calls += 1
        self.requests.append(([dict(m) for m in messages], temperature))
        if call_index in self._fail_at:
            raise TransientBackendError(f"scripted failure at call {call_index}")
        if not self._responses:
            raise ToolkitError("scripted backend has no responses")
        idx = self._given if not self._loop else self._given % len(self._responses)
        if idx >= len(self._responses):
            raise ToolkitError(
                f"scripted backend exhausted after {len(self._responses)} responses"
            )
        self._given += 1
        return self._responses[idx]


def complete_with_retry(
    backend: ChatBackend,
    messages: Sequence[Message],
    temperature: float = 0.0,
    attempts: int = DEFAULT_ATTEMPTS,
    backoff_base: float = DEFAULT_BACKOFF_BASE,
    rng: random.Random | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[str, int]:
    """Call the backend, retrying transient failures.

    Waits backoff_base * 2**k seconds before retry k+1, jittered by a factor
    in [0.5, 1.5].  Returns (text, retries_used).  Non-transient errors
    propagate immediately; exhausting the budget raises BackendExhausted.
    """
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    rng = rng or random.Random()
    last: TransientBackendError | None = None
    for attempt in range(attempts):
        try:
            return backend.complete(messages, temperature), attempt
        except TransientBackendError as exc:
            last = exc
            if attempt + 1 < attempts:
                delay = backoff_base * (2**attempt) * (0.5 + rng.random())
                sleep(delay)
    raise BackendExhausted(
        f"backend failed after {attempts} attempts: {last}"
    ) from last


def backend_from_spec(spec: str | None) -> ChatBackend:
    """Build a backend from a CLI spec string.

    None or "http" -> HttpChatBackend from environment variables;
    "scripted:PATH" -> ScriptedBackend replaying the lines of a JSON file
    holding a list of response strings.
    """
    if spec is None or spec == "http":
        return HttpChatBackend()
    if spec.startswith("scripted:"):
        import json

        path = spec.split(":", 1)[1]
        with open(path, "r", encoding="utf-8") as fh:
            responses = json.load(fh)
        if not isinstance(responses, list) or not all(
            isinstance(r, str) for r in responses
        ):
            raise ToolkitError(f"{path} must hold a JSON list of response strings")
        return ScriptedBackend(responses)
    raise ToolkitError(f"unknown backend spec {spec!r}")
