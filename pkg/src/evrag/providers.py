"""LLM completion providers: scripted transcript replay and a remote chat API.

The provider surface is a single text-in/text-out call. Mock providers
replay answers from a transcript file keyed by "question_id/mode" so whole
benchmark runs are reproducible offline; the optional ``tag`` argument
carries that key and is ignored by real providers.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Protocol

import httpx

from .errors import TransportError, ValidationError

API_TOKEN_ENV = "EVR_API_TOKEN"
DEFAULT_CHAT_MODEL = "gpt-3.5-turbo-0613"
DEFAULT_CONTEXT_BUDGET = 16384


class LlmProvider(Protocol):
    name: str
    context_budget: int

    def complete(
        self,
        prompt: str,
        temperature: float = 0.0,
        max_output_tokens: int | None = None,
        tag: str | None = None,
    ) -> str: ...


class MockTranscriptProvider:
    """Replays canned answers from a {"question_id/mode": answer} mapping."""

    name = "mock-transcript"

    def __init__(self, transcripts: dict[str, str], context_budget: int = DEFAULT_CONTEXT_BUDGET):
        self.transcripts = dict(transcripts)
        self.context_budget = context_budget

    @classmethod
    def from_file(cls, path: str | Path, context_budget: int = DEFAULT_CONTEXT_BUDGET) -> "MockTranscriptProvider":
        with open(path, encoding="utf-8") as fh:
            transcripts = json.load(fh)
        if not isinstance(transcripts, dict):
            raise ValidationError("bad_transcript", f"{path} must hold a JSON object keyed by question_id/mode")
        return cls(transcripts, context_budget=context_budget)

    def complete(self, prompt, temperature=0.0, max_output_tokens=None, tag=None):
        if tag is None:
            raise ValidationError("missing_tag", "transcript provider needs a question_id/mode tag")
        try:
            return self.transcripts[tag]
        except KeyError:
            raise TransportError("transcript_missing", f"no transcript entry for {tag!r}")


class RemoteChatProvider:
    """OpenAI-style chat completion endpoint; token from EVR_API_TOKEN."""

    def __init__(
        self,
        base_url: str,
        model_name: str = DEFAULT_CHAT_MODEL,
        context_budget: int = DEFAULT_CONTEXT_BUDGET,
        timeout: float = 120.0,
        client=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.name = model_name
        self.context_budget = context_budget
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, prompt, temperature=0.0, max_output_tokens=None, tag=None):
        headers = {}
        token = os.environ.get(API_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.name,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        if max_output_tokens is not None:
            body["max_tokens"] = max_output_tokens
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
            resp.raise_for_status()
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise TransportError("llm_transport", f"completion request failed: {exc}") from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError("llm_bad_response", f"malformed completion response: {exc}") from exc
