"""Chat-completion backends for expansion generation and refinement.

Every backend carries a `tag` recorded into expansion provenance. The
HTTP backend forwards decoding parameters verbatim; the stubs are
deterministic so offline pipelines are byte-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

from .backends import BackendError, Cassette, HttpBackend, ProtocolError
from .prompts import ChatMessage, GenerationConfig, PromptTemplates, DEFAULT_TEMPLATES


class EmptyGenerationError(BackendError):
    """Backend produced an empty completion for a non-empty prompt."""


class ChatBackend(Protocol):
    tag: str

    def complete(self, messages: Sequence[ChatMessage], config: GenerationConfig) -> str: ...


@dataclass
class HttpChatBackend:
    """Client for `POST /chat` carrying the decoding contract."""

    url: str
    tag: str = ""
    retries: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 4
    cassette: Cassette | None = None
    api_key: str | None = None
    _backend: HttpBackend = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.tag:
            self.tag = self.url
        self._backend = HttpBackend(
            self.url,
            retries=self.retries,
            backoff_s=self.backoff_s,
            max_in_flight=self.max_in_flight,
            cassette=self.cassette,
            api_key=self.api_key,
        )

    def complete(self, messages: Sequence[ChatMessage], config: GenerationConfig) -> str:
        payload = {
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "max_new_tokens": config.max_new_tokens,
            "num_beams": config.num_beams,
            "repetition_penalty": config.repetition_penalty,
            "no_repeat_ngram": config.no_repeat_ngram,
        }
        body = self._backend.post("/chat", payload)
        if not isinstance(body, dict) or "text" not in body:
            raise ProtocolError(f"malformed /chat response: {body!r:.200}")
        return str(body["text"])


def _last_user_query(
    messages: Sequence[ChatMessage], templates: PromptTemplates
) -> str:
    for message in reversed(messages):
        if message.role == "user":
            query = templates.extract_query(message.content)
            return query if query is not None else message.content
    raise ValueError("prompt contains no user message")


@dataclass
class EchoChatBackend:
    """Stub: answers with the query carried by the last user turn."""

    tag: str = "stub:echo"
    templates: PromptTemplates = DEFAULT_TEMPLATES

    def complete(self, messages: Sequence[ChatMessage], config: GenerationConfig) -> str:
        return _last_user_query(messages, self.templates)


@dataclass
class CannedChatBackend:
    """Stub: maps the query in the last user turn to a canned completion."""

    responses: Mapping[str, str]
    tag: str = "stub:canned"
    templates: PromptTemplates = DEFAULT_TEMPLATES

    def complete(self, messages: Sequence[ChatMessage], config: GenerationConfig) -> str:
        query = _last_user_query(messages, self.templates)
        if query not in self.responses:
            raise BackendError(f"no canned response for query {query!r}")
        return self.responses[query]


@dataclass
class FailingChatBackend:
    """Stub that always fails; exercises per-query degradation paths."""

    tag: str = "stub:failing"

    def complete(self, messages: Sequence[ChatMessage], config: GenerationConfig) -> str:
        raise BackendError("backend configured to fail")


def chat(
    backend: ChatBackend, messages: Sequence[ChatMessage], config: GenerationConfig
) -> str:
    """Run one completion; whitespace-trimmed, never empty."""
    text = backend.complete(messages, config).strip()
    if not text:
        raise EmptyGenerationError(f"backend {backend.tag!r} returned empty text")
    return text
