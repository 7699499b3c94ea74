"""Pointwise passage reranker clients (used offline during harvesting).

Backends: an HTTP endpoint speaking `POST /rerank`, a score-file stub
for replaying precomputed scores, and a hash stub for deterministic
tests. All return one finite score per candidate, in candidate order;
chunking requests never changes any candidate's score.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .backends import Cassette, HttpBackend, ProtocolError


@dataclass(frozen=True)
class RerankRequest:
    query_text: str
    candidates: tuple[tuple[str, str], ...]  # (doc_id, text)
    query_id: str | None = None  # provenance; used by the score-file stub only

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("rerank request needs at least one candidate")
        if any(not text for _, text in self.candidates):
            raise ValueError("candidate texts must be non-empty")


@dataclass(frozen=True)
class RerankResponse:
    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(not math.isfinite(s) for s in self.scores):
            raise ValueError("reranker scores must all be finite")


class Reranker(Protocol):
    def rerank(self, request: RerankRequest) -> RerankResponse: ...


def top_candidates(request: RerankRequest, response: RerankResponse, n: int) -> list[tuple[str, str, float]]:
    """Best n candidates by score, ties broken by candidate input order."""
    if len(response.scores) != len(request.candidates):
        raise ProtocolError(
            f"got {len(response.scores)} scores for {len(request.candidates)} candidates"
        )
    order = sorted(range(len(request.candidates)), key=lambda i: (-response.scores[i], i))
    return [
        (request.candidates[i][0], request.candidates[i][1], response.scores[i])
        for i in order[:n]
    ]


@dataclass
class HttpReranker:
    """Client for `POST /rerank`; candidates are chunked per call."""

    url: str
    chunk_size: int = 16
    retries: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 4
    cassette: Cassette | None = None
    api_key: str | None = None
    _backend: HttpBackend = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._backend = HttpBackend(
            self.url,
            retries=self.retries,
            backoff_s=self.backoff_s,
            max_in_flight=self.max_in_flight,
            cassette=self.cassette,
            api_key=self.api_key,
        )

    def rerank(self, request: RerankRequest) -> RerankResponse:
        scores: list[float] = []
        for start in range(0, len(request.candidates), self.chunk_size):
            chunk = request.candidates[start : start + self.chunk_size]
            payload = {
                "query": request.query_text,
                "candidates": [{"id": doc_id, "text": text} for doc_id, text in chunk],
            }
            body = self._backend.post("/rerank", payload)
            got = body.get("scores") if isinstance(body, dict) else None
            if not isinstance(got, list) or len(got) != len(chunk):
                raise ProtocolError(f"malformed /rerank response: {body!r:.200}")
            scores.extend(float(s) for s in got)
        return RerankResponse(scores=tuple(scores))


class ScoreFileReranker:
    """Replays scores from a jsonl file of {query_id, doc_id, score} rows.

    Unlisted (query, doc) pairs score 0.0 so small fixtures stay small.
    """

    def __init__(self, path: Path | str) -> None:
        self._scores: dict[tuple[str | None, str], float] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                self._scores[(obj.get("query_id"), obj["doc_id"])] = float(obj["score"])

    def rerank(self, request: RerankRequest) -> RerankResponse:
        scores = tuple(
            self._scores.get(
                (request.query_id, doc_id), self._scores.get((None, doc_id), 0.0)
            )
            for doc_id, _ in request.candidates
        )
        return RerankResponse(scores=scores)


class HashReranker:
    """Deterministic stub: scores depend only on (query, candidate text)."""

    def rerank(self, request: RerankRequest) -> RerankResponse:
        scores = tuple(
            _hash_unit(request.query_text, text) for _, text in request.candidates
        )
        return RerankResponse(scores=scores)


def _hash_unit(query: str, text: str) -> float:
    digest = hashlib.sha256(f"{query}\x00{text}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64
