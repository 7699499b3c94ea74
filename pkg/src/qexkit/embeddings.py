"""Embedding clients, joint pair embedding, and a content-hash cache."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .backends import Cassette, HttpBackend, ProtocolError
from .corpus_io import ExemplarPair
from .dense import normalize


class Embedder(Protocol):
    @property
    def dim(self) -> int: ...

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


@dataclass
class HttpEmbedder:
    """Client for `POST /embed` with `{"texts": [...]}` bodies."""

    url: str
    batch_size: int = 32
    retries: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 4
    cassette: Cassette | None = None
    api_key: str | None = None
    _backend: HttpBackend = field(init=False, repr=False)
    _dim: int | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        self._backend = HttpBackend(
            self.url,
            retries=self.retries,
            backoff_s=self.backoff_s,
            max_in_flight=self.max_in_flight,
            cassette=self.cassette,
            api_key=self.api_key,
        )

    @property
    def dim(self) -> int:
        if self._dim is None:
            self.embed(["probe"])
        assert self._dim is not None
        return self._dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            body = self._backend.post("/embed", {"texts": batch})
            if not isinstance(body, dict) or "vectors" not in body or "dim" not in body:
                raise ProtocolError(f"malformed /embed response: {body!r:.200}")
            dim = int(body["dim"])
            if self._dim is None:
                self._dim = dim
            elif self._dim != dim:
                raise ProtocolError(f"embedding dim changed from {self._dim} to {dim}")
            vectors = body["vectors"]
            if len(vectors) != len(batch) or any(len(v) != dim for v in vectors):
                raise ProtocolError("embedding response shape mismatch")
            rows.extend(vectors)
        matrix = np.asarray(rows, dtype=np.float64)
        if not np.all(np.isfinite(matrix)):
            raise ProtocolError("embedding response contains non-finite values")
        return matrix


class HashEmbedder:
    """Deterministic bag-of-hashed-tokens stub embedder.

    Stable across processes (sha256, not the salted builtin hash) so
    pipelines built on it produce byte-identical artifacts per seed.
    """

    def __init__(self, dim: int = 16) -> None:
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        matrix = np.zeros((len(texts), self._dim), dtype=np.float64)
        for i, text in enumerate(texts):
            tokens = text.lower().split()
            if not tokens:
                matrix[i, 0] = 1.0
                continue
            for tok in tokens:
                digest = hashlib.sha256(tok.encode("utf-8")).digest()
                bucket = digest[0] % self._dim
                sign = 1.0 if digest[1] % 2 == 0 else -1.0
                matrix[i, bucket] += sign
            if not matrix[i].any():
                matrix[i, 0] = 1.0
            matrix[i] = normalize(matrix[i])
        return matrix


class CachedEmbedder:
    """Wraps an embedder with a jsonl cache keyed by text content hash."""

    def __init__(self, inner: Embedder, path: Path | str) -> None:
        self.inner = inner
        self.path = Path(path)
        self._cache: dict[str, list[float]] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    obj = json.loads(line)
                    self._cache[obj["key"]] = obj["vector"]

    @property
    def dim(self) -> int:
        return self.inner.dim

    @staticmethod
    def _key(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        keys = [self._key(t) for t in texts]
        missing = [i for i, k in enumerate(keys) if k not in self._cache]
        if missing:
            fresh = self.inner.embed([texts[i] for i in missing])
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                for row, i in zip(fresh, missing):
                    vector = [float(x) for x in row]
                    self._cache[keys[i]] = vector
                    fh.write(json.dumps({"key": keys[i], "vector": vector}) + "\n")
        return np.asarray([self._cache[k] for k in keys], dtype=np.float64)


def embed_pair(client: Embedder, pair: ExemplarPair) -> np.ndarray:
    """Unit-normalized embedding of the joint `query passage` string."""
    vec = client.embed([f"{pair.query_text} {pair.passage_text}"])[0]
    return normalize(vec)


def embed_pairs(client: Embedder, pairs: Sequence[ExemplarPair]) -> np.ndarray:
    texts = [f"{p.query_text} {p.passage_text}" for p in pairs]
    matrix = client.embed(texts)
    return np.apply_along_axis(normalize, 1, matrix)
