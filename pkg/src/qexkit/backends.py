"""Shared HTTP plumbing for model backends.

Transport failures are retried with exponential backoff; malformed
responses are non-retriable. A jsonl cassette can record live responses
or replay them offline, keyed by a content hash of the request, so test
runs and re-runs make no network calls.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from pathlib import Path
from typing import Any

import requests


class BackendError(RuntimeError):
    """Base class for model-backend failures."""


class TransportError(BackendError):
    """Network-level failure that persisted through all retries."""


class ProtocolError(BackendError):
    """Backend answered but the payload violates the wire contract."""


class CassetteMissError(BackendError):
    """Replay cassette has no entry for this request."""


def request_key(endpoint: str, payload: dict[str, Any]) -> str:
    canonical = json.dumps(
        {"endpoint": endpoint, "request": payload}, sort_keys=True, ensure_ascii=False
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Cassette:
    """Record/replay store for backend responses (jsonl, hash-keyed)."""

    def __init__(self, path: Path | str, mode: str) -> None:
        if mode not in ("record", "replay"):
            raise ValueError(f"cassette mode must be 'record' or 'replay', got {mode!r}")
        self.path = Path(path)
        self.mode = mode
        self._lock = threading.Lock()
        self._responses: dict[str, Any] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    obj = json.loads(line)
                    self._responses[obj["key"]] = obj["response"]
        elif mode == "replay":
            raise FileNotFoundError(f"replay cassette not found: {self.path}")

    @classmethod
    def open(cls, path: Path | str, mode: str | None = None) -> "Cassette":
        """Default mode: replay when the file already exists, else record."""
        if mode is None:
            mode = "replay" if Path(path).exists() else "record"
        return cls(path, mode)

    def lookup(self, endpoint: str, payload: dict[str, Any]) -> Any:
        key = request_key(endpoint, payload)
        if key not in self._responses:
            raise CassetteMissError(f"no recorded response for {endpoint} (key {key[:12]}…)")
        return self._responses[key]

    def store(self, endpoint: str, payload: dict[str, Any], response: Any) -> None:
        key = request_key(endpoint, payload)
        with self._lock:
            if key in self._responses:
                return
            self._responses[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {"key": key, "endpoint": endpoint, "request": payload, "response": response},
                        ensure_ascii=False,
                    )
                    + "\n"
                )


class HttpBackend:
    """POSTs JSON with bounded retries, bounded in-flight requests and
    optional cassette record/replay."""

    def __init__(
        self,
        base_url: str,
        *,
        retries: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 120.0,
        max_in_flight: int = 4,
        cassette: Cassette | None = None,
        api_key: str | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.cassette = cassette
        self.api_key = api_key
        self._slots = threading.Semaphore(max_in_flight)

    def post(self, endpoint: str, payload: dict[str, Any]) -> Any:
        if self.cassette is not None and self.cassette.mode == "replay":
            return self.cassette.lookup(endpoint, payload)
        with self._slots:
            response = self._post_with_retries(endpoint, payload)
        if self.cassette is not None:
            self.cassette.store(endpoint, payload, response)
        return response

    def _post_with_retries(self, endpoint: str, payload: dict[str, Any]) -> Any:
        url = f"{self.base_url}{endpoint}"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(url, json=payload, headers=headers, timeout=self.timeout_s)
            except requests.RequestException as exc:
                last_error = exc
            else:
                if resp.status_code >= 500:
                    last_error = TransportError(f"{url} returned {resp.status_code}")
                elif resp.status_code >= 400:
                    raise ProtocolError(f"{url} returned {resp.status_code}: {resp.text[:500]}")
                else:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise ProtocolError(f"{url} returned non-JSON body") from exc
            if attempt < self.retries:
                time.sleep(self.backoff_s * (2**attempt))
        raise TransportError(f"{url} failed after {self.retries + 1} attempts: {last_error}")
