from __future__ import annotations

import json

import pytest
import requests

from qexkit.backends import (
    Cassette,
    CassetteMissError,
    HttpBackend,
    ProtocolError,
    TransportError,
    request_key,
)


class FakeResponse:
    def __init__(self, status_code=200, body=None, text=""):
        self.status_code = status_code
        self._body = body
        self.text = text

    def json(self):
        if self._body is None:
            raise ValueError("no body")
        return self._body


def test_retries_then_succeeds(monkeypatch):
    calls = []

    def fake_post(url, json=None, headers=None, timeout=None):
        calls.append(json)
        if len(calls) < 3:
            raise requests.ConnectionError("down")
        return FakeResponse(body={"ok": True})

    monkeypatch.setattr(requests, "post", fake_post)
    backend = HttpBackend("http://x", retries=3, backoff_s=0.0)
    assert backend.post("/ping", {"a": 1}) == {"ok": True}
    assert len(calls) == 3


def test_transport_error_after_exhausted_retries(monkeypatch):
    monkeypatch.setattr(
        requests, "post", lambda *a, **k: (_ for _ in ()).throw(requests.ConnectionError("down"))
    )
    backend = HttpBackend("http://x", retries=2, backoff_s=0.0)
    with pytest.raises(TransportError, match="after 3 attempts"):
        backend.post("/ping", {})


def test_5xx_is_retried(monkeypatch):
    calls = []

    def fake_post(url, **kwargs):
        calls.append(url)
        if len(calls) == 1:
            return FakeResponse(status_code=503)
        return FakeResponse(body={"ok": 1})

    monkeypatch.setattr(requests, "post", fake_post)
    assert HttpBackend("http://x", retries=2, backoff_s=0.0).post("/e", {}) == {"ok": 1}
    assert len(calls) == 2


def test_4xx_is_not_retried(monkeypatch):
    calls = []

    def fake_post(url, **kwargs):
        calls.append(url)
        return FakeResponse(status_code=400, text="bad request")

    monkeypatch.setattr(requests, "post", fake_post)
    with pytest.raises(ProtocolError, match="400"):
        HttpBackend("http://x", retries=3, backoff_s=0.0).post("/e", {})
    assert len(calls) == 1


def test_api_key_header(monkeypatch):
    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen.update(headers)
        return FakeResponse(body={})

    monkeypatch.setattr(requests, "post", fake_post)
    HttpBackend("http://x", api_key="sekret").post("/e", {})
    assert seen["Authorization"] == "Bearer sekret"


class TestCassette:
    def test_record_then_replay(self, tmp_path, monkeypatch):
        path = tmp_path / "tape.jsonl"
        monkeypatch.setattr(requests, "post", lambda *a, **k: FakeResponse(body={"v": 7}))
        rec = HttpBackend("http://x", cassette=Cassette(path, "record"))
        assert rec.post("/e", {"q": 1}) == {"v": 7}

        def explode(*a, **k):
            raise AssertionError("network used during replay")

        monkeypatch.setattr(requests, "post", explode)
        rep = HttpBackend("http://x", cassette=Cassette(path, "replay"))
        assert rep.post("/e", {"q": 1}) == {"v": 7}

    def test_replay_miss(self, tmp_path):
        path = tmp_path / "tape.jsonl"
        path.write_text(
            json.dumps({"key": request_key("/e", {"q": 1}), "endpoint": "/e",
                        "request": {"q": 1}, "response": {}}) + "\n"
        )
        backend = HttpBackend("http://x", cassette=Cassette(path, "replay"))
        with pytest.raises(CassetteMissError):
            backend.post("/e", {"q": 2})

    def test_replay_requires_existing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            Cassette(tmp_path / "missing.jsonl", "replay")

    def test_open_auto_mode(self, tmp_path):
        path = tmp_path / "tape.jsonl"
        assert Cassette.open(path).mode == "record"
        path.write_text("")
        assert Cassette.open(path).mode == "replay"

    def test_key_is_content_addressed(self):
        assert request_key("/e", {"a": 1, "b": 2}) == request_key("/e", {"b": 2, "a": 1})
        assert request_key("/e", {"a": 1}) != request_key("/f", {"a": 1})
