"""Contract conformance for the serving shim (acceptance criterion S1)."""
from __future__ import annotations

import math

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient

from qexserve import ServerConfig, create_app

EMBED_SCHEMA = {
    "type": "object",
    "required": ["vectors", "dim"],
    "properties": {
        "vectors": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
        },
        "dim": {"type": "integer", "minimum": 1},
        "truncated": {"type": "array", "items": {"type": "integer"}},
    },
}

RERANK_SCHEMA = {
    "type": "object",
    "required": ["scores"],
    "properties": {
        "scores": {"type": "array", "items": {"type": "number"}},
        "truncated": {"type": "array", "items": {"type": "integer"}},
    },
}

CHAT_SCHEMA = {
    "type": "object",
    "required": ["text", "completion_tokens"],
    "properties": {
        "text": {"type": "string"},
        "completion_tokens": {"type": "integer", "minimum": 0},
    },
}

PROMPTS = [
    "the heat engine converts thermal energy into mechanical work and repeats the cycle",
    "a query expansion adds related terms to the query so the query matches more documents",
    "zebras and lions share the savanna but zebras graze while lions hunt the grazing herds",
    "the river carved the canyon and the canyon walls recorded the river history in stone",
    "plasma is an ionized gas and the ionized particles respond to magnetic fields",
    "carbon dioxide traps heat in the atmosphere and the trapped heat warms the oceans",
    "the neuron fires when the membrane potential crosses the threshold and then resets",
    "a crystal lattice repeats a unit cell and the unit cell symmetry sets the properties",
    "the glacier advances in winter and retreats in summer leaving moraines behind",
    "signals propagate through the filter and the filter attenuates the high frequencies",
]


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(ServerConfig()))


def test_s1_embed_schema_and_norms(client):
    response = client.post("/embed", json={"texts": ["alpha beta", "gamma", ""]})
    assert response.status_code == 200
    body = response.json()
    jsonschema.validate(body, EMBED_SCHEMA)
    matrix = np.asarray(body["vectors"])
    assert matrix.shape == (3, body["dim"])
    assert np.allclose(np.linalg.norm(matrix, axis=1), 1.0, atol=1e-5)


def test_s1_rerank_schema_and_alignment(client):
    payload = {
        "query": "what is heat",
        "candidates": [
            {"id": "a", "text": "what is heat"},
            {"id": "b", "text": "completely unrelated text"},
        ],
    }
    response = client.post("/rerank", json=payload)
    assert response.status_code == 200
    body = response.json()
    jsonschema.validate(body, RERANK_SCHEMA)
    assert len(body["scores"]) == 2
    assert all(math.isfinite(s) for s in body["scores"])
    # an exact restatement of the query outranks an unrelated string
    assert body["scores"][0] > body["scores"][1]


def test_s1_chat_schema_caps_and_no_repeat_bigram(client):
    for cap in (8, 16):
        for prompt in PROMPTS:
            payload = {
                "messages": [
                    {"role": "system", "content": "write a passage"},
                    {"role": "user", "content": prompt},
                ],
                "max_new_tokens": cap,
                "num_beams": 4,
                "repetition_penalty": 1.1,
                "no_repeat_ngram": 2,
            }
            response = client.post("/chat", json=payload)
            assert response.status_code == 200
            body = response.json()
            jsonschema.validate(body, CHAT_SCHEMA)
            words = body["text"].split()
            assert body["completion_tokens"] <= cap
            assert len(words) == body["completion_tokens"]
            bigrams = list(zip(words, words[1:]))
            assert len(bigrams) == len(set(bigrams)), f"repeated bigram in {body['text']!r}"


def test_duplicate_texts_identical_vectors(client):
    body = client.post("/embed", json={"texts": ["same text", "same text"]}).json()
    assert body["vectors"][0] == body["vectors"][1]


def test_single_candidate_single_score(client):
    body = client.post(
        "/rerank", json={"query": "q", "candidates": [{"id": "only", "text": "t"}]}
    ).json()
    assert len(body["scores"]) == 1


def test_chat_deterministic(client):
    payload = {
        "messages": [{"role": "user", "content": PROMPTS[0]}],
        "max_new_tokens": 12,
        "num_beams": 4,
        "repetition_penalty": 1.1,
        "no_repeat_ngram": 2,
    }
    first = client.post("/chat", json=payload).json()
    second = client.post("/chat", json=payload).json()
    assert first == second


def test_chat_single_token_cap(client):
    payload = {
        "messages": [{"role": "user", "content": PROMPTS[1]}],
        "max_new_tokens": 1,
        "num_beams": 4,
        "repetition_penalty": 1.1,
        "no_repeat_ngram": 2,
    }
    body = client.post("/chat", json=payload).json()
    assert body["completion_tokens"] == 1


def test_parameter_out_of_range_is_4xx(client):
    payload = {
        "messages": [{"role": "user", "content": "x"}],
        "max_new_tokens": 0,
    }
    assert client.post("/chat", json=payload).status_code == 422
    over_limit = {
        "messages": [{"role": "user", "content": "x"}],
        "max_new_tokens": 999_999,
    }
    response = client.post("/chat", json=over_limit)
    assert response.status_code == 400
    assert "max_new_tokens" in response.json()["detail"]


def test_truncation_flagged_in_metadata():
    app = create_app(ServerConfig(max_input_tokens=4))
    client = TestClient(app)
    body = client.post(
        "/embed", json={"texts": ["short", "one two three four five six"]}
    ).json()
    assert body["truncated"] == [1]


def test_endpoint_subsets():
    app = create_app(ServerConfig(embed_model="toy", rerank_model="", chat_model=""))
    client = TestClient(app)
    health = client.get("/healthz").json()
    assert set(health["endpoints"]) == {"embed"}
    assert client.post(
        "/rerank", json={"query": "q", "candidates": [{"id": "a", "text": "t"}]}
    ).status_code == 404


def test_bearer_token_auth():
    app = create_app(ServerConfig(api_token="sekret"))
    client = TestClient(app)
    payload = {"texts": ["x"]}
    assert client.post("/embed", json=payload).status_code == 401
    ok = client.post("/embed", json=payload, headers={"Authorization": "Bearer sekret"})
    assert ok.status_code == 200
    assert client.get("/healthz").status_code == 200  # health stays open
