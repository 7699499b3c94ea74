"""FastAPI application exposing /embed, /rerank, /chat and /healthz.

Wire formats match the qexkit client contracts exactly. Request
handling is concurrent but each model's forward pass is serialized
behind a lock, with internal batching for /embed.
"""
from __future__ import annotations

import threading

from fastapi import Depends, FastAPI, HTTPException, Request
from pydantic import BaseModel, Field

from .config import ServerConfig
from .toy import DecodingParams, ToyEmbedder, ToyGenerator, ToyReranker


class EmbedRequest(BaseModel):
    texts: list[str] = Field(min_length=1)


class EmbedResponse(BaseModel):
    vectors: list[list[float]]
    dim: int
    truncated: list[int] = []


class Candidate(BaseModel):
    id: str
    text: str = Field(min_length=1)


class RerankRequest(BaseModel):
    query: str = Field(min_length=1)
    candidates: list[Candidate] = Field(min_length=1)


class RerankResponse(BaseModel):
    scores: list[float]
    truncated: list[int] = []


class Message(BaseModel):
    role: str = Field(pattern="^(system|user|assistant)$")
    content: str


class ChatRequest(BaseModel):
    messages: list[Message] = Field(min_length=1)
    max_new_tokens: int = Field(default=64, ge=1)
    num_beams: int = Field(default=4, ge=1, le=64)
    repetition_penalty: float = Field(default=1.1, gt=0.0)
    no_repeat_ngram: int = Field(default=2, ge=0)


class ChatResponse(BaseModel):
    text: str
    completion_tokens: int


def _load_backend(kind: str, model_id: str, config: ServerConfig):
    if not model_id:
        return None
    if model_id == "toy":
        if kind == "embed":
            return ToyEmbedder(dim=config.embed_dim, max_input_tokens=config.max_input_tokens)
        if kind == "rerank":
            return ToyReranker(max_input_tokens=config.max_input_tokens)
        return ToyGenerator(max_input_tokens=config.max_input_tokens)
    if model_id.startswith("hf:"):
        from . import hf

        checkpoint = model_id[3:]
        if kind == "embed":
            return hf.HfEmbedder(checkpoint, config)
        if kind == "rerank":
            return hf.HfReranker(checkpoint, config)
        return hf.HfGenerator(checkpoint, config)
    raise ValueError(f"unknown model id {model_id!r} for {kind}")


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig.from_env()
    app = FastAPI(title="qexserve", version="0.1.0")

    embedder = _load_backend("embed", config.embed_model, config)
    reranker = _load_backend("rerank", config.rerank_model, config)
    generator = _load_backend("chat", config.chat_model, config)
    locks = {"embed": threading.Lock(), "rerank": threading.Lock(), "chat": threading.Lock()}

    def check_auth(request: Request) -> None:
        if config.api_token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {config.api_token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    auth = [Depends(check_auth)]

    @app.get("/healthz")
    def healthz():
        endpoints = {}
        if embedder is not None:
            endpoints["embed"] = {"model": config.embed_model, "dim": embedder.dim}
        if reranker is not None:
            endpoints["rerank"] = {"model": config.rerank_model}
        if generator is not None:
            endpoints["chat"] = {"model": config.chat_model}
        return {"status": "ok", "endpoints": endpoints}

    @app.post("/embed", response_model=EmbedResponse, dependencies=auth)
    def embed(body: EmbedRequest):
        if embedder is None:
            raise HTTPException(status_code=404, detail="embed endpoint not enabled")
        vectors: list[list[float]] = []
        truncated: list[int] = []
        with locks["embed"]:
            for start in range(0, len(body.texts), config.max_batch_size):
                batch = body.texts[start : start + config.max_batch_size]
                matrix, cut = embedder.encode(batch)
                vectors.extend([float(x) for x in row] for row in matrix)
                truncated.extend(start + i for i in cut)
        return EmbedResponse(vectors=vectors, dim=embedder.dim, truncated=truncated)

    @app.post("/rerank", response_model=RerankResponse, dependencies=auth)
    def rerank(body: RerankRequest):
        if reranker is None:
            raise HTTPException(status_code=404, detail="rerank endpoint not enabled")
        with locks["rerank"]:
            scores, truncated = reranker.score(body.query, [c.text for c in body.candidates])
        return RerankResponse(scores=scores, truncated=truncated)

    @app.post("/chat", response_model=ChatResponse, dependencies=auth)
    def chat(body: ChatRequest):
        if generator is None:
            raise HTTPException(status_code=404, detail="chat endpoint not enabled")
        if body.max_new_tokens > config.max_new_tokens_limit:
            raise HTTPException(
                status_code=400,
                detail=f"max_new_tokens {body.max_new_tokens} exceeds server limit "
                f"{config.max_new_tokens_limit}",
            )
        params = DecodingParams(
            max_new_tokens=body.max_new_tokens,
            num_beams=body.num_beams,
            repetition_penalty=body.repetition_penalty,
            no_repeat_ngram=body.no_repeat_ngram,
        )
        with locks["chat"]:
            text, count = generator.generate([m.content for m in body.messages], params)
        return ChatResponse(text=text, completion_tokens=count)

    return app
