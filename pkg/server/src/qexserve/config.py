"""Server configuration.

Model ids select the backend per endpoint: `toy` (deterministic,
dependency-free; the default) or `hf:<checkpoint>` which loads a
transformers model lazily. An endpoint with an empty model id is not
served, so one process can host any subset of endpoints.
"""
from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass(frozen=True)
class ServerConfig:
    embed_model: str = "toy"
    rerank_model: str = "toy"
    chat_model: str = "toy"
    device: str = "cpu"
    max_batch_size: int = 32
    max_input_tokens: int = 512
    max_new_tokens_limit: int = 1024
    api_token: str | None = None
    embed_dim: int = 32  # toy embedder only

    def __post_init__(self) -> None:
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")
        if self.max_input_tokens < 1:
            raise ValueError("max_input_tokens must be >= 1")
        if not (self.embed_model or self.rerank_model or self.chat_model):
            raise ValueError("at least one endpoint needs a model id")

    @classmethod
    def from_env(cls) -> "ServerConfig":
        return cls(
            embed_model=os.environ.get("QEXSERVE_EMBED_MODEL", "toy"),
            rerank_model=os.environ.get("QEXSERVE_RERANK_MODEL", "toy"),
            chat_model=os.environ.get("QEXSERVE_CHAT_MODEL", "toy"),
            device=os.environ.get("QEXSERVE_DEVICE", "cpu"),
            max_batch_size=int(os.environ.get("QEXSERVE_MAX_BATCH", "32")),
            max_input_tokens=int(os.environ.get("QEXSERVE_MAX_INPUT_TOKENS", "512")),
            api_token=os.environ.get("QEXSERVE_TOKEN") or None,
        )
