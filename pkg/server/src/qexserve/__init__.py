"""qexserve: HTTP serving shim for embedding, reranking and chat models."""

__version__ = "0.1.0"

from .app import create_app
from .config import ServerConfig

__all__ = ["ServerConfig", "create_app"]
