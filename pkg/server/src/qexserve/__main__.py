"""`qexserve` launcher: configure endpoints and run uvicorn."""
from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import ServerConfig


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qexserve", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--embed-model", default="toy",
                        help="'toy', 'hf:<checkpoint>' or '' to disable")
    parser.add_argument("--rerank-model", default="toy")
    parser.add_argument("--chat-model", default="toy")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch", type=int, default=32)
    parser.add_argument("--max-input-tokens", type=int, default=512)
    parser.add_argument("--token", default=None, help="require this static bearer token")
    args = parser.parse_args(argv)

    config = ServerConfig(
        embed_model=args.embed_model,
        rerank_model=args.rerank_model,
        chat_model=args.chat_model,
        device=args.device,
        max_batch_size=args.max_batch,
        max_input_tokens=args.max_input_tokens,
        api_token=args.token,
    )
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
