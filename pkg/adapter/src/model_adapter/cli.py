"""Start the adapter server; every flag mirrors an AdapterConfig field."""

from __future__ import annotations

import argparse
import sys

from .app import create_app
from .config import AdapterConfig, AdapterConfigError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="model-adapter",
        description="Serve embeddings and text generation over the wire protocol.",
    )
    parser.add_argument("--embed-model", default="stub-16", help="embedding model id (stub-<dim>)")
    parser.add_argument("--generate-model", default="stub", help="generation model id")
    parser.add_argument("--adapter-weights", default=None, help="optional fine-tuned weights file")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8200)
    parser.add_argument("--max-batch", type=int, default=32, help="encoder batch cap")
    return parser


def main(argv=None) -> int:
    import uvicorn

    args = build_parser().parse_args(argv)
    try:
        config = AdapterConfig(
            embed_model=args.embed_model,
            generate_model=args.generate_model,
            adapter_weights=args.adapter_weights,
            host=args.host,
            port=args.port,
            max_batch=args.max_batch,
        )
        app = create_app(config)
    except AdapterConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
