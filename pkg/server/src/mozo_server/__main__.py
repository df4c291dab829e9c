"""Launcher: python -m mozo_server [--host H] [--port P] [--seed S]."""

import argparse

import uvicorn

from .app import ServerConfig, create_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mozo-server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--hidden-dim", type=int, default=32)
    parser.add_argument("--model-id", default="tiny-byte-lm-v1")
    parser.add_argument("--log-level", default="info")
    args = parser.parse_args(argv)
    config = ServerConfig(model_id=args.model_id, seed=args.seed, hidden_dim=args.hidden_dim)
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level=args.log_level)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
