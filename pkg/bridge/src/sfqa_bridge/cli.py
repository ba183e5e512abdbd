"""Command line entry point: load one extractive model, serve the read protocol."""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence

import uvicorn

from .model import BridgeConfig
from .service import create_app

DEVICE_ENV = "SFQA_BRIDGE_DEVICE"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfqa-bridge",
        description="Serve an extractive QA model over the reader wire protocol.",
    )
    parser.add_argument(
        "--model-id", required=True,
        help="hub id or local path of an extractive QA checkpoint",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8123)
    parser.add_argument(
        "--max-batch", type=int, default=8, help="windows per forward pass"
    )
    parser.add_argument(
        "--device", default=None,
        help=f"torch device; defaults to ${DEVICE_ENV} or cpu",
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    device = args.device or os.environ.get(DEVICE_ENV) or "cpu"
    try:
        config = BridgeConfig(
            model_id=args.model_id,
            port=args.port,
            max_batch=args.max_batch,
            device=device,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(create_app(config), host=args.host, port=config.port, log_level="warning")
    return 0
