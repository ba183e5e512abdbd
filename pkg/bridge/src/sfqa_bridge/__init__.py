"""Neural reader bridge: an extractive QA model behind the read protocol.

The pipeline package talks to readers over HTTP (POST /v1/read); this package
puts any Hugging Face extractive QA checkpoint on the other end of that wire.
"""

from .model import BridgeConfig, ExtractiveReader
from .protocol import HEALTH_PATH, READ_PATH, READ_REPLY_SCHEMA, READ_REQUEST_SCHEMA
from .service import create_app

__all__ = [
    "BridgeConfig",
    "ExtractiveReader",
    "HEALTH_PATH",
    "READ_PATH",
    "READ_REPLY_SCHEMA",
    "READ_REQUEST_SCHEMA",
    "create_app",
]
