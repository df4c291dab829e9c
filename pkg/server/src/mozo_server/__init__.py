"""Self-contained inference server for the dpsmozo wire protocol."""

from .app import ServerConfig, create_app
from .model import TinyByteLM
from .tokenizer import BOS_ID, EOS_ID, VOCAB_SIZE, decode, encode

__version__ = "0.1.0"

__all__ = [
    "BOS_ID",
    "EOS_ID",
    "VOCAB_SIZE",
    "ServerConfig",
    "TinyByteLM",
    "create_app",
    "decode",
    "encode",
]
