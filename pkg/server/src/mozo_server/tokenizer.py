"""Byte-level tokenizer: the 256 byte values plus BOS and EOS sentinels.

Token ids 0..255 are the UTF-8 bytes of the text, 256 is BOS and 257 is EOS.
``encode`` never emits sentinels and ``decode`` skips them, so
``decode(encode(s)) == s`` for every string; the model inserts BOS itself at
the start of each context and EOS is the stop token decoders watch for.
"""

from __future__ import annotations

from typing import Iterable, Sequence

__all__ = ["VOCAB_SIZE", "BOS_ID", "EOS_ID", "encode", "decode", "check_token_ids"]

BOS_ID = 256
EOS_ID = 257
VOCAB_SIZE = 258


def encode(text: str) -> list[int]:
    return list(text.encode("utf-8"))


def decode(token_ids: Iterable[int]) -> str:
    data = bytes(t for t in token_ids if t < 256)
    return data.decode("utf-8", errors="replace")


def check_token_ids(token_ids: Sequence[int]) -> None:
    for t in token_ids:
        if not (0 <= int(t) < VOCAB_SIZE):
            raise ValueError(f"token id {t} outside [0, {VOCAB_SIZE})")
