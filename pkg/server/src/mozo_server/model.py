"""A deterministic tiny recurrent byte language model.

All parameters come from one seeded generator, the forward pass is plain
float64 numpy, and nothing is cached or mutated, so a given (seed, context)
pair produces identical logits on every call. That determinism is the whole
point: the decoder on the other side of the wire records traces against this
model and replays them bit for bit.

The architecture is the smallest thing that behaves like a language model
over bytes: an embedding table, one tanh recurrence, and a linear head. Text
embeddings reuse the recurrence (the final hidden state, normalized), which
keeps /v1/embed consistent with what the model actually conditions on.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .tokenizer import BOS_ID, VOCAB_SIZE, encode

__all__ = ["TinyByteLM"]


class TinyByteLM:
    def __init__(self, seed: int = 0, hidden_dim: int = 32, model_id: str = "tiny-byte-lm-v1"):
        if hidden_dim < 2:
            raise ValueError("hidden_dim must be >= 2")
        self.seed = int(seed)
        self.hidden_dim = int(hidden_dim)
        self.model_id = str(model_id)
        rng = np.random.default_rng(self.seed)
        self.embedding = rng.standard_normal((VOCAB_SIZE, hidden_dim)) * 0.5
        # spectral scale < 1 keeps the recurrence contractive, so long
        # contexts neither saturate tanh nor wash out the recent tokens
        self.recurrent = rng.standard_normal((hidden_dim, hidden_dim)) * (0.8 / math.sqrt(hidden_dim))
        self.head = rng.standard_normal((hidden_dim, VOCAB_SIZE)) * (2.0 / math.sqrt(hidden_dim))
        self.head_bias = rng.standard_normal(VOCAB_SIZE) * 0.1

    @property
    def vocab_size(self) -> int:
        return VOCAB_SIZE

    def hidden_state(self, token_ids: Sequence[int]) -> np.ndarray:
        state = np.zeros(self.hidden_dim)
        for token in (BOS_ID, *token_ids):
            state = np.tanh(self.embedding[int(token)] + self.recurrent @ state)
        return state

    def next_token_logits(self, token_ids: Sequence[int]) -> np.ndarray:
        """Last-position logits for the context, shape (vocab_size,), finite."""
        return self.hidden_state(token_ids) @ self.head + self.head_bias

    def embed_text(self, text: str) -> np.ndarray:
        state = self.hidden_state(encode(text))
        return state / np.linalg.norm(state)
