"""Embedding-space-aggregation baseline.

Answers a query by (1) generating public candidate answers zero-shot,
(2) concat-decoding one answer per disjoint subset of the private pool,
(3) averaging the subset answers' unit-normalized embeddings, adding
isotropic Gaussian noise, and (4) returning the candidate whose embedding is
most cosine-similar to the noisy mean. The noise scale sigma is an input
here; calibrating it to a DP guarantee is out of scope for this package, so
ESA runs are labelled with the sigma they used rather than an epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .decoder import DecodingConfig, concat_decode
from .providers import Demonstration

__all__ = ["EsaConfig", "EsaResult", "partition_pool", "esa_answer"]


@dataclass(frozen=True)
class EsaConfig:
    """Aggregation shape: N disjoint subsets, C candidates, noise sigma."""

    sigma: float
    top_k: int
    t_max: int
    n_subsets: int = 100
    subset_size: int = 4
    n_candidates: int = 100
    template_id: str = "default"

    def __post_init__(self):
        if self.n_subsets < 1 or self.subset_size < 1:
            raise ValueError("n_subsets and subset_size must be >= 1")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if not (self.sigma >= 0.0):
            raise ValueError("sigma must be >= 0")
        if self.top_k < 1 or self.t_max < 1:
            raise ValueError("top_k and t_max must be >= 1")


@dataclass(frozen=True)
class EsaResult:
    candidate_index: int
    candidate_text: str
    candidates: tuple[str, ...]
    similarities: tuple[float, ...]


def partition_pool(pool: Sequence[Demonstration], n_subsets: int, subset_size: int,
                   rng: np.random.Generator) -> list[list[Demonstration]]:
    """Disjoint subsets: seeded shuffle, then contiguous blocks."""
    needed = n_subsets * subset_size
    if needed > len(pool):
        raise ValueError(f"pool of {len(pool)} cannot supply {n_subsets} x {subset_size} disjoint demos")
    order = rng.permutation(len(pool))
    return [
        [pool[int(order[i * subset_size + j])] for j in range(subset_size)]
        for i in range(n_subsets)
    ]


def _decode_config(cfg: EsaConfig, eos_token_id: int, n_shots: int) -> DecodingConfig:
    # concat_decode ignores beta/alpha; any valid placeholder works.
    return DecodingConfig(
        n_shots=n_shots, top_k=cfg.top_k, beta=0.0, alpha=2, t_max=cfg.t_max,
        eos_token_id=eos_token_id, template_id=cfg.template_id,
    )


def esa_answer(
    pool: Sequence[Demonstration],
    query_text: str,
    cfg: EsaConfig,
    provider,
    embedder,
    rng: np.random.Generator,
    candidates: Sequence[str] | None = None,
) -> EsaResult:
    """Run one ESA query. ``candidates`` may be supplied to pin the public set."""
    decode_cfg = _decode_config(cfg, provider.eos_token_id, max(cfg.subset_size, 1))
    if candidates is None:
        candidates = [
            provider.detokenize(concat_decode([], query_text, decode_cfg, provider, rng))
            for _ in range(cfg.n_candidates)
        ]
    else:
        candidates = [str(c) for c in candidates]
        if len(candidates) != cfg.n_candidates:
            raise ValueError("number of supplied candidates does not match cfg.n_candidates")

    subsets = partition_pool(pool, cfg.n_subsets, cfg.subset_size, rng)
    answers = [
        provider.detokenize(concat_decode(subset, query_text, decode_cfg, provider, rng))
        for subset in subsets
    ]

    answer_vecs = _unit_rows(embedder.embed(answers))
    mean = answer_vecs.mean(axis=0)
    noisy = mean + cfg.sigma * rng.standard_normal(mean.size)

    candidate_vecs = _unit_rows(embedder.embed(candidates))
    denom = np.linalg.norm(noisy)
    if denom == 0.0:
        denom = 1.0
    sims = candidate_vecs @ (noisy / denom)
    best = int(np.argmax(sims))
    return EsaResult(best, candidates[best], tuple(candidates), tuple(float(s) for s in sims))


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("embedding rows must be non-zero")
    return matrix / norms
