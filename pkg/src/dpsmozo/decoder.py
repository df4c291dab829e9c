"""Private next-token decoding by mixing one-shot and zero-shot outputs.

One decoding step:

1. draw a fresh subsample of ``n_shots`` demonstrations from the pool
   (without replacement);
2. score the query zero-shot and keep the top-k tokens as the step support;
3. for every sampled demonstration, score one-shot, truncate to the same
   support, and find the largest mixture weight lambda whose mixed
   distribution stays within symmetric Renyi divergence beta*alpha of the
   truncated zero-shot reference;
4. sample the next token from the renormalized product of the mixed
   distributions.

Each step therefore costs exactly ``n_shots + 1`` provider calls and is
(alpha, 4*beta*alpha)-RDP in the pool before subsampling, which the
accountant module amplifies and composes. ``ensemble_decode`` (the lambda=1,
fixed-demos limit) and ``concat_decode`` (plain prompt concatenation) are the
non-private references used for baselines and the offline pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist import (
    LogitVector,
    LogProbDist,
    log_softmax,
    mix_logits,
    product_distribution,
    sample_token,
    sym_renyi_divergence,
    top_k_indices,
    truncate_to_support,
)
from .providers import Demonstration, PromptContext
from .solvers import BisectionSettings, LambdaBounds, solve_lambda

__all__ = [
    "DecodingConfig",
    "GenerationRecord",
    "subsample",
    "mozo_step_distribution",
    "dps_mozo_step",
    "dps_mozo_generate",
    "ensemble_decode",
    "concat_decode",
]

# Slack for re-asserting the divergence constraint at the solved lambda.
CONSTRAINT_TOL = 1e-9


@dataclass(frozen=True)
class DecodingConfig:
    """Everything one generation needs besides the pool and the provider."""

    n_shots: int
    top_k: int
    beta: float
    alpha: int
    t_max: int
    eos_token_id: int
    lambda_bounds: LambdaBounds = LambdaBounds()
    bisection: BisectionSettings = BisectionSettings()
    template_id: str = "default"

    def __post_init__(self):
        if self.n_shots < 1:
            raise ValueError("n_shots must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not (self.beta >= 0.0 and math.isfinite(self.beta)):
            raise ValueError("beta must be finite and >= 0")
        if self.alpha < 2:
            raise ValueError("alpha must be >= 2")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.eos_token_id < 0:
            raise ValueError("eos_token_id must be >= 0")


@dataclass(frozen=True)
class GenerationRecord:
    """One decoded answer plus its per-step diagnostics."""

    query_id: str
    token_ids: tuple[int, ...]
    min_lambdas: tuple[float, ...]
    terminated_by: str  # "eos" or "length"

    @property
    def steps_used(self) -> int:
        return len(self.token_ids)


def subsample(pool: Sequence[Demonstration], n_shots: int, rng: np.random.Generator) -> list[Demonstration]:
    """Uniform draw of n_shots distinct demonstrations, in draw order."""
    if not (1 <= n_shots <= len(pool)):
        raise ValueError("need 1 <= n_shots <= pool size")
    picked = rng.choice(len(pool), size=n_shots, replace=False)
    return [pool[int(i)] for i in picked]


def mozo_step_distribution(
    one_shot_logits: Sequence[LogitVector],
    zero_shot_logits: LogitVector,
    cfg: DecodingConfig,
    lambda_override: float | None = None,
) -> tuple[LogProbDist, tuple[float, ...]]:
    """Next-token distribution for one step, given the raw logit vectors.

    Returns the renormalized product of the per-demonstration mixed
    distributions together with the solved lambda values (in demonstration
    order). ``lambda_override`` skips the solver and forces a fixed weight;
    the divergence constraint is only asserted for solved weights.
    """
    if len(one_shot_logits) == 0:
        raise ValueError("need at least one one-shot logit vector")
    keep = top_k_indices(zero_shot_logits, cfg.top_k)
    zero_trunc = truncate_to_support(zero_shot_logits, keep)
    reference = log_softmax(zero_trunc)
    budget = cfg.beta * cfg.alpha
    mixed = []
    lambdas = []
    for one in one_shot_logits:
        one_trunc = truncate_to_support(one, keep)
        if lambda_override is None:
            lam = solve_lambda(one_trunc, zero_trunc, cfg.beta, cfg.alpha,
                               cfg.lambda_bounds, cfg.bisection)
        else:
            lam = float(lambda_override)
        dist = mix_logits(one_trunc, zero_trunc, lam)
        if lambda_override is None:
            gap = sym_renyi_divergence(dist, reference, cfg.alpha) - budget
            if gap > CONSTRAINT_TOL:
                raise RuntimeError(f"solved lambda violates divergence budget by {gap:.3e}")
        mixed.append(dist)
        lambdas.append(lam)
    return product_distribution(mixed), tuple(lambdas)


def dps_mozo_step(
    pool: Sequence[Demonstration],
    query_text: str,
    prefix: tuple[int, ...],
    cfg: DecodingConfig,
    provider,
    rng: np.random.Generator,
) -> tuple[int, tuple[float, ...]]:
    """One private decoding step: returns (token id, per-demo lambdas)."""
    demos = subsample(pool, cfg.n_shots, rng)
    zero = provider.logits(PromptContext(query_text, prefix, cfg.template_id, ()))
    ones = [
        provider.logits(PromptContext(query_text, prefix, cfg.template_id, (demo,)))
        for demo in demos
    ]
    step_dist, lambdas = mozo_step_distribution(ones, zero, cfg)
    return sample_token(step_dist, rng), lambdas


def dps_mozo_generate(
    pool: Sequence[Demonstration],
    query_id: str,
    query_text: str,
    cfg: DecodingConfig,
    provider,
    rng: np.random.Generator,
) -> GenerationRecord:
    """Decode until EOS or t_max tokens, resampling demonstrations per step."""
    tokens: list[int] = []
    min_lambdas: list[float] = []
    terminated_by = "length"
    for _ in range(cfg.t_max):
        token, lambdas = dps_mozo_step(pool, query_text, tuple(tokens), cfg, provider, rng)
        tokens.append(token)
        min_lambdas.append(min(lambdas))
        if token == cfg.eos_token_id:
            terminated_by = "eos"
            break
    return GenerationRecord(query_id, tuple(tokens), tuple(min_lambdas), terminated_by)


def ensemble_decode(
    demos: Sequence[Demonstration],
    query_text: str,
    cfg: DecodingConfig,
    provider,
    rng: np.random.Generator,
) -> tuple[int, ...]:
    """Non-private product-of-one-shot decoding over a fixed demo list.

    Identical to the private step with lambda forced to 1 and the subsample
    pinned; used as the epsilon = infinity reference and by the offline
    pipeline's post-processing phase.
    """
    if len(demos) == 0:
        raise ValueError("need at least one demonstration")
    tokens: list[int] = []
    for _ in range(cfg.t_max):
        prefix = tuple(tokens)
        zero = provider.logits(PromptContext(query_text, prefix, cfg.template_id, ()))
        keep = top_k_indices(zero, cfg.top_k)
        factors = []
        for demo in demos:
            one = provider.logits(PromptContext(query_text, prefix, cfg.template_id, (demo,)))
            factors.append(log_softmax(truncate_to_support(one, keep)))
        token = sample_token(product_distribution(factors), rng)
        tokens.append(token)
        if token == cfg.eos_token_id:
            break
    return tuple(tokens)


def concat_decode(
    demos: Sequence[Demonstration],
    query_text: str,
    cfg: DecodingConfig,
    provider,
    rng: np.random.Generator,
) -> tuple[int, ...]:
    """Plain top-k sampling from the demos-concatenated prompt.

    An empty demo list degenerates to truncated zero-shot sampling.
    """
    tokens: list[int] = []
    for _ in range(cfg.t_max):
        prefix = tuple(tokens)
        zero = provider.logits(PromptContext(query_text, prefix, cfg.template_id, ()))
        keep = top_k_indices(zero, cfg.top_k)
        if demos:
            scored = provider.logits(PromptContext(query_text, prefix, cfg.template_id, tuple(demos)))
        else:
            scored = zero
        token = sample_token(log_softmax(truncate_to_support(scored, keep)), rng)
        tokens.append(token)
        if token == cfg.eos_token_id:
            break
    return tuple(tokens)
