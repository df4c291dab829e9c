"""Log-space probability primitives over a fixed vocabulary.

Vectors are 1-D float64 arrays of vocabulary length. A masked token carries
``-inf``; everything else stays in log space until the sampling boundary, so
support handling is explicit and underflow-free. ``LogitVector`` holds
unnormalized scores, ``LogProbDist`` holds normalized log-probabilities
(logsumexp over the support equals 0 within ``NORM_TOL``).

Renyi divergences of order ``alpha > 1`` are computed as

    D_alpha(P || Q) = logsumexp(alpha*log p + (1-alpha)*log q) / (alpha - 1)

over the support of P. A support violation (P puts mass where Q has none)
yields ``+inf`` as a value, not an exception: callers treat it as an ordinary
"infinitely distinguishable" result. Tiny negative values from rounding are
clamped to zero. See van Erven & Harremoes, "Renyi Divergence and
Kullback-Leibler Divergence" (arXiv:1206.2459) for the underlying properties
relied on here (monotonicity in alpha, D = 0 iff P = Q).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "NORM_TOL",
    "LogitVector",
    "LogProbDist",
    "log_softmax",
    "top_k_indices",
    "truncate_to_support",
    "renyi_divergence",
    "sym_renyi_divergence",
    "mix_logits",
    "product_distribution",
    "sample_token",
]

# Tolerance on logsumexp(logp) == 0 for normalized distributions.
NORM_TOL = 1e-9


def _validated_vector(values, *, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if np.isnan(arr).any():
        raise ValueError(f"{name} contains NaN")
    if np.isposinf(arr).any():
        raise ValueError(f"{name} contains +inf")
    if not np.isfinite(arr).any():
        raise ValueError(f"{name} has empty support (all entries masked)")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LogitVector:
    """Unnormalized scores; -inf marks tokens outside the support."""

    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", _validated_vector(self.scores, name="scores"))

    @property
    def vocab_size(self) -> int:
        return int(self.scores.size)

    @property
    def support_mask(self) -> np.ndarray:
        return np.isfinite(self.scores)

    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.support_mask)


@dataclass(frozen=True)
class LogProbDist:
    """Normalized log-probabilities; -inf marks zero-probability tokens."""

    logp: np.ndarray

    def __post_init__(self):
        arr = _validated_vector(self.logp, name="logp")
        total = logsumexp(arr[np.isfinite(arr)])
        if abs(total) > NORM_TOL:
            raise ValueError(f"log-probabilities are not normalized (logsumexp={total:.3e})")
        object.__setattr__(self, "logp", arr)

    @property
    def vocab_size(self) -> int:
        return int(self.logp.size)

    @property
    def support_mask(self) -> np.ndarray:
        return np.isfinite(self.logp)

    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.support_mask)

    def probs(self) -> np.ndarray:
        """Probabilities with exact zeros on masked tokens."""
        out = np.zeros(self.vocab_size)
        mask = self.support_mask
        out[mask] = np.exp(self.logp[mask])
        return out


def log_softmax(logits: LogitVector) -> LogProbDist:
    """Normalize scores over their support; masked entries stay masked."""
    scores = logits.scores
    mask = logits.support_mask
    out = np.full(scores.size, -math.inf)
    out[mask] = scores[mask] - logsumexp(scores[mask])
    return LogProbDist(out)


def top_k_indices(logits: LogitVector, k: int) -> np.ndarray:
    """Indices of the k highest-scoring tokens, ties broken toward lower index.

    Masked tokens never qualify; if fewer than k tokens are finite the result
    is just the finite ones. The returned index array is sorted ascending.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = logits.scores
    # lexsort uses the last key as primary: descending score, then index.
    order = np.lexsort((np.arange(scores.size), -scores))
    keep = min(k, int(logits.support_mask.sum()))
    return np.sort(order[:keep])


def truncate_to_support(logits: LogitVector, keep: Sequence[int]) -> LogitVector:
    """Mask every token outside ``keep``. Scores inside are untouched."""
    keep = np.asarray(keep, dtype=np.intp)
    if keep.size == 0:
        raise ValueError("empty support: keep set has no indices")
    if keep.min() < 0 or keep.max() >= logits.vocab_size:
        raise ValueError("keep indices out of vocabulary range")
    out = np.full(logits.vocab_size, -math.inf)
    out[keep] = logits.scores[keep]
    if not np.isfinite(out).any():
        raise ValueError("empty support: no finite score inside keep set")
    return LogitVector(out)


def renyi_divergence(p: LogProbDist, q: LogProbDist, alpha: float) -> float:
    """Renyi divergence of order alpha > 1; +inf on support violation."""
    if not (math.isfinite(alpha) and alpha > 1.0):
        raise ValueError("alpha must be finite and > 1")
    if p.vocab_size != q.vocab_size:
        raise ValueError("support mismatch: vocabulary sizes differ")
    mask = p.support_mask
    if np.any(~q.support_mask & mask):
        return math.inf
    t = alpha * p.logp[mask] + (1.0 - alpha) * q.logp[mask]
    return max(float(logsumexp(t)) / (alpha - 1.0), 0.0)


def sym_renyi_divergence(p: LogProbDist, q: LogProbDist, alpha: float) -> float:
    """max(D_alpha(P||Q), D_alpha(Q||P)); +inf unless supports coincide."""
    return max(renyi_divergence(p, q, alpha), renyi_divergence(q, p, alpha))


def mix_logits(one_shot: LogitVector, zero_shot: LogitVector, lam: float) -> LogProbDist:
    """softmax(lam * one_shot + (1 - lam) * zero_shot) on the shared support.

    Both inputs must carry exactly the same support (the decoder truncates
    them to the same keep set first). lam = 0 reproduces the zero-shot
    distribution; lam may exceed 1 (extrapolation past the one-shot scores).
    """
    if not (math.isfinite(lam) and lam >= 0.0):
        raise ValueError("lambda must be finite and >= 0")
    if one_shot.vocab_size != zero_shot.vocab_size:
        raise ValueError("support mismatch: vocabulary sizes differ")
    mask = one_shot.support_mask
    if not np.array_equal(mask, zero_shot.support_mask):
        raise ValueError("support mismatch: one-shot and zero-shot masks differ")
    out = np.full(one_shot.vocab_size, -math.inf)
    out[mask] = lam * one_shot.scores[mask] + (1.0 - lam) * zero_shot.scores[mask]
    return log_softmax(LogitVector(out))


def product_distribution(dists: Sequence[LogProbDist]) -> LogProbDist:
    """Renormalized pointwise product of the given distributions.

    In log space the product is an elementwise sum, so any token masked in
    one factor is masked in the result. The intersection of supports must be
    non-empty.
    """
    if len(dists) == 0:
        raise ValueError("product of zero distributions is undefined")
    size = dists[0].vocab_size
    for d in dists[1:]:
        if d.vocab_size != size:
            raise ValueError("support mismatch: vocabulary sizes differ")
    total = np.sum([d.logp for d in dists], axis=0)
    mask = np.isfinite(total)
    if not mask.any():
        raise ValueError("empty support: distribution supports are disjoint")
    out = np.full(size, -math.inf)
    out[mask] = total[mask] - logsumexp(total[mask])
    return LogProbDist(out)


def sample_token(dist: LogProbDist, rng: np.random.Generator) -> int:
    """Draw one token id by inverse-CDF over the support.

    Uses a single uniform draw per call, so a fixed generator state yields a
    fixed token on every platform.
    """
    support = dist.support_indices()
    cdf = np.cumsum(np.exp(dist.logp[support]))
    u = rng.random() * cdf[-1]
    pick = int(np.searchsorted(cdf, u, side="right"))
    return int(support[min(pick, support.size - 1)])
