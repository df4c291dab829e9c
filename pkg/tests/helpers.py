"""Plain-probability-domain reference implementations used as test oracles.

Everything here is written directly from the definitions (explicit sums over
probabilities, no log-space tricks) and deliberately shares no code with the
package, so agreement between the two routes is evidence rather than tautology.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np

from dpsmozo.providers import Demonstration


def ref_softmax(scores: np.ndarray) -> np.ndarray:
    """Probability-domain softmax; masked (-inf) entries map to exact zeros."""
    scores = np.asarray(scores, dtype=np.float64)
    finite = np.isfinite(scores)
    out = np.zeros_like(scores)
    shifted = scores[finite] - scores[finite].max()
    weights = np.exp(shifted)
    out[finite] = weights / weights.sum()
    return out


def ref_renyi(p: np.ndarray, q: np.ndarray, alpha: float) -> float:
    """D_alpha(p || q) as a direct sum over the support of p."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0.0
    if np.any(q[mask] == 0.0):
        return float("inf")
    total = float(np.sum(p[mask] ** alpha * q[mask] ** (1.0 - alpha)))
    return max(np.log(total) / (alpha - 1.0), 0.0)


def ref_sym_renyi(p: np.ndarray, q: np.ndarray, alpha: float) -> float:
    return max(ref_renyi(p, q, alpha), ref_renyi(q, p, alpha))


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def grid_max_lambda(
    one_shot: np.ndarray,
    zero_shot: np.ndarray,
    reference: np.ndarray,
    alpha: float,
    budget: float,
    grid_step: float = 1e-4,
) -> float:
    """Exhaustive-grid solver for the largest feasible mixing weight.

    Walks lambda from 0 to 1.5 in `grid_step` increments and returns the last
    grid point whose mixed distribution stays within `budget` of `reference`
    under the symmetric alpha-divergence. Vectorised but otherwise brute force.
    """
    support = np.isfinite(zero_shot)
    if not np.array_equal(support, np.isfinite(one_shot)) or not np.array_equal(
        support, np.isfinite(reference)
    ):
        raise AssertionError("grid oracle expects a shared support mask")

    lambdas = np.arange(0.0, 1.5 + grid_step / 2, grid_step)
    one = one_shot[support]
    zero = zero_shot[support]
    mixed_scores = lambdas[:, None] * one[None, :] + (1.0 - lambdas)[:, None] * zero[None, :]
    shifted = mixed_scores - mixed_scores.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    ref_probs = ref_softmax(reference[support])

    mask = ref_probs > 0.0
    p = probs[:, mask]
    r = ref_probs[mask]
    forward = np.log(np.sum(p**alpha * r ** (1.0 - alpha), axis=1)) / (alpha - 1.0)
    reverse = np.log(np.sum(r**alpha * p ** (1.0 - alpha), axis=1)) / (alpha - 1.0)
    feasible = np.maximum(np.maximum(forward, 0.0), np.maximum(reverse, 0.0)) <= budget
    if not feasible[0]:
        raise AssertionError("lambda=0 must always be feasible")
    last = int(np.max(np.nonzero(feasible)[0]))
    return float(lambdas[last])


def make_pool(n: int, tag: str = "d") -> list[Demonstration]:
    return [Demonstration(f"{tag}{i}", f"{tag}-in {i}", f"{tag}-out {i}") for i in range(n)]


def mp_subsampled_rdp(q: float, alpha: int, beta: float) -> float:
    """50-digit-precision reimplementation of the amplification bound.

    Same formula, computed directly on arbitrary-precision numbers instead of
    in log space, including the cap at the unsubsampled guarantee.
    """
    with mp.workdps(50):
        qm = mp.mpf(q)
        bm = mp.mpf(beta)
        eps2 = 4 * bm * 2
        total = mp.mpf(1)
        total += qm**2 * mp.binomial(alpha, 2) * min(4 * mp.expm1(eps2), 2 * mp.e**eps2)
        for j in range(3, alpha + 1):
            eps_j = 4 * bm * j
            total += qm**j * mp.binomial(alpha, j) * 2 * mp.e ** ((j - 1) * eps_j)
        bound = mp.log(total) / (alpha - 1)
        return float(min(bound, 4 * bm * alpha))
