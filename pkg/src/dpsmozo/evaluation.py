"""Utility metrics and the membership-inference harness.

ROUGE-L here is the F1 form over a longest-common-subsequence: with
P = LCS/|candidate| and R = LCS/|reference|, F1 = 2PR/(P+R). String inputs
are lowercased and whitespace-tokenized; pre-tokenized sequences are scored
as given.

The MIA harness runs the one-shot membership attack: for each rotation, one
pool record acts as the member (it is both the demonstration and the query)
and the remaining records act as non-members; the attack score is the
probability the mechanism assigns to the true label. AUC pools all
member/non-member scores per repetition (Mann-Whitney, ties counted half),
with a per-attack mode behind a flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .decoder import GenerationRecord
from .providers import Demonstration, PromptContext

__all__ = [
    "lcs_length",
    "rouge_l_f1",
    "auc_roc",
    "mia_membership_score",
    "MiaConfig",
    "MiaResult",
    "mia_run",
    "lambda_trace_aggregate",
    "format_lambda_trace",
]


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Longest common subsequence length, O(len(a)*len(b))."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def _tokens(text_or_tokens) -> list:
    if isinstance(text_or_tokens, str):
        return text_or_tokens.lower().split()
    return list(text_or_tokens)


def rouge_l_f1(candidate, reference) -> float:
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def auc_roc(member_scores: Sequence[float], nonmember_scores: Sequence[float]) -> float:
    """P(member score > non-member score), ties counted 1/2 (Mann-Whitney)."""
    members = np.asarray(member_scores, dtype=np.float64)
    others = np.asarray(nonmember_scores, dtype=np.float64)
    if members.size == 0 or others.size == 0:
        raise ValueError("need at least one score on each side")
    ranks = rankdata(np.concatenate([members, others]))
    rank_sum = ranks[: members.size].sum()
    u = rank_sum - members.size * (members.size + 1) / 2.0
    return float(u / (members.size * others.size))


def mia_membership_score(provider, member: Demonstration, query_text: str,
                         true_label: str, template_id: str = "default") -> float:
    """Probability of the true label token under the one-shot distribution."""
    ctx = PromptContext(query_text, (), template_id, (member,))
    logit = provider.logits(ctx)
    token = provider.token_for_label(true_label)
    scores = logit.scores
    return float(np.exp(scores[token] - _logsumexp(scores)))


def _logsumexp(scores: np.ndarray) -> float:
    finite = scores[np.isfinite(scores)]
    m = finite.max()
    return float(m + math.log(np.exp(finite - m).sum()))


@dataclass(frozen=True)
class MiaConfig:
    """Attack shape: every test-pool record takes one turn as the member."""

    test_pool_size: int = 51
    nonmembers_per_attack: int | None = None  # always test_pool_size - 1
    repetitions: int = 5
    seed: int = 0
    per_attack: bool = False

    def __post_init__(self):
        if self.test_pool_size < 2:
            raise ValueError("test_pool_size must be >= 2 (one member needs non-members)")
        if self.nonmembers_per_attack is None:
            object.__setattr__(self, "nonmembers_per_attack", self.test_pool_size - 1)
        elif self.nonmembers_per_attack != self.test_pool_size - 1:
            raise ValueError("nonmembers_per_attack must equal test_pool_size - 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class MiaResult:
    auc_per_repetition: tuple[float, ...]
    auc_mean: float
    auc_std: float
    config: MiaConfig


def mia_run(
    pool: Sequence[Demonstration],
    score_fn: Callable[[Demonstration, Demonstration, np.random.Generator], float],
    cfg: MiaConfig = MiaConfig(),
) -> MiaResult:
    """Rotate the member role through a sampled test pool and report AUC.

    ``score_fn(member, query, rng)`` must return the attack score for a
    one-shot call whose demonstration is ``member`` and whose query/label
    come from ``query``; the member attack passes the member itself as the
    query. Per repetition, ``test_pool_size`` records are drawn from the
    pool; every record takes one turn as the member while the others are the
    non-members of that attack (test_pool_size - 1 each).
    """
    if len(pool) < cfg.test_pool_size:
        raise ValueError("pool smaller than test_pool_size")
    from .rng import make_generator

    aucs = []
    for rep in range(cfg.repetitions):
        rng = make_generator(cfg.seed, "mia-rep", rep)
        pick = rng.choice(len(pool), size=cfg.test_pool_size, replace=False)
        test_pool = [pool[int(i)] for i in pick]
        member_scores: list[float] = []
        nonmember_scores: list[float] = []
        per_attack_aucs: list[float] = []
        for a, member in enumerate(test_pool):
            m_score = float(score_fn(member, member, rng))
            n_scores = [
                float(score_fn(member, other, rng))
                for b, other in enumerate(test_pool) if b != a
            ]
            member_scores.append(m_score)
            nonmember_scores.extend(n_scores)
            if cfg.per_attack:
                per_attack_aucs.append(auc_roc([m_score], n_scores))
        if cfg.per_attack:
            aucs.append(float(np.mean(per_attack_aucs)))
        else:
            aucs.append(auc_roc(member_scores, nonmember_scores))
    arr = np.asarray(aucs)
    return MiaResult(tuple(aucs), float(arr.mean()), float(arr.std()), cfg)


def lambda_trace_aggregate(records: Sequence[GenerationRecord]) -> list[tuple[int, float, int]]:
    """Per-step mean of min-lambda over the records still decoding at that step.

    Returns (step, mean_min_lambda, surviving_record_count) rows, step
    counted from 1.
    """
    if not records:
        return []
    max_steps = max(r.steps_used for r in records)
    rows = []
    for t in range(max_steps):
        values = [r.min_lambdas[t] for r in records if r.steps_used > t]
        rows.append((t + 1, float(np.mean(values)), len(values)))
    return rows


def format_lambda_trace(rows: Sequence[tuple[int, float, int]]) -> str:
    """Tab-separated table of the aggregate, ready to plot."""
    out = ["step\tmean_min_lambda\tn_records"]
    for step, mean, count in rows:
        out.append(f"{step}\t{mean:.10g}\t{count}")
    return "\n".join(out) + "\n"
