"""Feasibility bisection and the two calibration solvers built on it.

``solve_lambda`` finds, per demonstration, the largest mixture weight whose
mixed distribution stays within the per-step Renyi budget of the truncated
zero-shot reference. ``solve_beta`` finds the largest per-step divergence
cap beta whose amplified-and-composed cost fits the per-step RDP budget.
Both reduce to ``bisect_max_feasible``: a bracketed search for the largest
point satisfying a monotone feasibility predicate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dist import LogitVector, log_softmax, mix_logits, sym_renyi_divergence
from .errors import BudgetInfeasibleError

__all__ = [
    "BisectionSettings",
    "LambdaBounds",
    "bisect_max_feasible",
    "solve_lambda",
    "solve_beta",
    "BETA_BRACKET_START",
    "BETA_CAP",
]

# solve_beta doubles its bracket up from here; the cap bounds the search when
# the budget is effectively unconstrained.
BETA_BRACKET_START = 1e-6
BETA_CAP = 10.0


@dataclass(frozen=True)
class BisectionSettings:
    abs_tolerance: float = 1e-6
    max_iterations: int = 100

    def __post_init__(self):
        if not (self.abs_tolerance > 0.0 and math.isfinite(self.abs_tolerance)):
            raise ValueError("abs_tolerance must be positive and finite")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class LambdaBounds:
    lower: float = 0.0
    upper: float = 1.5

    def __post_init__(self):
        if not (0.0 <= self.lower < self.upper and math.isfinite(self.upper)):
            raise ValueError("need 0 <= lower < upper < inf")


def bisect_max_feasible(
    predicate: Callable[[float], bool],
    lo: float,
    hi: float,
    settings: BisectionSettings = BisectionSettings(),
) -> float:
    """Largest x in [lo, hi] with predicate(x) true, to within tolerance.

    Assumes the predicate is monotone (true up to some threshold, false
    after). predicate(lo) must hold; if predicate(hi) holds the bracket top
    is returned exactly. Only points that tested feasible are ever returned.
    """
    if not (lo < hi):
        raise ValueError("need lo < hi")
    if not predicate(lo):
        raise ValueError("predicate must hold at the lower bracket")
    if predicate(hi):
        return hi
    for _ in range(settings.max_iterations):
        if hi - lo <= settings.abs_tolerance:
            break
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return lo


def solve_lambda(
    one_shot: LogitVector,
    zero_shot: LogitVector,
    beta: float,
    alpha: float,
    bounds: LambdaBounds = LambdaBounds(),
    settings: BisectionSettings = BisectionSettings(),
) -> float:
    """Largest lambda in bounds with sym-D_alpha(mix || zero-shot) <= beta*alpha.

    Inputs must already share a support (both truncated to the same keep
    set). lambda = bounds.lower = 0 is always feasible because the mixture
    degenerates to the zero-shot reference there. The divergence is re-checked
    at the returned point; if a non-monotone instance ever slipped through the
    bisection, a 1e-4-step grid scan recovers the largest feasible point.
    """
    if not (beta >= 0.0 and math.isfinite(beta)):
        raise ValueError("beta must be finite and >= 0")
    budget = beta * alpha
    reference = log_softmax(zero_shot)

    def feasible(lam: float) -> bool:
        mixed = mix_logits(one_shot, zero_shot, lam)
        return sym_renyi_divergence(mixed, reference, alpha) <= budget

    lam = bisect_max_feasible(feasible, bounds.lower, bounds.upper, settings)
    if feasible(lam):
        return lam
    # Unreachable for monotone instances; kept as the documented fallback.
    grid = np.arange(bounds.lower, bounds.upper + 1e-4, 1e-4)
    ok = [g for g in grid if g <= bounds.upper and feasible(float(g))]
    if not ok:
        return bounds.lower
    return float(ok[-1])


def solve_beta(
    q: float,
    alpha: int,
    per_step_budget: float,
    settings: BisectionSettings = BisectionSettings(),
) -> float:
    """Largest beta whose subsampled per-step RDP cost fits the budget.

    The feasible region is bracketed by doubling from BETA_BRACKET_START
    until the cost exceeds the budget, then bisected. If even the bracket
    start is infeasible the budget cannot fund any useful mechanism; if the
    bracket reaches BETA_CAP while still feasible the cap is returned (the
    budget is slack and the mixture weight clamp dominates).
    """
    from .accountant import mozo_curve, subsampled_rdp

    if not (per_step_budget > 0.0 and math.isfinite(per_step_budget)):
        raise ValueError("per-step budget must be positive and finite")

    def feasible(beta: float) -> bool:
        return subsampled_rdp(q, alpha, mozo_curve(beta)) <= per_step_budget

    if not feasible(BETA_BRACKET_START):
        raise BudgetInfeasibleError(
            f"budget too small: even beta={BETA_BRACKET_START:g} exceeds "
            f"per-step budget {per_step_budget:.3e}"
        )
    lo, hi = BETA_BRACKET_START, 2.0 * BETA_BRACKET_START
    while hi < BETA_CAP and feasible(hi):
        lo, hi = hi, 2.0 * hi
    if hi >= BETA_CAP:
        if feasible(BETA_CAP):
            return BETA_CAP
        hi = BETA_CAP
    return bisect_max_feasible(feasible, lo, hi, settings)
