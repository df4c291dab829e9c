"""Renyi differential privacy accounting for the mixture decoder.

One decoding step with per-demonstration divergence cap ``beta`` satisfies
(alpha, 4*beta*alpha)-RDP with respect to replacing one record of the
demonstration pool, before subsampling. ``mozo_curve`` exposes that guarantee
as a curve over integer orders. ``subsampled_rdp`` applies privacy
amplification for sampling n_shots of |D| records without replacement
(sampling rate q = n_shots/|D|), using the bound for integer orders
alpha >= 2 from Wang, Balle & Kasiviswanathan, "Subsampled Renyi Differential
Privacy and Analytical Moments Accountant" (arXiv:1808.00087):

    eps'(alpha) = log(1
        + q^2 * C(alpha,2) * min{4*(e^{eps(2)} - 1),
                                 e^{eps(2)} * min{2, (e^{eps(inf)} - 1)^2}}
        + sum_{j=3}^{alpha} q^j * C(alpha,j) * e^{(j-1)*eps(j)}
                                * min{2, (e^{eps(inf)} - 1)^j}
      ) / (alpha - 1)

The mixture mechanism has eps(inf) = inf, so its min-factors equal 2. Terms
are accumulated in log space (log-gamma binomials), which keeps the sum exact
to float precision even when individual terms overflow e^700. The returned
value is additionally capped at the unsubsampled eps(alpha): conditioning on
whether the differing record was drawn shows the subsampled mechanism is
never worse than the base one, and the series bound alone can exceed it for
q near 1.

Composition over steps is linear in RDP. Conversion to (epsilon, delta)-DP
uses the hypothesis-testing bound of Balle et al. (arXiv:1905.09982):
epsilon = eps_tilde + log((alpha-1)/alpha) - (log(delta) + log(alpha))/(alpha-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from scipy.special import gammaln, logsumexp

from .errors import BudgetInfeasibleError
from .fileio import write_json
from .rng import stable_hex
from .solvers import BisectionSettings, solve_beta

__all__ = [
    "RdpCurve",
    "mozo_curve",
    "subsampled_rdp",
    "compose",
    "rdp_to_dp",
    "dp_to_rdp",
    "select_alpha",
    "AccountingInputs",
    "BudgetPlan",
    "plan_budget",
    "write_accounting_report",
]

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class RdpCurve:
    """RDP guarantee per integer order, plus the order-infinity value.

    ``eps_at_infinity`` is +inf for mechanisms without a bounded
    log-likelihood ratio (the mixture decoder is one); amplification then
    uses the generic min-factor 2.
    """

    eps_at: Callable[[int], float]
    eps_at_infinity: float = math.inf


def mozo_curve(beta: float) -> RdpCurve:
    """Per-step curve of the mixture mechanism: eps(alpha) = 4*beta*alpha."""
    if not (beta >= 0.0 and math.isfinite(beta)):
        raise ValueError("beta must be finite and >= 0")
    return RdpCurve(eps_at=lambda order: 4.0 * beta * order, eps_at_infinity=math.inf)


def _log_expm1(x: float) -> float:
    """log(e^x - 1) without overflow; x must be positive."""
    if x > 30.0:
        return x + math.log1p(-math.exp(-x))
    return math.log(math.expm1(x))


def _log_binom(n: int, k: int) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def subsampled_rdp(q: float, alpha: int, curve: RdpCurve) -> float:
    """Amplified RDP of order alpha for sampling rate q, given a base curve."""
    if not (0.0 < q < 1.0):
        raise ValueError("sampling rate q must be in (0, 1)")
    if not (float(alpha).is_integer() and alpha >= 2):
        raise ValueError("alpha must be an integer >= 2")
    alpha = int(alpha)
    eps2 = curve.eps_at(2)
    eps_alpha = curve.eps_at(alpha)
    if eps2 < 0.0 or eps_alpha < 0.0:
        raise ValueError("curve must be non-negative")
    if eps2 == 0.0 and eps_alpha == 0.0:
        # Null mechanism: its log-likelihood ratio is identically zero, so
        # every amplification term vanishes and the exact answer is 0.
        return 0.0

    if math.isinf(curve.eps_at_infinity):
        log_minfac_inner = LOG2  # min{2, (e^inf - 1)^2}
        log_minfac = [None, None, None] + [LOG2] * (alpha - 2)
    else:
        li = _log_expm1(curve.eps_at_infinity)
        log_minfac_inner = min(LOG2, 2.0 * li)
        log_minfac = [None, None, None] + [min(LOG2, j * li) for j in range(3, alpha + 1)]

    log_q = math.log(q)
    # j = 2 term: q^2 * C(alpha,2) * min{4*(e^eps2 - 1), e^eps2 * minfac}
    if eps2 > 0.0:
        log_m2 = min(math.log(4.0) + _log_expm1(eps2), eps2 + log_minfac_inner)
    else:
        log_m2 = -math.inf  # 4*(e^0 - 1) = 0
    log_terms = [0.0]  # the leading 1
    if log_m2 > -math.inf:
        log_terms.append(2.0 * log_q + _log_binom(alpha, 2) + log_m2)
    for j in range(3, alpha + 1):
        eps_j = curve.eps_at(j)
        if eps_j < 0.0:
            raise ValueError("curve must be non-negative")
        log_terms.append(j * log_q + _log_binom(alpha, j) + (j - 1) * eps_j + log_minfac[j])
    bound = float(logsumexp(log_terms)) / (alpha - 1)
    return min(bound, eps_alpha)


def compose(per_step_eps: float, steps: int) -> float:
    """RDP composes additively at a fixed order."""
    if per_step_eps < 0.0:
        raise ValueError("per-step eps must be >= 0")
    if not (isinstance(steps, int) and steps >= 0):
        raise ValueError("steps must be a non-negative integer")
    return per_step_eps * steps


def rdp_to_dp(eps_tilde: float, alpha: float, delta: float) -> float:
    """(alpha, eps_tilde)-RDP to epsilon at the given delta."""
    if not (eps_tilde >= 0.0 and math.isfinite(eps_tilde)):
        raise ValueError("eps_tilde must be finite and >= 0")
    if not (alpha > 1.0):
        raise ValueError("alpha must be > 1")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must be in (0, 1)")
    return eps_tilde + math.log((alpha - 1.0) / alpha) - (math.log(delta) + math.log(alpha)) / (alpha - 1.0)


def dp_to_rdp(epsilon: float, delta: float, alpha: float) -> float:
    """Largest eps_tilde whose conversion at this alpha meets (epsilon, delta).

    Algebraic inverse of ``rdp_to_dp``. Raises if the conversion overhead at
    this order already exceeds the target epsilon.
    """
    if not (epsilon > 0.0 and math.isfinite(epsilon)):
        raise ValueError("epsilon must be positive and finite")
    if not (alpha > 1.0):
        raise ValueError("alpha must be > 1")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must be in (0, 1)")
    eps_tilde = epsilon - math.log((alpha - 1.0) / alpha) + (math.log(delta) + math.log(alpha)) / (alpha - 1.0)
    if eps_tilde <= 0.0:
        raise BudgetInfeasibleError(
            f"(epsilon={epsilon:g}, delta={delta:g}) unreachable at order alpha={alpha:g}"
        )
    return eps_tilde


def select_alpha(epsilon: float, delta: float, alpha_range: tuple[int, int] = (2, 64)) -> int:
    """Smallest integer order whose RDP budget reaches epsilon/2.

    dp_to_rdp(epsilon, delta, alpha) grows with alpha toward epsilon; picking
    the first order where it crosses epsilon/2 leaves roughly half the target
    for the conversion overhead and keeps alpha (hence the divergence budget
    beta*alpha per step) as small as possible. If no order in range reaches
    epsilon/2, the feasible order closest to it is returned.
    """
    lo, hi = alpha_range
    if not (2 <= lo <= hi):
        raise ValueError("alpha range must satisfy 2 <= lo <= hi")
    best = None
    best_gap = math.inf
    for alpha in range(lo, hi + 1):
        try:
            eps_tilde = dp_to_rdp(epsilon, delta, alpha)
        except BudgetInfeasibleError:
            continue
        if eps_tilde >= 0.5 * epsilon:
            return alpha
        gap = 0.5 * epsilon - eps_tilde
        if gap < best_gap:
            best, best_gap = alpha, gap
    if best is None:
        raise BudgetInfeasibleError(
            f"no feasible order in [{lo}, {hi}] for (epsilon={epsilon:g}, delta={delta:g})"
        )
    return best


@dataclass(frozen=True)
class AccountingInputs:
    """Privacy target plus the mechanism shape it must fund."""

    epsilon: float
    delta: float
    pool_size: int
    n_shots: int
    n_test: int
    t_max: int
    alpha: int | None = None

    def __post_init__(self):
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be positive and finite")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must be in (0, 1)")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if not (1 <= self.n_shots < self.pool_size):
            raise ValueError("need 1 <= n_shots < pool_size")
        if self.n_test < 1 or self.t_max < 1:
            raise ValueError("n_test and t_max must be >= 1")
        if self.alpha is not None and self.alpha < 2:
            raise ValueError("alpha must be an integer >= 2")

    @property
    def q(self) -> float:
        return self.n_shots / self.pool_size

    @property
    def steps(self) -> int:
        return self.n_test * self.t_max


@dataclass(frozen=True)
class BudgetPlan:
    """Resolved accounting: what one run is allowed to spend, and where."""

    inputs: AccountingInputs
    alpha: int
    eps_tilde: float
    per_step_budget: float
    beta: float
    per_step_eps: float
    composed_eps_tilde: float
    epsilon_realized: float

    def to_dict(self) -> dict:
        return {
            "inputs": {
                "epsilon": self.inputs.epsilon,
                "delta": self.inputs.delta,
                "pool_size": self.inputs.pool_size,
                "n_shots": self.inputs.n_shots,
                "n_test": self.inputs.n_test,
                "t_max": self.inputs.t_max,
                "alpha": self.inputs.alpha,
                "q": self.inputs.q,
                "steps": self.inputs.steps,
            },
            "alpha": self.alpha,
            "eps_tilde": self.eps_tilde,
            "per_step_budget": self.per_step_budget,
            "beta": self.beta,
            "per_step_eps": self.per_step_eps,
            "composed_eps_tilde": self.composed_eps_tilde,
            "epsilon_realized": self.epsilon_realized,
            "delta": self.inputs.delta,
            "epsilon_target": self.inputs.epsilon,
            "report_id": self.report_id,
        }

    @property
    def report_id(self) -> str:
        return stable_hex(
            "accounting-report",
            str(self.inputs.epsilon),
            str(self.inputs.delta),
            self.inputs.pool_size,
            self.inputs.n_shots,
            self.inputs.n_test,
            self.inputs.t_max,
            self.alpha,
            str(self.beta),
        )


def plan_budget(inputs: AccountingInputs, settings: BisectionSettings = BisectionSettings()) -> BudgetPlan:
    """Split the DP target across all potential steps and calibrate beta.

    The full worst-case spend (n_test queries of t_max tokens each) is
    reserved up front: the per-step RDP budget is eps_tilde / steps, beta is
    the largest per-step cap that fits it, and the realized epsilon after
    composing the actual per-step cost is re-checked against the target.
    """
    alpha = inputs.alpha if inputs.alpha is not None else select_alpha(inputs.epsilon, inputs.delta)
    eps_tilde = dp_to_rdp(inputs.epsilon, inputs.delta, alpha)
    per_step_budget = eps_tilde / inputs.steps
    beta = solve_beta(inputs.q, alpha, per_step_budget, settings)
    per_step_eps = subsampled_rdp(inputs.q, alpha, mozo_curve(beta))
    composed = compose(per_step_eps, inputs.steps)
    epsilon_realized = rdp_to_dp(composed, alpha, inputs.delta)
    if epsilon_realized > inputs.epsilon + 1e-9:
        raise BudgetInfeasibleError(
            f"internal accounting check failed: realized epsilon {epsilon_realized:.6f} "
            f"exceeds target {inputs.epsilon:.6f}"
        )
    return BudgetPlan(
        inputs=inputs,
        alpha=alpha,
        eps_tilde=eps_tilde,
        per_step_budget=per_step_budget,
        beta=beta,
        per_step_eps=per_step_eps,
        composed_eps_tilde=composed,
        epsilon_realized=epsilon_realized,
    )


def write_accounting_report(plan: BudgetPlan, path) -> None:
    """Machine-readable accounting report (JSON, atomically written)."""
    write_json(path, plan.to_dict())
