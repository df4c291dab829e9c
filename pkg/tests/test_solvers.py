"""Bisection solvers: hand-checkable brackets, a brute-force grid oracle for
the mixing-weight solver, and fixed-point recovery for the noise-level solver.
"""

import math

import numpy as np
import pytest

from dpsmozo.accountant import mozo_curve, subsampled_rdp
from dpsmozo.dist import LogitVector, log_softmax, sym_renyi_divergence
from dpsmozo.errors import BudgetInfeasibleError
from dpsmozo.solvers import (
    BETA_CAP,
    BisectionSettings,
    LambdaBounds,
    bisect_max_feasible,
    solve_beta,
    solve_lambda,
)
from helpers import grid_max_lambda


class TestBisectMaxFeasible:
    def test_step_predicate(self):
        got = bisect_max_feasible(lambda x: x <= 0.3, 0.0, 1.0, BisectionSettings(1e-6, 100))
        assert abs(got - 0.3) <= 1e-6

    def test_smooth_predicate(self):
        got = bisect_max_feasible(lambda x: x * x <= 2.0, 0.0, 2.0, BisectionSettings(1e-6, 100))
        assert abs(got - math.sqrt(2.0)) <= 1e-6

    def test_fully_feasible_returns_upper_bracket(self):
        assert bisect_max_feasible(lambda x: True, 0.0, 1.5, BisectionSettings(1e-6, 100)) == 1.5

    def test_infeasible_lower_bracket_rejected(self):
        with pytest.raises(ValueError, match="lower bracket"):
            bisect_max_feasible(lambda x: x < 0.0, 0.0, 1.0, BisectionSettings(1e-6, 100))

    def test_returned_point_is_feasible(self):
        for threshold in (0.1, 0.5, 0.9, 1.2):
            got = bisect_max_feasible(
                lambda x, t=threshold: x <= t, 0.0, 1.5, BisectionSettings(1e-6, 100)
            )
            assert got <= threshold


def random_logit_pair(rng, size=8, scale=3.0):
    one = LogitVector(rng.normal(size=size) * scale)
    zero = LogitVector(rng.normal(size=size) * scale)
    return one, zero


class TestSolveLambda:
    def test_identical_inputs_hit_the_ceiling(self):
        vec = LogitVector(np.array([1.0, -0.5, 2.0]))
        assert solve_lambda(vec, vec, 0.01, 2.0) == 1.5

    def test_slack_budget_hits_the_ceiling(self):
        rng = np.random.default_rng(0)
        one, zero = random_logit_pair(rng)
        assert solve_lambda(one, zero, 1e6, 2.0) == 1.5

    def test_agrees_with_grid_oracle(self):
        """Bisection must land within 1e-3 of an exhaustive 1e-4-step grid
        search on random logit pairs."""
        rng = np.random.default_rng(7)
        beta, alpha = 0.1, 2.0
        worst = 0.0
        for _ in range(100):
            one, zero = random_logit_pair(rng)
            got = solve_lambda(one, zero, beta, alpha)
            expected = grid_max_lambda(
                one.scores, zero.scores, zero.scores, alpha, beta * alpha
            )
            worst = max(worst, abs(got - expected))
        assert worst <= 1e-3

    def test_constraint_holds_at_returned_weight(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            one, zero = random_logit_pair(rng)
            alpha = float(rng.choice([2.0, 4.0, 8.0]))
            beta = float(rng.uniform(0.005, 0.25))
            lam = solve_lambda(one, zero, beta, alpha)
            mixed_scores = lam * one.scores + (1.0 - lam) * zero.scores
            div = sym_renyi_divergence(
                log_softmax(LogitVector(mixed_scores)), log_softmax(zero), alpha
            )
            assert div <= beta * alpha + 1e-9

    def test_monotone_in_beta(self):
        rng = np.random.default_rng(5)
        one, zero = random_logit_pair(rng)
        betas = [0.001, 0.01, 0.1, 1.0]
        weights = [solve_lambda(one, zero, b, 2.0) for b in betas]
        assert all(lo <= hi + 1e-9 for lo, hi in zip(weights, weights[1:]))

    def test_zero_beta_returns_zero(self):
        rng = np.random.default_rng(13)
        one, zero = random_logit_pair(rng)
        assert solve_lambda(one, zero, 0.0, 2.0) == 0.0

    def test_custom_upper_bound_respected(self):
        rng = np.random.default_rng(17)
        one, zero = random_logit_pair(rng)
        lam = solve_lambda(one, zero, 1e6, 2.0, bounds=LambdaBounds(0.0, 0.75))
        assert lam == 0.75


class TestSolveBeta:
    def test_recovers_known_fixed_point(self):
        """If the target budget is exactly the cost of beta=0.1, the solver
        must return 0.1 (up to bisection tolerance)."""
        q, alpha = 0.01, 4
        target = subsampled_rdp(q, alpha, mozo_curve(0.1))
        got = solve_beta(q, alpha, target)
        assert abs(got - 0.1) <= 1e-5

    def test_solution_saturates_the_budget(self):
        q, alpha, budget = 0.02, 6, 1e-4
        beta = solve_beta(q, alpha, budget)
        assert subsampled_rdp(q, alpha, mozo_curve(beta)) <= budget
        # 10 tolerance-widths above the solution must overshoot the budget
        assert subsampled_rdp(q, alpha, mozo_curve(beta + 1e-5)) > budget

    def test_monotone_in_budget(self):
        q, alpha = 0.01, 4
        budgets = [1e-5, 1e-4, 1e-3, 1e-2]
        betas = [solve_beta(q, alpha, b) for b in budgets]
        assert all(lo <= hi + 1e-12 for lo, hi in zip(betas, betas[1:]))

    def test_huge_budget_capped(self):
        assert solve_beta(0.001, 2, 1e9) == BETA_CAP

    def test_tiny_budget_rejected(self):
        with pytest.raises(BudgetInfeasibleError, match="budget too small"):
            solve_beta(0.5, 8, 1e-12)

    def test_nonpositive_budget_rejected(self):
        with pytest.raises(ValueError):
            solve_beta(0.01, 4, 0.0)
