import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anycastlb.costs import (
    OVERLOAD,
    OffloadCost,
    OverloadCost,
    eval_g,
    eval_g_vec,
    eval_h,
    eval_h_vec,
    is_overload,
    minimize_1d,
    solve_s_subproblem,
    solve_s_subproblem_numeric,
    solve_x_subproblem,
    solve_x_subproblem_numeric,
    solve_s_vec,
    solve_x_vec,
)


class TestEvalG:
    def test_midpoint_value(self):
        cost = OverloadCost(eta=1.0, threshold=0.7)
        assert eval_g(cost, 0.35) == pytest.approx(0.70)

    def test_zero_load_free(self):
        assert eval_g(OverloadCost(1.0, 0.7), 0.0) == 0.0

    def test_at_threshold_overloads(self):
        cost = OverloadCost(1.0, 0.7)
        assert is_overload(eval_g(cost, 0.7))
        assert is_overload(eval_g(cost, 1.1))

    def test_negative_load_rejected(self):
        with pytest.raises(ValueError):
            eval_g(OverloadCost(1.0, 0.7), -0.1)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_convexity(self, seed):
        rng = np.random.default_rng(seed)
        cost = OverloadCost(rng.uniform(0.5, 5.0), rng.uniform(0.5, 2.0))
        s1, s2 = rng.uniform(0.0, cost.threshold * 0.999, size=2)
        lam = rng.uniform(0.0, 1.0)
        mid = eval_g(cost, lam * s1 + (1 - lam) * s2)
        assert mid <= lam * eval_g(cost, s1) + (1 - lam) * eval_g(cost, s2) + 1e-12


class TestEvalH:
    def test_full_routing_free(self):
        assert eval_h(OffloadCost(10.0, 1.0, 0.5), 1.0) == 0.0

    def test_full_offload_value(self):
        assert eval_h(OffloadCost(10.0, 1.0, 0.5), 0.0) == pytest.approx(15.0)

    def test_zero_arrival_free(self):
        cost = OffloadCost(10.0, 0.0, 0.5)
        for x in (0.0, 0.3, 1.0):
            assert eval_h(cost, x) == 0.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            eval_h(OffloadCost(1.0, 1.0, 0.0), 1.5)


class TestSolveS:
    def test_zero_multiplier(self):
        assert solve_s_subproblem(OverloadCost(1.0, 0.7), 0.0) == 0.0

    def test_interior_value(self):
        # verified against a 1e-5 grid over [0, 0.7] of g(s) - 4 s
        cost = OverloadCost(1.0, 0.7)
        s = solve_s_subproblem(cost, 4.0)
        assert s == pytest.approx(0.35)
        grid = np.arange(0.0, 0.7, 1e-5)
        vals = cost.eta * grid / (1.0 - grid / cost.threshold) - 4.0 * grid
        assert abs(grid[np.argmin(vals)] - s) < 2e-5

    def test_multiplier_equal_eta(self):
        assert solve_s_subproblem(OverloadCost(1.0, 0.7), 1.0) == 0.0

    def test_negative_multiplier_rejected(self):
        with pytest.raises(ValueError):
            solve_s_subproblem(OverloadCost(1.0, 0.7), -1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_nondecreasing_in_multiplier(self, seed):
        rng = np.random.default_rng(seed)
        cost = OverloadCost(rng.uniform(0.2, 5.0), rng.uniform(0.2, 2.0))
        mus = np.sort(rng.uniform(0.0, 50.0, size=4))
        vals = [solve_s_subproblem(cost, m) for m in mus]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


class TestSolveX:
    def test_no_coupling_full_routing(self):
        assert solve_x_subproblem(OffloadCost(10.0, 1.0, 0.5), 0.0) == 1.0

    def test_interior_branch(self):
        # c1 = 10, c2 = -5; grid-checked below
        cost = OffloadCost(10.0, 1.0, 0.5)
        x = solve_x_subproblem(cost, 10.0)
        assert x == pytest.approx(0.75)
        grid = np.arange(0.0, 1.0 + 1e-5, 1e-5)
        vals = [eval_h(cost, g) + cost.arrival * 10.0 * g for g in grid]
        assert abs(grid[int(np.argmin(vals))] - x) < 2e-5

    def test_zero_branch(self):
        # c2 = -10 exceeds 2 c1 = 2 in magnitude
        cost = OffloadCost(1.0, 1.0, 0.0)
        x = solve_x_subproblem(cost, 10.0)
        assert x == 0.0
        grid = np.arange(0.0, 1.0 + 1e-5, 1e-5)
        vals = [eval_h(cost, g) + cost.arrival * 10.0 * g for g in grid]
        assert grid[int(np.argmin(vals))] == 0.0

    def test_zero_arrival_convention(self):
        assert solve_x_subproblem(OffloadCost(1.0, 0.0, 0.5), 3.0) == 1.0

    def test_branch_agreement_at_ties(self):
        # c2 = 0: both the first and second branch give x* = 1
        cost = OffloadCost(2.0, 1.0, 0.5)
        beta_tie = cost.gamma_cost * cost.d
        assert solve_x_subproblem(cost, beta_tie) == 1.0
        # 2 c1 = -c2: second branch gives 0, third gives 0
        cost2 = OffloadCost(1.0, 1.0, 0.0)
        assert solve_x_subproblem(cost2, 2.0) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_nonincreasing_in_coupling(self, seed):
        rng = np.random.default_rng(seed)
        cost = OffloadCost(rng.uniform(0.5, 10.0), rng.uniform(0.1, 3.0), rng.uniform(0.0, 1.0))
        betas = np.sort(rng.uniform(0.0, 30.0, size=4))
        vals = [solve_x_subproblem(cost, b) for b in betas]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


class TestMinimize1D:
    def test_quadratic(self):
        assert minimize_1d(lambda x: (x - 0.3) ** 2, 0.0, 1.0) == pytest.approx(0.3, abs=1e-9)

    def test_monotone(self):
        assert minimize_1d(lambda x: x, 0.0, 1.0) == pytest.approx(0.0, abs=1e-9)

    def test_matches_closed_form(self):
        cost = OverloadCost(1.0, 0.7)
        f = lambda s: cost.eta * s / (1.0 - s / cost.threshold) - 4.0 * s
        assert minimize_1d(f, 0.0, 0.7 - 1e-12) == pytest.approx(0.35, abs=1e-6)

    def test_bad_bracket_rejected(self):
        with pytest.raises(ValueError):
            minimize_1d(lambda x: x, 1.0, 0.0)

    def test_beats_coarse_grid(self):
        f = lambda x: math.cosh(3.0 * (x - 0.41))
        xhat = minimize_1d(f, 0.0, 1.0)
        grid_min = min(f(v) for v in np.arange(0.0, 1.0 + 1e-3, 1e-3))
        assert f(xhat) <= grid_min + 1e-15


def test_closed_forms_match_numeric_oracle():
    """1000 random draws per family: closed form vs golden-section argmin."""
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        eta = rng.uniform(0.2, 5.0)
        thr = rng.uniform(0.3, 2.0)
        mu = rng.uniform(0.0, 40.0)
        cost = OverloadCost(eta, thr)
        closed = solve_s_subproblem(cost, mu)
        numeric = solve_s_subproblem_numeric(
            lambda s: eta * s / (1.0 - s / thr) if s < thr else 1e300, thr - 1e-12, mu)
        assert abs(closed - numeric) < 1e-6
    for _ in range(1000):
        gam = rng.uniform(0.5, 10.0)
        arr = rng.uniform(0.1, 3.0)
        d = rng.uniform(0.0, 1.0)
        beta = rng.uniform(0.0, 30.0)
        cost = OffloadCost(gam, arr, d)
        closed = solve_x_subproblem(cost, beta)
        numeric = solve_x_subproblem_numeric(lambda x: eval_h(cost, x), arr, beta)
        assert abs(closed - numeric) < 1e-6


def test_vector_forms_match_scalar():
    rng = np.random.default_rng(5)
    n = 16
    eta = rng.uniform(0.2, 5.0, n)
    thr = rng.uniform(0.3, 2.0, n)
    gam = rng.uniform(0.5, 10.0, n)
    arr = rng.uniform(0.0, 3.0, n)
    arr[0] = 0.0
    d = rng.uniform(0.0, 1.0, n)
    mu = rng.uniform(0.0, 20.0, n)
    mu[1] = 0.0
    beta = rng.uniform(0.0, 20.0, n)
    s_vec = solve_s_vec(eta, thr, mu)
    x_vec = solve_x_vec(gam, arr, d, beta)
    for i in range(n):
        assert s_vec[i] == solve_s_subproblem(OverloadCost(eta[i], thr[i]), mu[i])
        assert x_vec[i] == solve_x_subproblem(OffloadCost(gam[i], arr[i], d[i]), beta[i])
    s = rng.uniform(0.0, 1.2 * thr)
    gv, over = eval_g_vec(eta, thr, s)
    hv = eval_h_vec(gam, arr, d, np.clip(x_vec, 0, 1))
    for i in range(n):
        scalar = eval_g(OverloadCost(eta[i], thr[i]), s[i])
        if is_overload(scalar):
            assert over[i]
        else:
            assert gv[i] == scalar
        assert hv[i] == eval_h(OffloadCost(gam[i], arr[i], d[i]), x_vec[i])


def test_overload_sentinel_is_not_a_float():
    assert not isinstance(OVERLOAD, float)
    assert repr(OVERLOAD) == "OVERLOAD"
    assert is_overload(OVERLOAD) and not is_overload(float("inf"))
