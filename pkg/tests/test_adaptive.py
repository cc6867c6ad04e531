from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from adasgo.adaptive import (
    AdaptiveConfig,
    ErrorBoundParams,
    adaptive_quadrature,
    priori_bound,
    rho_bound,
    smoothness_bound,
    tail_sum,
    trace_to_json,
)
from adasgo.grid_index import Downset, covering_elements, full_box
from adasgo.methods import AdaptiveSG
from adasgo.problems import BetaDensity, additive_problem
from adasgo.sg_quadrature import product_rule


def _ones(x):
    return np.ones(len(x))


class TestPrioriBound:
    @pytest.mark.parametrize(
        "args,expected", [((12, 5, 0.1), (1.2, 0.7)), ((7, 7, 0.5), (3.5, 0.0)), ((1, 0, 1.0), (1.0, 1.0))]
    )
    def test_examples(self, args, expected):
        assert priori_bound(*args) == pytest.approx(expected)

    def test_invalid(self):
        with pytest.raises(ValueError):
            priori_bound(2, 3, 0.1)


class TestSmoothnessBound:
    def test_identical_sets(self):
        L = full_box((2, 2))
        assert smoothness_bound(L, L, ErrorBoundParams()) == 0.0

    def test_single_term(self):
        L = full_box((2,))
        I = Downset((2,), [(1,)])
        assert smoothness_bound(L, I, ErrorBoundParams(r=1)) == pytest.approx(0.75)

    def test_two_terms(self):
        L = Downset.from_members([(1, 1), (2, 1), (1, 2), (3, 1), (2, 2)])
        I = Downset.from_members([(1, 1), (2, 1), (1, 2)], L.cap)
        assert smoothness_bound(L, I, ErrorBoundParams(r=2)) == pytest.approx(25 / 128)

    @given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.integers(1, 3))
    def test_factorised_tail_matches_enumeration(self, cap, r):
        I = Downset(cap, [(1,) * len(cap)])
        for i in sorted(covering_elements(I))[:2]:
            I.add(i)
        explicit = smoothness_bound(full_box(cap), I, ErrorBoundParams(r=r))
        factorised = smoothness_bound(tuple(cap), I, ErrorBoundParams(r=r))
        assert factorised == pytest.approx(explicit, rel=1e-12, abs=1e-15)
        assert tail_sum(cap, I, r) >= 0


class TestRhoBound:
    def test_single_missing_index(self):
        L = full_box((2,))
        I = Downset((2,), [(1,)])
        assert rho_bound(L, I, 0.1, 2, 1.0).bound == pytest.approx(0.1)

    def test_two_missing(self):
        L = full_box((3,))
        I = Downset((3,), [(1,)])
        assert rho_bound(L, I, 0.1, 1, 1.0).bound == pytest.approx(0.15)

    def test_empty_difference(self):
        L = full_box((2, 2))
        rb = rho_bound(L, L, 0.1, 2)
        assert rb.bound == 0.0 and math.isnan(rb.rho_min)

    @given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.integers(1, 3), st.floats(1e-6, 1.0))
    def test_rho_min_equals_posteriori(self, cap, r, eps):
        I = Downset(cap, [(1,) * len(cap)])
        if math.prod(cap) == 1:
            return
        rb = rho_bound(tuple(cap), I, eps, r)
        _, post = priori_bound(math.prod(cap), len(I), eps)
        assert abs(rb.bound - post) <= 1e-12 * max(1.0, post)

    def test_out_of_range_rho_warns(self):
        L = full_box((3, 3))
        I = Downset((3, 3), [(1, 1)])
        with pytest.warns(UserWarning):
            rho_bound(L, I, 0.1, 2, rho=10.0)


class TestAdaptiveQuadrature:
    def test_constant_stays_at_origin(self):
        res = adaptive_quadrature(AdaptiveConfig(0.5, (3, 3)), _ones)
        assert res.value == pytest.approx(4.0)
        assert res.downset.members() == {(1, 1)}

    def test_result_is_downset_with_bundle(self):
        f = lambda x: np.exp(x[:, 0] + 0.1 * x[:, 1])
        res = adaptive_quadrature(AdaptiveConfig(1e-6, (6, 6)), f)
        b = res.bounds
        assert b.priori >= b.posteriori >= 0
        assert b.card_L == 36 and b.card_L_zero_origin == 49
        assert res.value == pytest.approx((math.e - 1 / math.e) * (math.exp(0.1) - math.exp(-0.1)) / 0.1, abs=1e-6)
        assert res.trace[-1]["value"] == pytest.approx(res.value)
        assert '"index"' in trace_to_json(res)

    def test_prefers_important_dimension(self):
        f = lambda x: np.exp(2 * x[:, 0]) + 0.001 * x[:, 1] ** 2
        res = adaptive_quadrature(AdaptiveConfig(1e-8, (8, 8)), f)
        assert max(i[0] for i in res.downset) > max(i[1] for i in res.downset)

    def test_toy_gradient_integrand(self):
        b55, b52 = BetaDensity(5, 5), BetaDensity(5, 2)
        # maps [-1,1]^2 to [0,1]^2: w = (x+1)/2, Jacobian 1/4
        def f(x):
            w = 0.5 * (x + 1)
            return (w[:, 0] ** 2 + 10 * w[:, 1] ** 2) * b55.pdf(w[:, 0]) * b55.pdf(w[:, 1]) * 0.25
        res = adaptive_quadrature(AdaptiveConfig(1e-10, (8, 8)), f)
        assert res.value == pytest.approx(3.0, abs=1e-9)
        assert b52.second_moment > 0  # mixed marginal from the worked example is a valid density

    def test_additive_objective_50d(self):
        prob = additive_problem(50)
        ref = 50 * integrate.quad(lambda t: math.exp(-t * t), 0, 1, epsabs=1e-14)[0]
        res = AdaptiveSG(1e-7, 8).integrate(prob, prob.integrand(np.ones(50)))
        assert ref == pytest.approx(37.3412066, abs=1e-6)
        assert abs(res.value - ref) <= 1e-5

    def test_budget_truncates(self):
        f = lambda x: np.exp(np.sum(x, axis=1))
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            res = adaptive_quadrature(AdaptiveConfig(1e-14, (8, 8, 8), max_evaluations=200), f)
        assert res.truncated and any("truncated" in str(x.message) for x in w)
        assert res.point_count <= 200

    def test_env_budget(self, monkeypatch):
        monkeypatch.setenv("ADASGO_MAX_EVALS", "50")
        with pytest.warns(UserWarning):
            res = adaptive_quadrature(AdaptiveConfig(1e-14, (8, 8)), lambda x: np.exp(x[:, 0] + x[:, 1]))
        assert res.truncated

    @given(st.floats(0.1, 2.0), st.floats(-1, 1), st.sampled_from(["tra", "cc", "gp"]))
    def test_error_bounds_hold(self, a, b, family):
        f = lambda x: np.exp(a * x[:, 0]) * np.cos(b * x[:, 1])
        cap = (4, 4)
        res = adaptive_quadrature(AdaptiveConfig(1e-3, cap, family), f)
        full = product_rule(family, cap, f).value
        b_ = res.bounds
        assert abs(full - res.value) <= b_.posteriori + 1e-14
        assert b_.posteriori <= b_.priori
        assert abs(b_.rho_form - b_.posteriori) <= 1e-12 * max(1.0, b_.posteriori)
