"""Rate-function bound pieces and the empirical slope estimator."""
import math

import numpy as np
import pytest

from mcsched.analysis import (AnalysisError, BoundInputs, EstimationError,
                              estimate_rate_function, i_ag, i_u, i_x,
                              kl_bernoulli, _iag_rate_iid)
from mcsched.model import IidBernoulli0L, TwoStateMarkov


class TestIx:
    def test_values(self):
        assert i_x(1e-12) == pytest.approx(0.0, abs=1e-9)
        assert i_x(0.5) == pytest.approx(math.log(2), rel=1e-12)
        assert i_x(0.75) == pytest.approx(math.log(4), rel=1e-12)

    def test_domain(self):
        for q in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(AnalysisError):
                i_x(q)


class TestKl:
    def test_hand_values(self):
        # D(0.3||0.5) = 0.3 ln 0.6 + 0.7 ln 1.4
        assert kl_bernoulli(0.3, 0.5) == pytest.approx(
            0.3 * math.log(0.6) + 0.7 * math.log(1.4), rel=1e-12)
        assert round(kl_bernoulli(0.3, 0.5), 4) == 0.0823
        assert kl_bernoulli(1.0, 0.9) == pytest.approx(math.log(1 / 0.9), rel=1e-12)
        assert kl_bernoulli(0.5, 0.5) == 0.0

    def test_domain(self):
        with pytest.raises(AnalysisError):
            kl_bernoulli(0.5, 0.0)
        with pytest.raises(AnalysisError):
            kl_bernoulli(1.2, 0.5)


class TestIag:
    def test_unit_arrivals_are_never_bursty(self):
        # L = 1: arrivals over t slots can never strictly exceed n*t, so the
        # burst event is impossible at every window length
        res = i_ag(IidBernoulli0L(0.9, 1), 0.0)
        assert math.isinf(res.value) and res.interior

    def test_kl_lower_bound_from_counting_queues(self):
        # with alpha' = 1/L, the decay rate is at least D(alpha || alpha')
        res = i_ag(IidBernoulli0L(0.3, 2), 0.0)
        assert res.value >= kl_bernoulli(0.3, 0.5) - 1e-9
        # exact value: min_t t*D(1/2 || 0.3) is attained at t = 1
        assert res.value == pytest.approx(kl_bernoulli(0.5, 0.3), rel=1e-12)
        assert res.t_star == 1

    def test_interior_minimum_matches_grid_oracle(self):
        alpha, L, x = 0.3, 2, 2.0
        res = i_ag(IidBernoulli0L(alpha, L), x, t_max=200)
        grid = [_iag_rate_iid(alpha, L, x, t) for t in range(1, 201)]
        assert res.value == pytest.approx(min(grid), rel=1e-12)
        assert res.t_star == int(np.argmin(grid)) + 1
        assert res.interior

    def test_monotone_in_x(self):
        arr = IidBernoulli0L(0.3, 2)
        vals = [i_ag(arr, x).value for x in (0.0, 0.5, 1.0, 2.0, 4.0)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_zero_rate_when_mean_infeasible(self):
        assert i_ag(IidBernoulli0L(0.6, 2), 0.0).value == 0.0

    def test_markov_chernoff_matches_iid_closed_form(self):
        # a two-state chain with identical rows is i.i.d.; the numeric Chernoff
        # route must agree with the closed form
        alpha, L = 0.3, 2
        chain = TwoStateMarkov(((alpha, 1 - alpha), (alpha, 1 - alpha)), burst=L)
        for x in (0.0, 0.5, 1.0, 2.0):
            a = i_ag(IidBernoulli0L(alpha, L), x, t_max=60)
            b = i_ag(chain, x, t_max=60)
            if math.isinf(a.value):
                assert math.isinf(b.value)
            else:
                assert b.value == pytest.approx(a.value, abs=1e-6)

    def test_markov_bounded_support(self):
        chain = TwoStateMarkov(((0.5, 0.5), (0.1, 0.9)), burst=1)
        assert math.isinf(i_ag(chain, 0.0).value)

    def test_validation(self):
        with pytest.raises(AnalysisError):
            i_ag(IidBernoulli0L(0.3, 2), -1.0)
        with pytest.raises(AnalysisError):
            i_ag(IidBernoulli0L(0.3, 2), 0.0, t_max=0)


class TestIu:
    def test_b0_collapse(self):
        arr = IidBernoulli0L(0.3, 2)
        res = i_u(BoundInputs(q=0.5, b=0, arrival=arr))
        assert res.value == pytest.approx(
            min(i_x(0.5), i_ag(arr, 0.0).value), rel=1e-12)

    def test_unit_arrivals_match_known_optimum_shape(self):
        # for L = 1 the bound is exactly (b+1) log(1/(1-q))
        res = i_u(BoundInputs(q=0.75, b=4, arrival=IidBernoulli0L(0.5, 1)))
        assert res.value <= 5 * math.log(4) + 1e-12
        assert res.value > 0
        assert res.value == pytest.approx(5 * math.log(4), rel=1e-12)
        assert res.argmin.kind == "service"

    def test_branch_enumeration_cross_check(self):
        arr = IidBernoulli0L(0.3, 2)
        q, b = 0.75, 2
        res = i_u(BoundInputs(q=q, b=b, arrival=arr))
        direct = min([(b + 1) * i_x(q)] +
                     [i_ag(arr, float(b - c)).value + c * i_x(q)
                      for c in range(b + 1)])
        assert res.value == pytest.approx(direct, rel=1e-12)
        assert res.value > 0

    def test_value_invariant_to_branch_order(self):
        import random
        arr = IidBernoulli0L(0.3, 2)
        res = i_u(BoundInputs(q=0.6, b=3, arrival=arr))
        vals = [br.value for br in res.branches]
        for _ in range(5):
            random.shuffle(vals)
            assert min(vals) == res.value

    def test_never_exceeds_service_branch(self):
        for alpha, L in ((0.1, 2), (0.3, 2), (0.1, 5)):
            for q in (0.5, 0.75):
                for b in range(0, 5):
                    res = i_u(BoundInputs(q=q, b=b, arrival=IidBernoulli0L(alpha, L)))
                    assert res.value <= (b + 1) * i_x(q) + 1e-12

    def test_positivity_grid(self):
        for alpha in (0.1, 0.3):
            for L in (2, 5):
                if alpha * L >= 1:
                    continue
                for q in (0.5, 0.75):
                    for b in range(0, 5):
                        res = i_u(BoundInputs(q=q, b=b,
                                              arrival=IidBernoulli0L(alpha, L)))
                        floor = min((b + 1) * i_x(q), kl_bernoulli(alpha, 1 / L))
                        assert res.value > 0
                        assert res.value >= floor - 1e-9

    def test_validation(self):
        with pytest.raises(AnalysisError):
            i_u(BoundInputs(q=1.0, b=1, arrival=IidBernoulli0L(0.3, 2)))
        with pytest.raises(AnalysisError):
            i_u(BoundInputs(q=0.5, b=-1, arrival=IidBernoulli0L(0.3, 2)))


class TestEstimator:
    def test_two_point_exact(self):
        # Phat = e^-1 at n=10 and e^-2 at n=20 gives slope 0.1 exactly
        s = 1_000_000
        pts = [(10, round(s * math.exp(-1)), s), (20, round(s * math.exp(-2)), s)]
        est = estimate_rate_function(pts, b=1)
        assert est.slope == pytest.approx(0.1, abs=1e-4)
        assert math.isinf(est.stderr)

    def test_flat_line(self):
        pts = [(n, 5000, 100_000) for n in (10, 20, 30, 40)]
        est = estimate_rate_function(pts, b=2)
        assert est.slope == pytest.approx(0.0, abs=1e-9)

    def test_synthetic_monte_carlo(self):
        rng = np.random.default_rng(42)
        samples = 1_000_000
        pts = []
        for n in range(10, 101, 10):
            p = math.exp(-0.05 * n)
            pts.append((n, int(rng.binomial(samples, p)), samples))
        est = estimate_rate_function(pts, b=4)
        assert 0.045 <= est.slope <= 0.055
        assert est.stderr < 0.01

    def test_drops_low_count_points(self):
        pts = [(10, 100, 1000), (20, 4, 1000), (30, 0, 1000), (40, 50, 1000)]
        est = estimate_rate_function(pts, b=1)
        assert len(est.points) == 2
        assert {d.n for d in est.dropped} == {20, 30}
        assert any("zero violations" in d.reason for d in est.dropped)

    def test_too_few_points_error_names_label(self):
        with pytest.raises(EstimationError, match="dssg"):
            estimate_rate_function([(10, 100, 1000), (20, 0, 1000)], b=3,
                                   label="dssg")

    def test_single_n_error(self):
        pts = [(10, 100, 1000), (10, 90, 1000), (10, 95, 1000)]
        with pytest.raises(EstimationError):
            estimate_rate_function(pts, b=1)
