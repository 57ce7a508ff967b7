import math

import numpy as np
import pytest
from scipy import integrate

from cache_auction import batch
from cache_auction.distributions import Exponential, Uniform
from cache_auction.experiments import run_sweep
from cache_auction.model import AuctionInstance, ConfigError, InterestStructure, QuadraticCost
from cache_auction.simulation import (
    MISMATCH_EXPONENTIAL,
    MISMATCH_UNIFORM,
    EstimateWithError,
    MismatchConfig,
    combined_std_error,
    interim_quantities,
    run_checks,
    simulate,
    simulate_mismatch,
    verify_ic,
    verify_ir,
)

from conftest import micro_market

TRIALS = 4000


class TestEstimateWithError:
    def test_from_samples(self):
        est = EstimateWithError.from_samples(np.array([1.0, 2.0, 3.0]))
        assert est.mean == 2.0
        assert est.std_error == pytest.approx(1.0 / math.sqrt(3))
        assert est.trials == 3

    def test_single_sample_has_zero_error(self):
        est = EstimateWithError.from_samples(np.array([4.2]))
        assert est.std_error == 0.0


class TestSimulate:
    def test_report_invariants(self, uniform_market):
        report = simulate(uniform_market, TRIALS, 0)
        total = 0.0
        for est in report.expected_allocation:
            assert 0.0 <= est.mean <= 1.0
            total += est.mean
        assert total <= 1.0 + 1e-12
        assert report.idle_fraction.mean == pytest.approx(1.0 - total, abs=1e-12)
        for user in report.per_user:
            assert user.expected_utility.mean >= -3 * user.expected_utility.std_error
            assert 0.0 <= user.expected_fraction.mean <= 1.0
        gap = abs(report.er_direct.mean - report.er_virtual.mean)
        assert gap <= 3 * combined_std_error(report.er_direct, report.er_virtual)

    def test_bit_identical_reruns(self, exponential_market):
        assert simulate(exponential_market, 1000, 5) == simulate(exponential_market, 1000, 5)

    def test_no_caching_regime(self, uniform_market):
        expensive = AuctionInstance(
            interests=uniform_market.interests,
            content_prices=(1e9, 1e9, 1e9),
            cost=uniform_market.cost,
            theta=uniform_market.theta,
            distributions=uniform_market.distributions,
        )
        report = simulate(expensive, 500, 0)
        assert report.er_direct.mean == 0.0
        assert report.er_virtual.mean == 0.0
        assert all(est.mean == 0.0 for est in report.expected_allocation)

    def test_trials_validated(self, uniform_market):
        with pytest.raises(ValueError):
            simulate(uniform_market, 0, 0)


class TestRevenueFormAgreement:
    @pytest.mark.parametrize("fixture", ["uniform_market", "exponential_market"])
    def test_direct_and_virtual_forms_agree(self, fixture, request):
        inst = request.getfixturevalue(fixture)
        report = simulate(inst, 10_000, 2)
        gap = abs(report.er_direct.mean - report.er_virtual.mean)
        assert gap <= 3 * combined_std_error(report.er_direct, report.er_virtual)

    def test_two_user_quadrature_cross_check(self):
        # low-dimensional ground truth: integrate both revenue forms exactly
        inst = micro_market(price=1.0)
        h = inst.delivery_cost

        def virtual_surplus(t1, t2):
            w = (2 * t1 - 4 - h) + (2 * t2 - 3 - h) - 1.0
            return max(0.0, w)

        truth, err = integrate.dblquad(
            lambda t2, t1: virtual_surplus(t1, t2) * (1 / 3) * (1 / 2), 1, 4, 1, 3
        )
        assert err < 1e-6
        report = simulate(inst, 40_000, 7)
        assert abs(report.er_virtual.mean - truth) <= 4 * report.er_virtual.std_error
        assert abs(report.er_direct.mean - truth) <= 4 * report.er_direct.std_error


class TestInterimQuantities:
    def test_utility_at_lower_bound_is_exactly_zero(self, uniform_market):
        for j in (0, 5, 9):
            bottom = uniform_market.distributions[j].lower
            q = interim_quantities(uniform_market, j, bottom, bottom, 2000, 1)
            assert q.utility.mean == 0.0
            assert q.utility.std_error == 0.0

    def test_fraction_monotone_in_report(self, uniform_market):
        j = 4
        dist = uniform_market.distributions[j]
        fractions = []
        for tau in np.linspace(dist.lower, dist.upper, 9):
            q = interim_quantities(uniform_market, j, float(tau), float(tau), TRIALS, 3)
            fractions.append(q.fraction)
        for a, b in zip(fractions, fractions[1:]):
            assert b.mean >= a.mean - 3 * combined_std_error(a, b)

    def test_envelope_identity(self, uniform_market):
        # interim utility growth equals theta times the integrated win curve
        j = 4
        dist = uniform_market.distributions[j]
        grid = np.linspace(dist.lower, dist.upper, 41)
        fractions, utilities = [], []
        for tau in grid:
            q = interim_quantities(uniform_market, j, float(tau), float(tau), 8000, 3)
            fractions.append(q.fraction.mean)
            utilities.append(q.utility)
        lhs = utilities[-1].mean - utilities[0].mean
        rhs = uniform_market.theta * float(np.trapezoid(fractions, grid))
        tol = 3 * utilities[-1].std_error + 0.02
        assert abs(lhs - rhs) <= tol

    def test_out_of_support_report_rejected(self, uniform_market):
        with pytest.raises(ConfigError):
            interim_quantities(uniform_market, 0, 99.0, 2.0, 10, 0)

    def test_common_random_numbers(self, uniform_market):
        a = interim_quantities(uniform_market, 2, 2.0, 2.5, 500, 9)
        b = interim_quantities(uniform_market, 2, 2.0, 2.5, 500, 9)
        assert a == b


class TestVerifyIC:
    def test_truthful_mechanism_has_no_violations(self, uniform_market):
        report = verify_ic(uniform_market, 0, 4, 4, TRIALS, 11)
        assert report.passed
        assert report.worst_margin >= 0.0
        assert report.pairs_checked == 16

    def test_diagonal_margin_exactly_zero(self, uniform_market):
        report = verify_ic(uniform_market, 3, 3, 3, 1000, 13)
        assert report.worst_margin == 0.0

    def test_halved_payments_are_detected(self, uniform_market):
        report = verify_ic(uniform_market, 0, 5, 5, TRIALS, 11, payment_scale=0.5)
        assert not report.passed
        assert len(report.violations) >= 1

    def test_grid_size_validated(self, uniform_market):
        with pytest.raises(ValueError):
            verify_ic(uniform_market, 0, 1, 5, 10, 0)


class TestVerifyIR:
    def test_uniform_market_passes(self, uniform_market):
        report = verify_ir(uniform_market, TRIALS, 17)
        assert report.passed
        assert report.exact_bound_violations == 0
        for est in report.utility_at_lower:
            assert est.mean == 0.0

    def test_user_with_no_interests_has_identically_zero_utility(self):
        inst = AuctionInstance(
            interests=InterestStructure(1, 2, ((0,),)),
            content_prices=(0.5,),
            cost=QuadraticCost(0.1),
            theta=1.0,
            distributions=(Uniform(1, 4), Uniform(1, 4)),
        )
        report = verify_ir(inst, 1000, 0)
        assert report.passed
        assert report.interim_minima[1].mean == 0.0
        assert report.interim_minima[1].std_error == 0.0


class TestMismatch:
    def test_epsilon_zero_reproduces_truthful_run_exactly(self, uniform_market):
        base = simulate(uniform_market, 2000, 21).er_direct
        mismatched = simulate_mismatch(
            uniform_market, MismatchConfig(0.0, MISMATCH_UNIFORM), 2000, 21
        )
        assert mismatched == base

    def test_uniform_widening_degrades_gracefully(self, uniform_market):
        base = simulate_mismatch(uniform_market, MismatchConfig(0.0, MISMATCH_UNIFORM), 10_000, 21)
        half = simulate_mismatch(uniform_market, MismatchConfig(0.5, MISMATCH_UNIFORM), 10_000, 21)
        retention = half.mean / base.mean
        noise = 3 * combined_std_error(base, half) / base.mean
        assert retention >= 0.75 - noise

    def test_exponential_overestimate_beats_underestimate(self, exponential_market):
        plus = simulate_mismatch(
            exponential_market, MismatchConfig(0.5, MISMATCH_EXPONENTIAL), 10_000, 23
        )
        minus = simulate_mismatch(
            exponential_market, MismatchConfig(-0.5, MISMATCH_EXPONENTIAL), 10_000, 23
        )
        assert plus.mean > minus.mean + 3 * combined_std_error(plus, minus)

    def test_mode_validation(self):
        with pytest.raises(ConfigError):
            MismatchConfig(-0.1, MISMATCH_UNIFORM)
        with pytest.raises(ConfigError):
            MismatchConfig(-1.0, MISMATCH_EXPONENTIAL)
        with pytest.raises(ConfigError):
            MismatchConfig(0.5, "gamma_shift")

    def test_mode_must_match_distribution_kind(self, uniform_market):
        with pytest.raises(ConfigError):
            simulate_mismatch(uniform_market, MismatchConfig(0.5, MISMATCH_EXPONENTIAL), 10, 0)


class TestTrendSweeps:
    def test_expected_type_trend_is_increasing(self, uniform_market):
        points = run_sweep(uniform_market, "expected_type", [2.0, 4.0, 6.0], TRIALS, 31)
        for a, b in zip(points, points[1:]):
            assert b.er.mean >= a.er.mean - 3 * combined_std_error(a.er, b.er)

    def test_alpha_trend_is_decreasing(self, uniform_market):
        points = run_sweep(uniform_market, "alpha", [0.05, 0.25, 0.45], TRIALS, 33)
        for a, b in zip(points, points[1:]):
            assert b.er.mean <= a.er.mean + 3 * combined_std_error(a.er, b.er)


class TestRunChecks:
    def test_all_checks_pass_on_reference_market(self, uniform_market):
        results = run_checks(
            uniform_market,
            ["ic", "ir", "oracle", "monotonicity", "prop4", "revenue-forms"],
            trials=1500,
            seed=5,
            oracle_profiles=20,
        )
        assert all(r.passed for r in results), [(r.name, r.detail) for r in results]

    def test_unknown_check_rejected(self, uniform_market):
        with pytest.raises(ConfigError):
            run_checks(uniform_market, ["entropy"], 10, 0)
