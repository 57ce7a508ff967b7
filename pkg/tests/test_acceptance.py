"""Acceptance suite: every release criterion with its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion.  Tolerances are fixed here, not calibrated at runtime.
"""

import time

import numpy as np
import pytest

from cache_auction import batch
from cache_auction.distributions import Exponential, Uniform, sample
from cache_auction.experiments import (
    homogeneous_instance,
    run_sweep,
    section4_exponential_instance,
    section4_uniform_instance,
)
from cache_auction.mechanism import (
    BRANCH_FULL,
    BRANCH_THRESHOLD,
    payment_closed_form,
    payment_oracle,
    run_mechanism,
)
from cache_auction.model import QuadraticCost
from cache_auction.quality import er_curve, optimal_theta_closed_form
from cache_auction.simulation import (
    MISMATCH_EXPONENTIAL,
    MISMATCH_UNIFORM,
    MismatchConfig,
    combined_std_error,
    simulate,
    simulate_mismatch,
    verify_ic,
    verify_ir,
)

from conftest import micro_market

TRIALS = 10_000
SEED = 9

UNIFORM_REFERENCE_ALLOCATION = (0.17, 0.657, 0.146)
EXPONENTIAL_REFERENCE_ALLOCATION = (0.183, 0.259, 0.175)
ALLOCATION_TOLERANCE = 0.03


def report(num: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {num:02d}: {status} - {detail}")
    assert passed, detail


@pytest.fixture(scope="module")
def uniform_report():
    return simulate(section4_uniform_instance(), TRIALS, SEED)


@pytest.fixture(scope="module")
def exponential_report():
    return simulate(section4_exponential_instance(), TRIALS, SEED)


def test_criterion_01_uniform_expected_allocation(uniform_report):
    start = time.monotonic()
    rep = simulate(section4_uniform_instance(), TRIALS, SEED)
    elapsed = time.monotonic() - start
    got = tuple(e.mean for e in rep.expected_allocation)
    deviations = [abs(g - r) for g, r in zip(got, UNIFORM_REFERENCE_ALLOCATION)]
    ok = max(deviations) <= ALLOCATION_TOLERANCE and elapsed < 10.0
    report(
        1,
        ok,
        f"uniform E[p*]={tuple(round(g, 4) for g in got)} vs "
        f"{UNIFORM_REFERENCE_ALLOCATION} (max dev {max(deviations):.4f}, "
        f"tol {ALLOCATION_TOLERANCE}), runtime {elapsed:.2f}s < 10s",
    )


def test_criterion_02_exponential_expected_allocation(uniform_report, exponential_report):
    got = tuple(e.mean for e in exponential_report.expected_allocation)
    deviations = [abs(g - r) for g, r in zip(got, EXPONENTIAL_REFERENCE_ALLOCATION)]
    idle_gap = exponential_report.idle_fraction.mean - uniform_report.idle_fraction.mean
    idle_noise = 3 * combined_std_error(
        exponential_report.idle_fraction, uniform_report.idle_fraction
    )
    ok = max(deviations) <= ALLOCATION_TOLERANCE and idle_gap > idle_noise
    report(
        2,
        ok,
        f"exponential E[p*]={tuple(round(g, 4) for g in got)} "
        f"(max dev {max(deviations):.4f}), idle gap {idle_gap:.4f} > 3se {idle_noise:.4f}",
    )


def test_criterion_03_optimal_quality():
    closed = optimal_theta_closed_form(QuadraticCost(0.1), 1.0)
    inst = homogeneous_instance(
        num_users=100,
        inclusion_probs=(0.7, 0.5, 0.4),
        dist=Uniform(1.0, 4.0),
        cost=QuadraticCost(0.1),
        seed=0,
    )
    sweep = er_curve(inst, range(1, 11), TRIALS, SEED)
    ok = closed == 5.0 and sweep.theta_star == 5.0
    report(3, ok, f"closed-form theta*={closed} (exact), sweep argmax={sweep.theta_star}")


def test_criterion_04_payment_oracle_equivalence():
    start = time.monotonic()
    worst = 0.0
    per_instance = 1000
    for inst in (section4_uniform_instance(), section4_exponential_instance()):
        types = batch.sample_types(inst, per_instance, SEED)
        for row in types:
            for j in range(inst.num_users):
                closed = payment_closed_form(inst, row, j).payment
                brute = payment_oracle(inst, row, j, 128)
                worst = max(worst, abs(closed - brute))
    elapsed = time.monotonic() - start
    ok = worst <= 1e-6 and elapsed < 60.0
    report(
        4,
        ok,
        f"closed form vs oracle over 2x{per_instance} profiles: "
        f"max |diff|={worst:.3g} <= 1e-6, runtime {elapsed:.1f}s < 60s",
    )


def test_criterion_05_revenue_form_agreement(uniform_report, exponential_report):
    cases = {
        "uniform": uniform_report,
        "exponential": exponential_report,
        "micro": simulate(micro_market(1.0), TRIALS, SEED),
        "homogeneous": simulate(
            homogeneous_instance(
                num_users=100, inclusion_probs=(0.7, 0.5, 0.4), dist=Uniform(1, 4), seed=0
            ),
            TRIALS,
            SEED,
        ),
    }
    gaps = {}
    ok = True
    for name, rep in cases.items():
        gap = abs(rep.er_direct.mean - rep.er_virtual.mean)
        bound = 3 * combined_std_error(rep.er_direct, rep.er_virtual)
        gaps[name] = f"{gap:.4f}<={bound:.4f}"
        ok = ok and gap <= bound
    report(5, ok, f"direct vs virtual revenue: {gaps}")


def test_criterion_06_zero_payment_without_allocation():
    checked = 0
    ok = True
    for inst in (section4_uniform_instance(), section4_exponential_instance(), micro_market(1.0)):
        out = batch.evaluate(inst, batch.sample_types(inst, TRIALS, SEED))
        idle = out.user_share == 0.0
        checked += int(idle.sum())
        ok = ok and bool(np.all(out.payments[idle] == 0.0))
    report(6, ok, f"all {checked} zero-share user realizations paid exactly 0")


def test_criterion_07_empirical_incentive_compatibility():
    total_violations = 0
    worst = float("inf")
    for inst in (section4_uniform_instance(), section4_exponential_instance()):
        for j in range(inst.num_users):
            rep = verify_ic(inst, j, 5, 5, TRIALS, SEED)
            total_violations += len(rep.violations)
            worst = min(worst, rep.worst_margin)
    mutated = verify_ic(section4_uniform_instance(), 0, 5, 5, TRIALS, SEED, payment_scale=0.5)
    ok = total_violations == 0 and len(mutated.violations) >= 1
    report(
        7,
        ok,
        f"IC: {total_violations} violations over 20 user grids (worst margin {worst:.3g}); "
        f"halved-payment mutation flagged {len(mutated.violations)} violations",
    )


def test_criterion_08_individual_rationality():
    ok = True
    details = []
    for name, inst in (
        ("uniform", section4_uniform_instance()),
        ("exponential", section4_exponential_instance()),
    ):
        rep = verify_ir(inst, TRIALS, SEED)
        endpoint_ok = all(
            abs(est.mean) <= 3 * est.std_error or est.mean == 0.0
            for est in rep.utility_at_lower
        )
        ok = ok and rep.passed and endpoint_ok and rep.exact_bound_violations == 0
        details.append(f"{name}: exact bound violations={rep.exact_bound_violations}")
    report(8, ok, "; ".join(details) + "; interim utility at support bottom = 0 within 3se")


def test_criterion_09_virtual_valuation_mean_identity():
    rng = np.random.Generator(np.random.Philox(SEED))
    details = []
    ok = True
    for dist, target in ((Uniform(1, 4), 1.0), (Exponential(0.1), 0.0)):
        values = dist.virtual(sample(dist, rng, 100_000))
        se = values.std(ddof=1) / np.sqrt(values.size)
        gap = abs(values.mean() - target)
        ok = ok and gap < 5 * se
        details.append(f"{dist!r}: |mean-{target}|={gap:.5f} < 5se={5 * se:.5f}")
    report(9, ok, "; ".join(details))


def _monotone(points, direction: str) -> bool:
    for a, b in zip(points, points[1:]):
        slack = 3 * combined_std_error(a.er, b.er)
        if direction == "up" and b.er.mean < a.er.mean - slack:
            return False
        if direction == "down" and b.er.mean > a.er.mean + slack:
            return False
    return True


def test_criterion_10_monotone_trends():
    uniform = section4_uniform_instance()
    exponential = section4_exponential_instance()
    width_base = uniform.with_distributions([Uniform(3.5, 6.5)] * 10)
    sweeps = (
        ("expected_type", uniform, np.arange(2.0, 6.51, 0.5), "up"),
        ("support_width", width_base, np.arange(1.0, 9.01, 1.0), "down"),
        ("lambda", exponential, np.arange(0.05, 0.501, 0.05), "down"),
        ("popularity_k", uniform, range(1, 11), "up"),
        ("num_users", uniform, range(5, 51, 5), "up"),
        ("alpha", uniform, np.arange(0.05, 0.501, 0.05), "down"),
    )
    failures = []
    for param, base, values, direction in sweeps:
        points = run_sweep(base, param, list(values), TRIALS, SEED)
        if not _monotone(points, direction):
            failures.append(param)
    report(
        10,
        not failures,
        f"six parameter trends monotone at 3se slack (failures: {failures or 'none'})",
    )


def test_criterion_11_mismatch_robustness():
    uniform = section4_uniform_instance()
    base = simulate_mismatch(uniform, MismatchConfig(0.0, MISMATCH_UNIFORM), TRIALS, SEED)
    half = simulate_mismatch(uniform, MismatchConfig(0.5, MISMATCH_UNIFORM), TRIALS, SEED)
    retention = half.mean / base.mean
    noise = 3 * combined_std_error(base, half) / base.mean
    uniform_ok = retention >= 0.75 - noise

    exponential = section4_exponential_instance()
    plus = simulate_mismatch(exponential, MismatchConfig(0.5, MISMATCH_EXPONENTIAL), TRIALS, SEED)
    minus = simulate_mismatch(exponential, MismatchConfig(-0.5, MISMATCH_EXPONENTIAL), TRIALS, SEED)
    exp_ok = plus.mean >= minus.mean - 3 * combined_std_error(plus, minus)
    report(
        11,
        uniform_ok and exp_ok,
        f"uniform eps=0.5 retention {retention:.3f} >= 0.75-{noise:.3f}; "
        f"exponential ER(+0.5)={plus.mean:.2f} >= ER(-0.5)={minus.mean:.2f}",
    )


def test_criterion_12_golden_micro_market():
    tol = 1e-12
    checks = []

    # threshold branch: both users pay their critical report
    inst = micro_market(price=1.0)
    outcome = run_mechanism(inst, [3.0, 2.0])
    checks += [
        outcome.allocation.fractions == (1.0,),
        abs(outcome.virtual_surplus - 1.8) <= tol,
        abs(outcome.realized_sp_profit - 2.0) <= tol,
        outcome.certificates[0].branch == BRANCH_THRESHOLD,
        abs(outcome.certificates[0].beta - 0.0) <= tol,
        abs(outcome.certificates[0].phi_at_lower - (-2.2)) <= tol,
        abs(outcome.certificates[0].phi_at_t - 1.8) <= tol,
        abs(outcome.certificates[0].xi - 2.1) <= tol,
        abs(outcome.certificates[0].integral_value - 0.9) <= tol,
        abs(outcome.payments[0] - 2.1) <= tol,
        outcome.certificates[1].branch == BRANCH_THRESHOLD,
        abs(outcome.certificates[1].xi - 1.1) <= tol,
        abs(outcome.payments[1] - 1.1) <= tol,
    ]

    # full branch: both users pay the quality-scaled support bottom
    cheap = micro_market(price=0.2)
    outcome_full = run_mechanism(cheap, [3.0, 2.9])
    checks += [
        abs(outcome_full.virtual_surplus - 4.4) <= tol,
        outcome_full.certificates[0].branch == BRANCH_FULL,
        abs(outcome_full.certificates[0].phi_at_lower - 0.4) <= tol,
        abs(outcome_full.certificates[0].integral_value - 2.0) <= tol,
        abs(outcome_full.payments[0] - 1.0) <= tol,
        outcome_full.certificates[1].branch == BRANCH_FULL,
        abs(outcome_full.certificates[1].integral_value - 1.9) <= tol,
        abs(outcome_full.payments[1] - 1.0) <= tol,
        abs(outcome_full.realized_sp_profit - 1.6) <= tol,
    ]

    # zero branch: nothing cached, nothing paid
    outcome_zero = run_mechanism(inst, [1.2, 1.1])
    checks += [
        outcome_zero.allocation.winner is None,
        outcome_zero.payments == (0.0, 0.0),
        outcome_zero.virtual_surplus == 0.0,
        outcome_zero.realized_sp_profit == 0.0,
    ]

    ok = all(checks)
    report(12, ok, f"hand-worked two-user market: {sum(checks)}/{len(checks)} values match at 1e-12")
