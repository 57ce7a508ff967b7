"""Monte-Carlo estimation and empirical verification of mechanism properties.

All expected quantities are sample means with standard errors; comparisons
between scenarios (truth vs misreport, one parameter value vs the next)
reuse the same base uniform draws so the noise cancels in the difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import batch
from .distributions import Exponential, TypeDistribution, Uniform
from .mechanism import payment_closed_form, payment_oracle
from .model import AuctionInstance, ConfigError

# Quantile window for report/type grids on unbounded supports.
GRID_QUANTILES = (0.01, 0.99)


@dataclass(frozen=True)
class EstimateWithError:
    """A Monte-Carlo scalar: sample mean, its standard error, sample count."""

    mean: float
    std_error: float
    trials: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "EstimateWithError":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean=float(samples.mean()), std_error=se, trials=n)


def combined_std_error(a: EstimateWithError, b: EstimateWithError) -> float:
    return math.hypot(a.std_error, b.std_error)


@dataclass(frozen=True)
class PerUserStats:
    expected_payment: EstimateWithError
    expected_utility: EstimateWithError
    expected_fraction: EstimateWithError


@dataclass(frozen=True)
class SimulationReport:
    """All first-moment summaries of one truthful simulation run."""

    er_direct: EstimateWithError
    er_virtual: EstimateWithError
    expected_allocation: tuple[EstimateWithError, ...]
    per_user: tuple[PerUserStats, ...]
    idle_fraction: EstimateWithError
    trials: int
    seed: int

    @property
    def average_user_utility(self) -> float:
        return sum(u.expected_utility.mean for u in self.per_user) / len(self.per_user)


def simulate(inst: AuctionInstance, trials: int, seed: int) -> SimulationReport:
    """Draw truthful profiles, run the mechanism per draw, summarize.

    The direct revenue form averages realized profit (payments minus
    costs); the virtual form averages the clipped best content score.  Both
    use the same draws, so their agreement is a meaningful consistency
    check rather than two independent estimates.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    types = batch.sample_types(inst, trials, seed)
    out = batch.evaluate(inst, types)
    utilities = batch.user_utilities(out, inst.theta)

    expected_allocation = tuple(
        EstimateWithError.from_samples((out.won & (out.winner == i)).astype(float))
        for i in range(inst.num_contents)
    )
    per_user = tuple(
        PerUserStats(
            expected_payment=EstimateWithError.from_samples(out.payments[:, j]),
            expected_utility=EstimateWithError.from_samples(utilities[:, j]),
            expected_fraction=EstimateWithError.from_samples(out.user_share[:, j]),
        )
        for j in range(inst.num_users)
    )
    return SimulationReport(
        er_direct=EstimateWithError.from_samples(out.sp_profit),
        er_virtual=EstimateWithError.from_samples(out.virtual_surplus),
        expected_allocation=expected_allocation,
        per_user=per_user,
        idle_fraction=EstimateWithError.from_samples(1.0 - out.won.astype(float)),
        trials=trials,
        seed=seed,
    )


@dataclass(frozen=True)
class InterimQuantities:
    """Interim utility, winning probability and payment for one report."""

    utility: EstimateWithError
    fraction: EstimateWithError
    payment: EstimateWithError


def interim_quantities(
    inst: AuctionInstance,
    user: int,
    report: float,
    true_type: float,
    trials: int,
    seed: int,
) -> InterimQuantities:
    """Estimate the interim quantities of ``user`` reporting ``report``.

    Opponents' types are drawn truthfully; the same seed reproduces the
    same opponent draws for every (report, true_type) pair, which makes
    comparisons across reports paired.
    """
    dist = inst.distributions[user]
    for name, value in (("report", report), ("true_type", true_type)):
        if not dist.in_support(value):
            raise ConfigError(f"{name} {value} outside support of user {user + 1}")
    types = batch.sample_types(inst, trials, seed)
    types[:, user] = report
    out = batch.evaluate(inst, types)
    utility_samples = inst.theta * true_type * out.user_share[:, user] - out.payments[:, user]
    return InterimQuantities(
        utility=EstimateWithError.from_samples(utility_samples),
        fraction=EstimateWithError.from_samples(out.user_share[:, user]),
        payment=EstimateWithError.from_samples(out.payments[:, user]),
    )


def report_grid(dist: TypeDistribution, points: int) -> np.ndarray:
    """Evenly spaced report grid; quantile window when the support is unbounded."""
    if math.isinf(dist.upper):
        return np.asarray(dist.ppf(np.linspace(*GRID_QUANTILES, points)))
    return np.linspace(dist.lower, dist.upper, points)


@dataclass(frozen=True)
class ICViolation:
    true_type: float
    report: float
    gain_mean: float
    gain_std_error: float


@dataclass(frozen=True)
class ICReport:
    """Empirical incentive-compatibility audit for one user."""

    user: int
    pairs_checked: int
    worst_margin: float
    violations: tuple[ICViolation, ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_ic(
    inst: AuctionInstance,
    user: int,
    type_grid_size: int,
    report_grid_size: int,
    trials: int,
    seed: int,
    sigma: float = 3.0,
    payment_scale: float = 1.0,
) -> ICReport:
    """Check that no misreport beats truth-telling, up to Monte-Carlo noise.

    For every true type on one grid and misreport on another, the paired
    per-trial utility difference (truth minus misreport) must not be
    significantly negative.  ``payment_scale`` rescales payments and exists
    to prove the check has power: scaling by 0.5 must produce violations.
    """
    if type_grid_size < 2 or report_grid_size < 2:
        raise ValueError("grids must have at least 2 points")
    dist = inst.distributions[user]
    type_values = report_grid(dist, type_grid_size)
    report_values = report_grid(dist, report_grid_size)
    all_reports = np.unique(np.concatenate([type_values, report_values]))

    types = batch.sample_types(inst, trials, seed)
    share_by_report: dict[float, np.ndarray] = {}
    payment_by_report: dict[float, np.ndarray] = {}
    for rep in all_reports:
        swept = types.copy()
        swept[:, user] = rep
        out = batch.evaluate(inst, swept)
        share_by_report[rep] = out.user_share[:, user]
        payment_by_report[rep] = out.payments[:, user] * payment_scale

    violations = []
    worst = math.inf
    pairs = 0
    for t in type_values:
        truthful = inst.theta * t * share_by_report[t] - payment_by_report[t]
        for rep in report_values:
            pairs += 1
            misreport = inst.theta * t * share_by_report[rep] - payment_by_report[rep]
            gain = truthful - misreport
            est = EstimateWithError.from_samples(gain)
            worst = min(worst, est.mean)
            if est.mean < -sigma * est.std_error:
                violations.append(
                    ICViolation(
                        true_type=float(t),
                        report=float(rep),
                        gain_mean=est.mean,
                        gain_std_error=est.std_error,
                    )
                )
    return ICReport(
        user=user,
        pairs_checked=pairs,
        worst_margin=worst,
        violations=tuple(violations),
    )


@dataclass(frozen=True)
class IRReport:
    """Empirical individual-rationality audit across all users."""

    interim_minima: tuple[EstimateWithError, ...]  # per user, worst grid point
    utility_at_lower: tuple[EstimateWithError, ...]  # per user, at the support bottom
    exact_bound_violations: int
    sigma: float

    @property
    def passed(self) -> bool:
        if self.exact_bound_violations:
            return False
        return all(
            est.mean >= -self.sigma * est.std_error for est in self.interim_minima
        ) and all(
            abs(est.mean) <= self.sigma * est.std_error or est.mean == 0.0
            for est in self.utility_at_lower
        )


def verify_ir(
    inst: AuctionInstance,
    trials: int,
    seed: int,
    type_grid_size: int = 5,
    sigma: float = 3.0,
) -> IRReport:
    """Check nonnegative truthful interim utility plus the exact payment bound.

    The exact bound (no winner ever pays more than their realized
    satisfaction) is checked on every sampled profile with no tolerance;
    the interim utilities are checked on a per-user type grid at the given
    significance, and at the support bottom where they must vanish.
    """
    types = batch.sample_types(inst, trials, seed)
    out = batch.evaluate(inst, types)
    exact_violations = int(
        np.count_nonzero(out.payments > inst.theta * types * out.user_share)
    )

    minima = []
    at_lower = []
    for j, dist in enumerate(inst.distributions):
        worst: EstimateWithError | None = None
        for t in report_grid(dist, type_grid_size):
            est = interim_quantities(inst, j, float(t), float(t), trials, seed).utility
            if worst is None or est.mean < worst.mean:
                worst = est
        minima.append(worst)
        at_lower.append(interim_quantities(inst, j, dist.lower, dist.lower, trials, seed).utility)
    return IRReport(
        interim_minima=tuple(minima),
        utility_at_lower=tuple(at_lower),
        exact_bound_violations=exact_violations,
        sigma=sigma,
    )


MISMATCH_UNIFORM = "uniform_widen"
MISMATCH_EXPONENTIAL = "exponential_rate_scale"


@dataclass(frozen=True)
class MismatchConfig:
    """How far the seller's estimated valuation laws deviate from the truth."""

    epsilon: float
    mode: str

    def __post_init__(self):
        if self.mode == MISMATCH_UNIFORM:
            if self.epsilon < 0:
                raise ConfigError("uniform widening requires epsilon >= 0")
        elif self.mode == MISMATCH_EXPONENTIAL:
            if self.epsilon <= -1:
                raise ConfigError("rate scaling requires epsilon > -1")
        else:
            raise ConfigError(f"unknown mismatch mode {self.mode!r}")


def estimated_distribution(dist: TypeDistribution, mismatch: MismatchConfig) -> TypeDistribution:
    if mismatch.mode == MISMATCH_UNIFORM:
        if not isinstance(dist, Uniform):
            raise ConfigError("uniform_widen applies to uniform valuation laws only")
        half = mismatch.epsilon * (dist.upper - dist.lower) / 2.0
        return Uniform(dist.lower - half, dist.upper + half)
    if not isinstance(dist, Exponential):
        raise ConfigError("exponential_rate_scale applies to exponential valuation laws only")
    return Exponential((1.0 + mismatch.epsilon) * dist.rate)


def simulate_mismatch(
    inst: AuctionInstance,
    mismatch: MismatchConfig,
    trials: int,
    seed: int,
) -> EstimateWithError:
    """Seller's realized revenue when pricing off estimated valuation laws.

    The mechanism (scores, thresholds, payments) is built from the
    estimated distributions while types are drawn from the true ones; any
    true draw outside the estimated support is clamped to its nearest
    endpoint, since the mechanism only accepts reports it believes are
    possible.  With epsilon 0 this reproduces the truthful simulation
    exactly, draw for draw.
    """
    estimated = tuple(estimated_distribution(d, mismatch) for d in inst.distributions)
    pricing = inst.with_distributions(estimated)
    types = batch.sample_types(inst, trials, seed)
    for j, dist in enumerate(estimated):
        types[:, j] = np.clip(types[:, j], dist.lower, dist.upper)
    out = batch.evaluate(inst, types, pricing=pricing)
    return EstimateWithError.from_samples(out.sp_profit)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def run_checks(
    inst: AuctionInstance,
    checks: list[str],
    trials: int,
    seed: int,
    sigma: float = 3.0,
    oracle_profiles: int = 100,
    oracle_grid: int = 128,
) -> list[CheckResult]:
    """Run named property checks; used by the command-line ``verify``."""
    results = []
    for name in checks:
        if name == "ic":
            worst = math.inf
            bad = 0
            for j in range(inst.num_users):
                rep = verify_ic(inst, j, 5, 5, trials, seed, sigma=sigma)
                worst = min(worst, rep.worst_margin)
                bad += len(rep.violations)
            results.append(
                CheckResult("ic", bad == 0, f"violations={bad} worst_margin={worst:.6g}")
            )
        elif name == "ir":
            rep = verify_ir(inst, trials, seed, sigma=sigma)
            low = min(est.mean for est in rep.interim_minima)
            results.append(
                CheckResult(
                    "ir",
                    rep.passed,
                    f"exact_bound_violations={rep.exact_bound_violations} "
                    f"worst_interim={low:.6g}",
                )
            )
        elif name == "oracle":
            worst = _oracle_gap(inst, oracle_profiles, seed, oracle_grid)
            results.append(CheckResult("oracle", worst <= 1e-6, f"max_abs_diff={worst:.3g}"))
        elif name == "monotonicity":
            worst_pairs = _monotonicity_violations(inst, trials=min(trials, 200), seed=seed)
            results.append(
                CheckResult("monotonicity", worst_pairs == 0, f"violating_pairs={worst_pairs}")
            )
        elif name == "prop4":
            types = batch.sample_types(inst, trials, seed)
            out = batch.evaluate(inst, types)  # raises on violation
            idle_payments = int(np.count_nonzero(out.payments[out.user_share == 0.0]))
            results.append(CheckResult("prop4", idle_payments == 0, f"violations={idle_payments}"))
        elif name == "revenue-forms":
            rep = simulate(inst, trials, seed)
            gap = abs(rep.er_direct.mean - rep.er_virtual.mean)
            bound = sigma * combined_std_error(rep.er_direct, rep.er_virtual)
            results.append(
                CheckResult("revenue-forms", gap <= bound, f"gap={gap:.6g} bound={bound:.6g}")
            )
        else:
            raise ConfigError(f"unknown check {name!r}")
    return results


def _oracle_gap(inst: AuctionInstance, profiles: int, seed: int, grid_points: int) -> float:
    types = batch.sample_types(inst, profiles, seed)
    worst = 0.0
    for row in types:
        for j in range(inst.num_users):
            closed = payment_closed_form(inst, row, j).payment
            brute = payment_oracle(inst, row, j, grid_points)
            worst = max(worst, abs(closed - brute))
    return worst


def _monotonicity_violations(inst: AuctionInstance, trials: int, seed: int, grid: int = 25) -> int:
    from .mechanism import allocate  # local import to keep module deps one-way

    types = batch.sample_types(inst, trials, seed)
    bad = 0
    for row in types:
        for j in range(inst.num_users):
            dist = inst.distributions[j]
            taus = np.linspace(dist.lower, row[j], grid)
            swept = row.copy()
            shares = []
            for tau in taus:
                swept[j] = tau
                shares.append(allocate(inst, swept).user_share(inst, j))
            bad += sum(1 for a, b in zip(shares, shares[1:]) if a > b)
    return bad
