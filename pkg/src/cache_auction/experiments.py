"""Named experiment studies, instance generators and parameter sweeps.

Each named experiment runs one preregistered study configuration end to
end: build the instance(s), estimate with shared draws, and emit a CSV
series (plus a rendered figure) that is byte-stable for a given seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import batch
from .distributions import Exponential, TypeDistribution, Uniform
from .model import (
    AuctionInstance,
    ConfigError,
    CostFunction,
    InterestStructure,
    PopularityModel,
    QuadraticCost,
    sample_interest_structure,
)
from .output import write_csv
from .quality import er_curve, optimal_theta_closed_form
from .simulation import (
    MISMATCH_EXPONENTIAL,
    MISMATCH_UNIFORM,
    EstimateWithError,
    MismatchConfig,
    SimulationReport,
    simulate,
    simulate_mismatch,
)

# Reference market used throughout the named studies: 3 contents, 10 users.
SECTION4_INTEREST_SETS = ((1, 3, 4, 5, 6, 10), (1, 3, 5, 7, 8, 9), (1, 2, 3, 5, 9, 10))
SECTION4_PRICES = (4.2036, 1.2714, 4.0714)
SECTION4_ALPHA = 0.1
SECTION4_THETA = 1.0

EXPERIMENT_NAMES = (
    "fig2_users",
    "fig3_distributions",
    "fig4_theta",
    "fig5_popularity",
    "fig6_numusers",
    "fig7_alpha",
    "fig8_mismatch",
    "custom",
)

SWEEP_PARAMS = (
    "expected_type",
    "support_width",
    "lambda",
    "popularity_k",
    "num_users",
    "alpha",
    "epsilon",
)


def _section4_interests() -> InterestStructure:
    sets = tuple(tuple(u - 1 for u in users) for users in SECTION4_INTEREST_SETS)
    return InterestStructure(3, 10, sets)


def section4_uniform_instance() -> AuctionInstance:
    """The 10-user market with staggered uniform valuations."""
    dists = tuple(Uniform(1.0 + 0.1 * j, 4.0 + 0.1 * j) for j in range(10))
    return AuctionInstance(
        interests=_section4_interests(),
        content_prices=SECTION4_PRICES,
        cost=QuadraticCost(SECTION4_ALPHA),
        theta=SECTION4_THETA,
        distributions=dists,
    )


def section4_exponential_instance() -> AuctionInstance:
    """The 10-user market with staggered exponential valuations."""
    dists = tuple(Exponential(1.0 / (10.0 + 0.4 * j)) for j in range(10))
    return AuctionInstance(
        interests=_section4_interests(),
        content_prices=SECTION4_PRICES,
        cost=QuadraticCost(SECTION4_ALPHA),
        theta=SECTION4_THETA,
        distributions=dists,
    )


def homogeneous_instance(
    num_users: int,
    inclusion_probs,
    dist: TypeDistribution,
    cost: CostFunction | None = None,
    prices=None,
    theta: float = SECTION4_THETA,
    seed: int = 0,
) -> AuctionInstance:
    """I.i.d. users with randomly sampled interest sets (the large-n regime)."""
    inclusion_probs = tuple(inclusion_probs)
    if prices is None:
        if len(inclusion_probs) != len(SECTION4_PRICES):
            raise ConfigError("provide content prices when not using 3 contents")
        prices = SECTION4_PRICES
    interests = sample_interest_structure(PopularityModel(inclusion_probs, seed), num_users)
    return AuctionInstance(
        interests=interests,
        content_prices=tuple(prices),
        cost=cost if cost is not None else QuadraticCost(SECTION4_ALPHA),
        theta=theta,
        distributions=tuple(dist for _ in range(num_users)),
    )


def generate_instance(family: str, **params) -> AuctionInstance:
    if family == "section4_uniform":
        return section4_uniform_instance()
    if family == "section4_exponential":
        return section4_exponential_instance()
    if family == "homogeneous":
        return homogeneous_instance(**params)
    raise ConfigError(f"unknown instance family {family!r}")


def parse_range(spec: str) -> list[float]:
    """Parse "a:b:step" into an inclusive grid; step must be positive."""
    try:
        a, b, step = (float(x) for x in spec.split(":"))
    except ValueError as exc:
        raise ConfigError(f"range must look like a:b:step, got {spec!r}") from exc
    if step <= 0:
        raise ConfigError("range step must be positive")
    if b < a:
        raise ConfigError("range end must not precede its start")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [a + k * step for k in range(count)]


@dataclass(frozen=True)
class SweepPoint:
    value: float
    er: EstimateWithError
    avg_user_utility: EstimateWithError | None = None


def _permuted_prefix(num_users: int, size: int, seed_key) -> tuple[int, ...]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_key)))
    return tuple(sorted(rng.permutation(num_users)[:size].tolist()))


def _uniform_width(inst: AuctionInstance) -> float:
    first = inst.distributions[0]
    if not isinstance(first, Uniform):
        raise ConfigError("this sweep needs uniform valuation laws")
    return first.upper - first.lower


def run_sweep(
    inst: AuctionInstance,
    param: str,
    values,
    trials: int,
    seed: int,
    threads: int = 1,
) -> list[SweepPoint]:
    """Estimate revenue and utility while one model parameter varies.

    All points share the same base uniform draws so adjacent estimates are
    paired.  Distribution parameters replace every user's law i.i.d.;
    ``popularity_k`` redraws interest sets as seeded random subsets of the
    given size; ``num_users`` cycles the base user population; ``epsilon``
    runs the estimated-distribution study in the mode matching the base
    laws.
    """
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}")

    if param == "num_users":
        return _sweep_num_users(inst, [int(v) for v in values], trials, seed, threads)
    if param == "epsilon":
        return _sweep_epsilon(inst, values, trials, seed, threads)

    draws = batch.uniform_draws(trials, inst.num_users, seed)

    def instance_for(value: float) -> AuctionInstance:
        if param == "expected_type":
            half = _uniform_width(inst) / 2.0
            return inst.with_distributions([Uniform(value - half, value + half)] * inst.num_users)
        if param == "support_width":
            first = inst.distributions[0]
            if not isinstance(first, Uniform):
                raise ConfigError("support_width sweep needs uniform valuation laws")
            mean = (first.lower + first.upper) / 2.0
            return inst.with_distributions(
                [Uniform(mean - value / 2.0, mean + value / 2.0)] * inst.num_users
            )
        if param == "lambda":
            return inst.with_distributions([Exponential(value)] * inst.num_users)
        if param == "popularity_k":
            k = int(value)
            if not 1 <= k <= inst.num_users:
                raise ConfigError(f"popularity_k must be in 1..{inst.num_users}")
            sets = tuple(
                _permuted_prefix(inst.num_users, k, (seed, 13, i))
                for i in range(inst.num_contents)
            )
            return inst.with_interests(
                InterestStructure(inst.num_contents, inst.num_users, sets)
            )
        if param == "alpha":
            return inst.with_cost(QuadraticCost(value))
        raise AssertionError(param)

    def point(value: float) -> SweepPoint:
        swept = instance_for(value)
        types = batch.types_from_draws(swept.distributions, draws)
        out = batch.evaluate(swept, types)
        utilities = batch.user_utilities(out, swept.theta).mean(axis=1)
        return SweepPoint(
            value=value,
            er=EstimateWithError.from_samples(out.sp_profit),
            avg_user_utility=EstimateWithError.from_samples(utilities),
        )

    return _map_points(point, values, threads)


def _sweep_num_users(inst, values, trials, seed, threads, dist_for_user=None) -> list[SweepPoint]:
    n_max = max(values)
    base = inst.distributions
    if dist_for_user is None:
        dist_for_user = lambda j: base[j % len(base)]  # noqa: E731
    dists_max = tuple(dist_for_user(j) for j in range(n_max))
    draws = batch.uniform_draws(trials, n_max, seed)

    def point(n: int) -> SweepPoint:
        size = max(1, round(0.6 * n))
        sets = tuple(
            _permuted_prefix(n, size, (seed, 17, n, i)) for i in range(inst.num_contents)
        )
        swept = AuctionInstance(
            interests=InterestStructure(inst.num_contents, n, sets),
            content_prices=inst.content_prices,
            cost=inst.cost,
            theta=inst.theta,
            distributions=dists_max[:n],
        )
        types = batch.types_from_draws(swept.distributions, draws[:, :n])
        out = batch.evaluate(swept, types)
        utilities = batch.user_utilities(out, swept.theta).mean(axis=1)
        return SweepPoint(
            value=float(n),
            er=EstimateWithError.from_samples(out.sp_profit),
            avg_user_utility=EstimateWithError.from_samples(utilities),
        )

    return _map_points(point, values, threads)


def _mismatch_mode(inst: AuctionInstance) -> str:
    if all(isinstance(d, Uniform) for d in inst.distributions):
        return MISMATCH_UNIFORM
    if all(isinstance(d, Exponential) for d in inst.distributions):
        return MISMATCH_EXPONENTIAL
    raise ConfigError("epsilon sweep needs all-uniform or all-exponential valuation laws")


def _sweep_epsilon(inst, values, trials, seed, threads) -> list[SweepPoint]:
    mode = _mismatch_mode(inst)

    def point(value: float) -> SweepPoint:
        er = simulate_mismatch(inst, MismatchConfig(value, mode), trials, seed)
        return SweepPoint(value=value, er=er)

    return _map_points(point, values, threads)


def _map_points(point, values, threads) -> list[SweepPoint]:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(point, values))
    return [point(v) for v in values]


@dataclass
class ExperimentConfig:
    name: str
    trials: int = 10_000
    seed: int = 0
    out: str = ""
    instance: AuctionInstance | None = None
    param: str | None = None
    sweep_range: str | None = None
    figure: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.name not in EXPERIMENT_NAMES:
            raise ConfigError(f"unknown experiment {self.name!r}")
        if self.name == "custom":
            if self.instance is None:
                raise ConfigError("the custom experiment needs an instance")
            if (self.param is None) != (self.sweep_range is None):
                raise ConfigError("custom sweeps need both --param and --range")
        elif self.instance is not None:
            raise ConfigError(f"experiment {self.name!r} generates its own instance")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if not self.out:
            self.out = f"results/{self.name}"


@dataclass
class ExperimentResult:
    files: list[Path] = field(default_factory=list)
    summary_header: list[str] = field(default_factory=list)
    summary_rows: list[list] = field(default_factory=list)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    runner = {
        "fig2_users": _run_fig2,
        "fig3_distributions": _run_fig3,
        "fig4_theta": _run_fig4,
        "fig5_popularity": _run_fig5,
        "fig6_numusers": _run_fig6,
        "fig7_alpha": _run_fig7,
        "fig8_mismatch": _run_fig8,
        "custom": _run_custom,
    }[cfg.name]
    return runner(cfg)


def _emit_user_metrics(report: SimulationReport, base: Path, label: str, cfg, result) -> None:
    header = ["user", "expected_payment", "expected_utility", "expected_fraction"]
    rows = [
        [
            j + 1,
            stats.expected_payment.mean,
            stats.expected_utility.mean,
            stats.expected_fraction.mean,
        ]
        for j, stats in enumerate(report.per_user)
    ]
    csv_path = base.with_suffix(".csv")
    write_csv(csv_path, header, rows)
    result.files.append(csv_path)
    if cfg.figure:
        from .plotting import save_user_metrics_figure

        result.files.append(
            save_user_metrics_figure(
                [r[0] for r in rows],
                [r[1] for r in rows],
                [r[2] for r in rows],
                [r[3] for r in rows],
                base.with_suffix(".png"),
                label,
            )
        )


def _emit_sweep(points, xlabel, base: Path, label: str, cfg, result, extra_cols=None) -> None:
    has_utility = all(p.avg_user_utility is not None for p in points)
    header = [xlabel, "er_estimate", "er_std_error"]
    if has_utility:
        header += ["avg_user_utility", "avg_user_utility_std_error"]
    if extra_cols:
        header += list(extra_cols)
    rows = []
    for p in points:
        row = [p.value, p.er.mean, p.er.std_error]
        if has_utility:
            row += [p.avg_user_utility.mean, p.avg_user_utility.std_error]
        if extra_cols:
            row += [extra_cols[c](p) for c in extra_cols]
        rows.append(row)
    csv_path = base.with_suffix(".csv")
    write_csv(csv_path, header, rows)
    result.files.append(csv_path)
    if cfg.figure:
        from .plotting import save_sweep_figure

        result.files.append(
            save_sweep_figure(
                xlabel,
                [p.value for p in points],
                [p.er.mean for p in points],
                [p.er.std_error for p in points],
                [p.avg_user_utility.mean for p in points] if has_utility else None,
                [p.avg_user_utility.std_error for p in points] if has_utility else None,
                base.with_suffix(".png"),
                label,
            )
        )


def _run_fig2(cfg) -> ExperimentResult:
    result = ExperimentResult(
        summary_header=["variant", "er_direct", "er_virtual", "expected_allocation", "idle"]
    )
    for label, inst in (
        ("uniform", section4_uniform_instance()),
        ("exponential", section4_exponential_instance()),
    ):
        report = simulate(inst, cfg.trials, cfg.seed)
        _emit_user_metrics(
            report, Path(f"{cfg.out}_{label}"), f"per-user metrics ({label} types)", cfg, result
        )
        result.summary_rows.append(
            [
                label,
                report.er_direct.mean,
                report.er_virtual.mean,
                "[" + ", ".join(f"{e.mean:.3f}" for e in report.expected_allocation) + "]",
                report.idle_fraction.mean,
            ]
        )
    return result


def _run_fig3(cfg) -> ExperimentResult:
    result = ExperimentResult(summary_header=["sweep", "first_er", "last_er"])
    uniform_base = section4_uniform_instance()
    width_base = uniform_base.with_distributions([Uniform(3.5, 6.5)] * 10)
    exp_base = section4_exponential_instance()
    studies = (
        ("expected_type", uniform_base, parse_range("2.0:6.5:0.5")),
        ("support_width", width_base, parse_range("1:9:1")),
        ("lambda", exp_base, parse_range("0.05:0.5:0.05")),
    )
    for param, base, values in studies:
        points = run_sweep(base, param, values, cfg.trials, cfg.seed, cfg.threads)
        _emit_sweep(
            points, param, Path(f"{cfg.out}_{param}"), f"revenue vs {param}", cfg, result
        )
        result.summary_rows.append([param, points[0].er.mean, points[-1].er.mean])
    return result


def _run_fig4(cfg) -> ExperimentResult:
    inst = homogeneous_instance(
        num_users=100,
        inclusion_probs=(0.7, 0.5, 0.4),
        dist=Uniform(1.0, 4.0),
        cost=QuadraticCost(SECTION4_ALPHA),
        seed=cfg.seed,
    )
    quality = er_curve(inst, parse_range("1:10:1"), cfg.trials, cfg.seed, threads=cfg.threads)
    result = ExperimentResult(summary_header=["theta_star_sweep", "theta_star_closed_form"])
    result.summary_rows.append(
        [quality.theta_star, optimal_theta_closed_form(inst.cost, inst.distributions[0].lower)]
    )
    header = ["theta", "er_estimate", "std_error", "avg_user_utility"]
    rows = [
        [p.theta, p.er.mean, p.er.std_error, p.avg_user_utility.mean] for p in quality.curve
    ]
    csv_path = Path(cfg.out).with_suffix(".csv")
    write_csv(csv_path, header, rows)
    result.files.append(csv_path)
    if cfg.figure:
        from .plotting import save_sweep_figure

        result.files.append(
            save_sweep_figure(
                "theta",
                [p.theta for p in quality.curve],
                [p.er.mean for p in quality.curve],
                [p.er.std_error for p in quality.curve],
                [p.avg_user_utility.mean for p in quality.curve],
                [p.avg_user_utility.std_error for p in quality.curve],
                Path(cfg.out).with_suffix(".png"),
                "revenue vs delivery quality",
            )
        )
    return result


def _trend_experiment(cfg, param, values, base) -> ExperimentResult:
    points = run_sweep(base, param, values, cfg.trials, cfg.seed, cfg.threads)
    result = ExperimentResult(summary_header=[param, "er_estimate"])
    result.summary_rows = [[p.value, p.er.mean] for p in points]
    _emit_sweep(points, param, Path(cfg.out), f"revenue vs {param}", cfg, result)
    return result


def _run_fig5(cfg) -> ExperimentResult:
    return _trend_experiment(cfg, "popularity_k", parse_range("1:10:1"), section4_uniform_instance())


def _run_fig6(cfg) -> ExperimentResult:
    # Extend the staggered-support user pattern up to the largest population;
    # the generic num_users sweep then just slices it per grid point.
    values = [int(v) for v in parse_range("5:50:5")]
    base = AuctionInstance(
        interests=_section4_interests(),
        content_prices=SECTION4_PRICES,
        cost=QuadraticCost(SECTION4_ALPHA),
        theta=SECTION4_THETA,
        distributions=tuple(Uniform(1.0 + 0.1 * j, 4.0 + 0.1 * j) for j in range(10)),
    )
    points = _sweep_num_users(
        base,
        values,
        cfg.trials,
        cfg.seed,
        cfg.threads,
        dist_for_user=lambda j: Uniform(1.0 + 0.1 * j, 4.0 + 0.1 * j),
    )
    result = ExperimentResult(summary_header=["num_users", "er_estimate"])
    result.summary_rows = [[p.value, p.er.mean] for p in points]
    _emit_sweep(points, "num_users", Path(cfg.out), "revenue vs number of users", cfg, result)
    return result


def _run_fig7(cfg) -> ExperimentResult:
    return _trend_experiment(cfg, "alpha", parse_range("0.05:0.5:0.05"), section4_uniform_instance())


def _run_fig8(cfg) -> ExperimentResult:
    result = ExperimentResult(summary_header=["variant", "baseline_er", "er_at_eps_0.5", "retention"])
    uniform = section4_uniform_instance()
    points = run_sweep(uniform, "epsilon", parse_range("0:1:0.1"), cfg.trials, cfg.seed, cfg.threads)
    baseline = points[0].er.mean
    extra = {"retention": lambda p: p.er.mean / baseline if baseline else math.nan}
    _emit_sweep(
        points, "epsilon", Path(f"{cfg.out}_uniform"), "revenue vs estimation error (uniform)",
        cfg, result, extra_cols=extra,
    )
    at_half = next(p for p in points if abs(p.value - 0.5) < 1e-9)
    result.summary_rows.append(["uniform", baseline, at_half.er.mean, at_half.er.mean / baseline])

    exponential = section4_exponential_instance()
    eps_values = [-0.9 + 0.1 * k for k in range(19)]
    points = run_sweep(exponential, "epsilon", eps_values, cfg.trials, cfg.seed, cfg.threads)
    _emit_sweep(
        points, "epsilon", Path(f"{cfg.out}_exponential"),
        "revenue vs estimation error (exponential)", cfg, result,
    )
    mid = next(p for p in points if abs(p.value) < 1e-9)
    plus = next(p for p in points if abs(p.value - 0.5) < 1e-9)
    minus = next(p for p in points if abs(p.value + 0.5) < 1e-9)
    result.summary_rows.append(
        ["exponential", mid.er.mean, plus.er.mean, plus.er.mean / mid.er.mean]
    )
    result.summary_rows.append(
        ["exponential(eps=-0.5)", mid.er.mean, minus.er.mean, minus.er.mean / mid.er.mean]
    )
    return result


def _run_custom(cfg) -> ExperimentResult:
    if cfg.param is not None:
        values = parse_range(cfg.sweep_range)
        return _trend_experiment(cfg, cfg.param, values, cfg.instance)
    report = simulate(cfg.instance, cfg.trials, cfg.seed)
    result = ExperimentResult(summary_header=["er_direct", "er_virtual", "idle"])
    result.summary_rows.append(
        [report.er_direct.mean, report.er_virtual.mean, report.idle_fraction.mean]
    )
    _emit_user_metrics(report, Path(cfg.out), "per-user metrics", cfg, result)
    return result
