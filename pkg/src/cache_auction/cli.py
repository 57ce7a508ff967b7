"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 config/instance validation error,
3 property-check failure.  ``CACHE_AUCTION_THREADS`` overrides --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments
from .distributions import check_regularity
from .mechanism import run_mechanism
from .model import ConfigError, build_instance, instance_to_config
from .output import dump_json, print_table, write_csv
from .quality import er_curve
from .simulation import run_checks, simulate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_PROPERTY = 3

ALL_CHECKS = ["ic", "ir", "oracle", "monotonicity", "prop4", "revenue-forms"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_instance(path, strict_regularity=False):
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read instance {path}: {exc}") from exc
    return build_instance(config, strict_regularity=strict_regularity)


def _threads(args) -> int:
    env = os.environ.get("CACHE_AUCTION_THREADS")
    if env:
        return max(1, int(env))
    return max(1, getattr(args, "threads", 1))


def _add_common(p, trials_default=10_000):
    p.add_argument("--trials", type=int, default=trials_default)
    p.add_argument("--seed", type=int, default=0)


def _maybe_figure(args) -> bool:
    return not getattr(args, "no_figure", False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cache-auction", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the mechanism on one report profile")
    p.add_argument("--instance", required=True)
    p.add_argument("--profile", required=True, help="JSON file with an array of n reports")

    p = sub.add_parser("simulate", help="Monte-Carlo estimate all expected quantities")
    p.add_argument("--instance", required=True)
    _add_common(p)
    p.add_argument("--out", help="write the per-user table here")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("verify", help="run empirical property checks")
    p.add_argument("--instance", required=True)
    p.add_argument("--checks", default=",".join(ALL_CHECKS), help="comma-separated check names")
    _add_common(p)
    p.add_argument("--sigma", type=float, default=3.0, help="significance in standard errors")
    p.add_argument("--profiles", type=int, default=100, help="profiles for the oracle check")
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("sweep", help="estimate revenue while one parameter varies")
    p.add_argument("--instance", required=True)
    p.add_argument("--param", required=True, choices=experiments.SWEEP_PARAMS)
    p.add_argument("--range", required=True, dest="sweep_range", metavar="A:B:STEP")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("sweep-theta", help="estimate revenue over a delivery-quality grid")
    p.add_argument("--instance", required=True)
    p.add_argument("--grid", required=True, metavar="A:B:STEP")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("experiment", help="run a named study end to end")
    p.add_argument("--name", choices=experiments.EXPERIMENT_NAMES)
    p.add_argument("--config", help="JSON experiment config (overrides other flags)")
    p.add_argument("--instance", help="instance file (custom experiment only)")
    p.add_argument("--param", choices=experiments.SWEEP_PARAMS)
    p.add_argument("--range", dest="sweep_range", metavar="A:B:STEP")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("gen-instance", help="materialize a named instance family as JSON")
    p.add_argument("--family", required=True, choices=["section4_uniform", "section4_exponential", "homogeneous"])
    p.add_argument("--out", required=True)
    p.add_argument("--num-users", type=int, default=100)
    p.add_argument("--q", default="0.7,0.5,0.4", help="comma-separated inclusion probabilities")
    p.add_argument("--dist-kind", choices=["uniform", "exponential"], default="uniform")
    p.add_argument("--lower", type=float, default=1.0)
    p.add_argument("--upper", type=float, default=4.0)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=experiments.SECTION4_ALPHA)
    p.add_argument("--theta", type=float, default=experiments.SECTION4_THETA)
    p.add_argument("--prices", help="comma-separated content prices")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("check-regularity", help="check every user's virtual valuation is increasing")
    p.add_argument("--instance", required=True)
    p.add_argument("--grid-points", type=int, default=512)

    return parser


def _cmd_run(args) -> int:
    inst = _load_instance(args.instance)
    profile = json.loads(Path(args.profile).read_text())
    outcome = run_mechanism(inst, profile)
    payload = {
        "allocation": {
            "fractions": list(outcome.allocation.fractions),
            "winner": None if outcome.allocation.winner is None else outcome.allocation.winner + 1,
        },
        "payments": list(outcome.payments),
        "certificates": [
            {
                "user": c.user + 1,
                "beta": c.beta,
                "phi_at_lower": c.phi_at_lower,
                "phi_at_t": c.phi_at_t,
                "xi": c.xi,
                "branch": c.branch,
                "integral_value": c.integral_value,
                "payment": c.payment,
            }
            for c in outcome.certificates
        ],
        "virtual_surplus": outcome.virtual_surplus,
        "realized_sp_profit": outcome.realized_sp_profit,
    }
    print(dump_json(payload))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    inst = _load_instance(args.instance)
    report = simulate(inst, args.trials, args.seed)
    if args.format == "json":
        text = dump_json(report, args.out)
        if args.out:
            print(f"wrote {args.out}")
        else:
            print(text)
        return EXIT_OK
    header = [
        "user",
        "expected_payment", "payment_std_error",
        "expected_utility", "utility_std_error",
        "expected_fraction", "fraction_std_error",
    ]
    rows = [
        [
            j + 1,
            s.expected_payment.mean, s.expected_payment.std_error,
            s.expected_utility.mean, s.expected_utility.std_error,
            s.expected_fraction.mean, s.expected_fraction.std_error,
        ]
        for j, s in enumerate(report.per_user)
    ]
    if args.out:
        write_csv(args.out, header, rows)
        if _maybe_figure(args):
            from .plotting import save_user_metrics_figure

            save_user_metrics_figure(
                [r[0] for r in rows], [r[1] for r in rows], [r[3] for r in rows],
                [r[5] for r in rows], Path(args.out).with_suffix(".png"), "per-user metrics",
            )
    else:
        print_table(header, rows)
    print(f"er_direct      {report.er_direct.mean:.9g} (se {report.er_direct.std_error:.3g})")
    print(f"er_virtual     {report.er_virtual.mean:.9g} (se {report.er_virtual.std_error:.3g})")
    alloc = ", ".join(f"{e.mean:.9g}" for e in report.expected_allocation)
    print(f"expected_allocation  [{alloc}]")
    print(f"idle_fraction  {report.idle_fraction.mean:.9g}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    inst = _load_instance(args.instance)
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    unknown = [c for c in checks if c not in ALL_CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; available: {ALL_CHECKS}")
    results = run_checks(
        inst, checks, args.trials, args.seed, sigma=args.sigma, oracle_profiles=args.profiles
    )
    failed = any(not res.passed for res in results)
    if args.format == "json":
        print(dump_json(list(results)))
    else:
        for res in results:
            status = "PASS" if res.passed else "FAIL"
            print(f"{status}  {res.name:<14} {res.detail}")
    return EXIT_PROPERTY if failed else EXIT_OK


def _cmd_sweep(args) -> int:
    inst = _load_instance(args.instance)
    values = experiments.parse_range(args.sweep_range)
    points = experiments.run_sweep(inst, args.param, values, args.trials, args.seed, _threads(args))
    if args.format == "json":
        dump_json({"param": args.param, "points": list(points)}, args.out)
        print(f"wrote {args.out}")
        return EXIT_OK
    has_utility = all(p.avg_user_utility is not None for p in points)
    header = [args.param, "er_estimate", "er_std_error"]
    if has_utility:
        header += ["avg_user_utility", "avg_user_utility_std_error"]
    rows = []
    for p in points:
        row = [p.value, p.er.mean, p.er.std_error]
        if has_utility:
            row += [p.avg_user_utility.mean, p.avg_user_utility.std_error]
        rows.append(row)
    write_csv(args.out, header, rows)
    if _maybe_figure(args):
        from .plotting import save_sweep_figure

        save_sweep_figure(
            args.param,
            [p.value for p in points],
            [p.er.mean for p in points],
            [p.er.std_error for p in points],
            [p.avg_user_utility.mean for p in points] if has_utility else None,
            [p.avg_user_utility.std_error for p in points] if has_utility else None,
            Path(args.out).with_suffix(".png"),
            f"revenue vs {args.param}",
        )
    print_table(header, rows)
    return EXIT_OK


def _cmd_sweep_theta(args) -> int:
    inst = _load_instance(args.instance)
    grid = experiments.parse_range(args.grid)
    quality = er_curve(inst, grid, args.trials, args.seed, threads=_threads(args))
    if args.format == "json":
        dump_json(quality, args.out)
        print(f"wrote {args.out}")
        return EXIT_OK
    header = ["theta", "er_estimate", "std_error", "avg_user_utility"]
    rows = [[p.theta, p.er.mean, p.er.std_error, p.avg_user_utility.mean] for p in quality.curve]
    write_csv(args.out, header, rows)
    if _maybe_figure(args):
        from .plotting import save_sweep_figure

        save_sweep_figure(
            "theta",
            [p.theta for p in quality.curve],
            [p.er.mean for p in quality.curve],
            [p.er.std_error for p in quality.curve],
            [p.avg_user_utility.mean for p in quality.curve],
            [p.avg_user_utility.std_error for p in quality.curve],
            Path(args.out).with_suffix(".png"),
            "revenue vs delivery quality",
        )
    print_table(header, rows)
    print(f"theta_star  {quality.theta_star:.9g}")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        allowed = {"name", "trials", "seed", "out", "instance", "param", "range", "figure", "threads"}
        extra = set(raw) - allowed
        if extra:
            raise ConfigError(f"unknown experiment config keys {sorted(extra)}")
        if "name" not in raw:
            raise ConfigError("experiment config needs a 'name'")
        inst = _load_instance(raw["instance"]) if raw.get("instance") else None
        cfg = experiments.ExperimentConfig(
            name=raw["name"],
            trials=int(raw.get("trials", 10_000)),
            seed=int(raw.get("seed", 0)),
            out=raw.get("out", ""),
            instance=inst,
            param=raw.get("param"),
            sweep_range=raw.get("range"),
            figure=bool(raw.get("figure", True)),
            threads=int(raw.get("threads", 1)),
        )
    else:
        if not args.name:
            raise ConfigError("provide --name or --config")
        inst = _load_instance(args.instance) if args.instance else None
        cfg = experiments.ExperimentConfig(
            name=args.name,
            trials=args.trials,
            seed=args.seed,
            out=args.out or "",
            instance=inst,
            param=args.param,
            sweep_range=args.sweep_range,
            figure=_maybe_figure(args),
            threads=_threads(args),
        )
    result = experiments.run_experiment(cfg)
    print_table(result.summary_header, result.summary_rows)
    for path in result.files:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_gen_instance(args) -> int:
    if args.family == "homogeneous":
        from .distributions import Exponential, Uniform
        from .model import QuadraticCost

        dist = Uniform(args.lower, args.upper) if args.dist_kind == "uniform" else Exponential(args.rate)
        q = tuple(float(x) for x in args.q.split(","))
        prices = tuple(float(x) for x in args.prices.split(",")) if args.prices else None
        inst = experiments.homogeneous_instance(
            num_users=args.num_users,
            inclusion_probs=q,
            dist=dist,
            cost=QuadraticCost(args.alpha),
            prices=prices,
            theta=args.theta,
            seed=args.seed,
        )
    else:
        inst = experiments.generate_instance(args.family)
    dump_json(instance_to_config(inst), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_check_regularity(args) -> int:
    inst = _load_instance(args.instance)
    failed = False
    for j, dist in enumerate(inst.distributions):
        report = check_regularity(dist, args.grid_points)
        if report.passed:
            print(f"PASS  user {j + 1}")
        else:
            failed = True
            print(f"FAIL  user {j + 1}  decrease of {report.drop:.3g} at {report.witness}")
    return EXIT_PROPERTY if failed else EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
    "sweep-theta": _cmd_sweep_theta,
    "experiment": _cmd_experiment,
    "gen-instance": _cmd_gen_instance,
    "check-regularity": _cmd_check_regularity,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
