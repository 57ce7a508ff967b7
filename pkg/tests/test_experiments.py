from pathlib import Path

import pytest

from cache_auction.experiments import (
    EXPERIMENT_NAMES,
    ExperimentConfig,
    generate_instance,
    homogeneous_instance,
    parse_range,
    run_experiment,
    run_sweep,
    section4_exponential_instance,
    section4_uniform_instance,
)
from cache_auction.distributions import Exponential, Uniform
from cache_auction.model import ConfigError


class TestGenerators:
    def test_section4_uniform_parameters(self):
        inst = section4_uniform_instance()
        assert inst.interests.interested_users[0] == (0, 2, 3, 4, 5, 9)
        assert inst.distributions[0] == Uniform(1.0, 4.0)
        assert inst.distributions[9] == Uniform(1.9, 4.9)
        assert inst.theta == 1.0

    def test_section4_exponential_rates(self):
        inst = section4_exponential_instance()
        assert inst.distributions[0] == Exponential(1.0 / 10.0)
        assert inst.distributions[9] == Exponential(1.0 / 13.6)

    def test_homogeneous_needs_prices_for_other_sizes(self):
        with pytest.raises(ConfigError):
            homogeneous_instance(10, (0.5, 0.5), Uniform(1, 4))

    def test_generate_instance_unknown_family(self):
        with pytest.raises(ConfigError):
            generate_instance("zipf")


class TestParseRange:
    def test_inclusive_grid(self):
        assert parse_range("1:3:1") == [1.0, 2.0, 3.0]
        assert parse_range("0:1:0.25") == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])

    def test_bad_specs(self):
        for spec in ("1:3", "3:1:1", "1:3:0", "a:b:c"):
            with pytest.raises(ConfigError):
                parse_range(spec)


class TestRunSweep:
    def test_unknown_param(self, uniform_market):
        with pytest.raises(ConfigError):
            run_sweep(uniform_market, "zipf_exponent", [1.0], 10, 0)

    def test_lambda_sweep_replaces_all_users(self, exponential_market):
        points = run_sweep(exponential_market, "lambda", [0.1, 0.2], 200, 0)
        assert len(points) == 2
        assert points[0].er.trials == 200

    def test_popularity_k_bounds(self, uniform_market):
        with pytest.raises(ConfigError):
            run_sweep(uniform_market, "popularity_k", [11], 10, 0)

    def test_epsilon_sweep_mode_inference(self, uniform_market, exponential_market):
        up = run_sweep(uniform_market, "epsilon", [0.0, 0.5], 300, 0)
        assert up[0].er.mean > 0
        ep = run_sweep(exponential_market, "epsilon", [-0.5, 0.5], 300, 0)
        assert len(ep) == 2

    def test_threads_do_not_change_values(self, uniform_market):
        a = run_sweep(uniform_market, "alpha", [0.1, 0.2, 0.3], 400, 5, threads=1)
        b = run_sweep(uniform_market, "alpha", [0.1, 0.2, 0.3], 400, 5, threads=3)
        assert a == b


@pytest.mark.parametrize("name", [n for n in EXPERIMENT_NAMES if n != "custom"])
def test_every_named_experiment_produces_artifacts(name, tmp_path):
    cfg = ExperimentConfig(name=name, trials=200, seed=1, out=str(tmp_path / name))
    result = run_experiment(cfg)
    assert result.files, name
    for path in result.files:
        assert Path(path).exists()
    csvs = [p for p in result.files if str(p).endswith(".csv")]
    pngs = [p for p in result.files if str(p).endswith(".png")]
    assert csvs and len(pngs) == len(csvs)
    assert result.summary_rows


def test_fig4_summary_contains_both_theta_estimates(tmp_path):
    cfg = ExperimentConfig(name="fig4_theta", trials=400, seed=1, out=str(tmp_path / "fig4"))
    result = run_experiment(cfg)
    sweep_star, closed_star = result.summary_rows[0]
    assert closed_star == 5.0
    assert 1.0 <= sweep_star <= 10.0
    header = Path(result.files[0]).read_text().splitlines()[0]
    assert header == "theta,er_estimate,std_error,avg_user_utility"


def test_fig8_reports_retention(tmp_path):
    cfg = ExperimentConfig(name="fig8_mismatch", trials=400, seed=1, out=str(tmp_path / "fig8"))
    result = run_experiment(cfg)
    uniform_csv = Path(f"{tmp_path / 'fig8'}_uniform.csv")
    assert uniform_csv in [Path(p) for p in result.files]
    header = uniform_csv.read_text().splitlines()[0]
    assert header.endswith(",retention")


def test_experiment_config_validation(uniform_market):
    with pytest.raises(ConfigError):
        ExperimentConfig(name="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(name="custom")  # needs an instance
    with pytest.raises(ConfigError):
        ExperimentConfig(name="fig2_users", instance=uniform_market)
    with pytest.raises(ConfigError):
        ExperimentConfig(name="custom", instance=uniform_market, param="alpha")
    cfg = ExperimentConfig(name="fig2_users")
    assert cfg.out == "results/fig2_users"
