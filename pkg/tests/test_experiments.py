import math
from pathlib import Path

import pytest

from modules.bp_engine import BpParams
from modules.errors import ConfigurationError, ParameterDomainError
from modules.experiments import (EpsSchedule, ExperimentReport, LRule, SprinklePlan, Verdict, check_sandwich,
                                 check_window, load_experiment_file, resolve_settings, resolve_tolerances,
                                 run_coupling_check, run_duality_check, run_experiment, run_l1_experiment,
                                 run_lower_bound_check, run_oracle_check, run_sprinkle, run_survival_checks,
                                 run_tail_and_width_checks, run_total_size_check, run_truncation_check)
from modules.gnp_graph import GnpParams

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _ids(report):
    return [v.criterion for v in report.verdicts]


def _verdict(report, criterion):
    return next(v for v in report.verdicts if v.criterion == criterion)


class TestPlans:
    def test_eps_schedule_validation(self):
        with pytest.raises(ConfigurationError):
            EpsSchedule(0.4, (100,))
        with pytest.raises(ConfigurationError):
            EpsSchedule(0.2, (1000, 100))
        with pytest.raises(ConfigurationError, match="violated at n=1000"):
            EpsSchedule(0.2, (1000,)).check()
        EpsSchedule(0.1, (10 ** 6,)).check()

    def test_l_rule_parse_and_resolve(self):
        assert LRule.parse("sqrt").resolve(10 ** 6, 0.05, 5, 5) == math.ceil(math.sqrt(2e7))
        fixed = LRule.parse("fixed:40000")
        assert fixed.resolve(10 ** 6, 0.05, 5, 5) == 40000 and str(fixed) == "fixed:40000"
        assert LRule.parse("omega:3").resolve(10 ** 6, 0.05, 5, 5) == 16667
        for bad in ("bogus", "fixed:", "fixed:x", "sqrt:2"):
            with pytest.raises(ConfigurationError):
                LRule.parse(bad)

    def test_check_window(self):
        check_window(4473, 10 ** 6, 0.05, 5, 5)
        with pytest.raises(ConfigurationError, match="eps\\^2 L"):
            check_window(100, 10 ** 6, 0.05, 5, 5)
        with pytest.raises(ConfigurationError, match="eps n"):
            check_window(20000, 10 ** 6, 0.05, 5, 5)

    def test_sprinkle_plan(self):
        plan = SprinklePlan.build(10 ** 6, 1.05e-6)
        assert plan.p1 == pytest.approx(1e-8)
        assert plan.L == 16667
        assert plan.algebra_error() < 1e-12
        with pytest.raises(ConfigurationError):
            SprinklePlan.build(1000, 0.9 / 1000)
        with pytest.raises(ConfigurationError):
            SprinklePlan.build(1000, 1.5 / 1000, omega_prime=1000)
        with pytest.raises(ConfigurationError):
            SprinklePlan.build(1000, 1.5 / 1000, delta=1.5)

    def test_verdicts_and_tolerances(self):
        with pytest.raises(ConfigurationError):
            Verdict("made-up", True, 0.0)
        assert resolve_tolerances({"tail_factor": 2})["tail_factor"] == 2.0
        with pytest.raises(ConfigurationError):
            resolve_tolerances({"bogus": 1.0})


def test_survival_checks_pass():
    report = run_survival_checks()
    assert report.passed
    assert _ids(report).count("rho-2eps") == 3
    assert "fixed-point" in _ids(report) and "rho-monotone" in _ids(report)


def test_l1_records_do_not_depend_on_worker_count():
    schedule = EpsSchedule(0.1, (2000,))
    serial = run_l1_experiment(schedule, LRule(), 3, master_seed=11, parallelism=1)
    pooled = run_l1_experiment(schedule, LRule(), 3, master_seed=11, parallelism=2)
    assert serial.records == pooled.records
    assert serial.config == pooled.config
    assert [r["replicate"] for r in serial.records] == [0, 1, 2]
    assert serial.aggregates["n=2000"]["L"] == 66


def test_l1_window_violation_is_rejected():
    with pytest.raises(ConfigurationError):
        run_l1_experiment(EpsSchedule(0.1, (2000,)), LRule("fixed", 2), 1, master_seed=1)


def test_lower_bound_out_of_regime():
    report = run_lower_bound_check(GnpParams(500, 0.0), 5, 20, master_seed=3)
    assert not report.passed
    verdict = _verdict(report, "lower-bound")
    assert verdict.detail == "out-of-regime: eps <= 0"
    assert report.aggregates["estimate"]["point"] == 0.0


def test_duality_rejects_subcritical():
    with pytest.raises(ParameterDomainError):
        run_duality_check(BpParams(2, 0.25), 11, 100, master_seed=1)


def test_duality_small_run():
    report = run_duality_check(BpParams(2, 0.75), 11, 20000, master_seed=3)
    assert {"duality", "duality-exact", "dual-mean"} <= set(_ids(report))
    assert report.aggregates["p_value"] > 1e-3
    assert abs(report.aggregates["dual_mean_size"]["point"] - 2.0) < 0.1
    # extinction probability is 1/9
    assert abs(report.aggregates["extinct_fraction"] - 1 / 9) < 0.015


def test_total_size_mean():
    report = run_total_size_check(BpParams(50, 0.015), 20000, master_seed=4)
    assert report.aggregates["expected"] == pytest.approx(4.0)
    assert abs(report.aggregates["mean_size"]["point"] - 4.0) < 0.25


def test_tail_subcritical_uses_markov_bound():
    report = run_tail_and_width_checks(BpParams(100, 0.008), 50, 10, 5000, master_seed=5)
    assert _ids(report) == ["tail-markov"]
    assert report.passed


def test_tail_preconditions():
    with pytest.raises(ConfigurationError, match="eps\\^2 L"):
        run_tail_and_width_checks(BpParams(1000, 1.05 / 1000), 100, 10 ** 4, 100, master_seed=1)
    with pytest.raises(ConfigurationError):
        run_tail_and_width_checks(BpParams(10, 0.1), 100, 100, 100, master_seed=1)


def test_coupling_check_has_no_violations():
    report = run_coupling_check(GnpParams(300, 1.2 / 300), 20, 400, master_seed=6)
    assert report.aggregates["subset_violations"] == 0
    assert report.aggregates["dichotomy_violations"] == 0
    assert report.aggregates["graph_above_bp"] > 0
    assert "coupling-marginal" in _ids(report)
    assert report.aggregates["marginal_p_value"] > 1e-4
    with pytest.raises(ParameterDomainError):
        run_coupling_check(GnpParams(300, 1.2 / 300), 300, 10, master_seed=6)


def test_truncation_check_boundary_arithmetic():
    report = run_truncation_check(GnpParams(2000, 1.1 / 2000), 100, 300, master_seed=7)
    assert _verdict(report, "boundary-arithmetic").passed
    assert report.aggregates["boundary_max"] <= report.config["boundary_cap"] + 1
    assert {"event-a", "boundary-hit"} <= set(_ids(report))
    assert 0.0 < report.aggregates["event_a"]["point"] < 1.0
    assert report.aggregates["second_mean_size"] >= 1.0


def test_exhausted_explorations_match_the_census():
    report = run_truncation_check(GnpParams(2000, 1.1 / 2000), 100, 300, master_seed=7)
    assert _verdict(report, "exhausted-census").passed
    assert report.aggregates["census_mismatches"] == 0
    assert sum(report.aggregates["census_exhausted_hist"]) > 100
    assert sum(report.aggregates["exhausted_hist"]) + round(report.aggregates["event_a"]["point"] * 300) == 300
    assert report.aggregates["exhausted_p_value"] > 1e-4


def test_truncation_counts_event_a_when_everything_is_reached():
    # the size cap equals n, so every exploration stops with all of G reached
    report = run_truncation_check(GnpParams(30, 1.0), 30, 20, master_seed=7)
    assert report.aggregates["event_a"]["point"] == 1.0
    assert report.aggregates["boundary_stops"] == 0
    assert "boundary-hit" not in _ids(report)
    assert report.degenerate == 2


def test_sprinkle_small_run():
    plan = SprinklePlan.build(5000, 1.3 / 5000)
    report = run_sprinkle(plan, 3, master_seed=8)
    assert _verdict(report, "sprinkle-algebra").passed
    assert report.degenerate == 0
    assert all(0.0 < rec["merged_fraction"] <= 1.0 for rec in report.records)


def test_sprinkle_all_degenerate():
    plan = SprinklePlan.build(5000, 1.3 / 5000, omega_prime=0.01)
    report = run_sprinkle(plan, 2, master_seed=8)
    assert report.degenerate == 2
    assert not _verdict(report, "sprinkle-merge").passed


def test_tail_and_width_checks_supercritical():
    # eps = 0.2: eps^2 L = 32, eps M = 52
    report = run_tail_and_width_checks(BpParams(1000, 1.2 / 1000), 800, 260, 2000, master_seed=5)
    assert _ids(report) == ["tail-bound", "survival-frequency", "width-extinct", "width-conditional"]
    assert _verdict(report, "tail-bound").passed
    assert _verdict(report, "width-extinct").passed
    assert _verdict(report, "width-conditional").passed
    rho = report.aggregates["solution"]["rho"]
    assert abs(report.aggregates["survival"]["point"] - rho) < 0.06
    assert report.aggregates["misclassification_bound"] < 1e-9


@pytest.mark.slow
def test_lower_bound_check_supercritical():
    report = run_lower_bound_check(GnpParams(100_000, 1.05 / 100_000), 400, 2000, master_seed=3)
    assert _ids(report) == ["lower-bound", "lower-band", "tail-flatness"]
    assert report.config["cap"] == 800
    assert 0.6 < report.aggregates["estimate_over_2eps"] < 1.6
    assert report.aggregates["estimate_2L"]["point"] <= report.aggregates["estimate"]["point"]


def test_l1_experiment_with_sandwich():
    report = run_l1_experiment(EpsSchedule(0.1, (2000,)), LRule(), 3, master_seed=11, sandwich_roots=500)
    row = report.aggregates["n=2000"]
    assert row["lower_estimate"]["n_samples"] == 500
    assert 0.3 < row["lower_estimate_over_2eps"] < 0.9
    assert _verdict(report, "sandwich").passed
    assert report.config["sandwich_roots"] == 500
    with pytest.raises(ConfigurationError):
        run_l1_experiment(EpsSchedule(0.1, (2000,)), LRule(), 1, master_seed=11, sandwich_roots=-1)


def test_sandwich():
    l1 = ExperimentReport("l1", {}, aggregates={
        "n=100": {"n_large_ratio": 0.9, "n_large_ratio_lo": 0.85, "n_large_ratio_hi": 0.95}})
    lower = ExperimentReport("lower", {}, aggregates={"estimate_over_2eps": 0.95, "half_width_over_2eps": 0.01})
    assert check_sandwich(l1, lower, 100).passed
    assert not check_sandwich(l1, lower, 100, halfwidths=0.0).passed
    with pytest.raises(ConfigurationError):
        check_sandwich(l1, ExperimentReport("lower", {}), 100)


def test_oracle_check_small():
    report = run_oracle_check(n_values=(2, 3), p_values=(0.5,), samples=20000, master_seed=9)
    assert _verdict(report, "oracle-exact").passed
    assert report.aggregates["n=3,p=0.5"]["exact"] == [0.125, 0.375, 0.5]
    assert sum(report.aggregates["n=2,p=0.5"]["counts"]) == 20000


class TestExperimentFiles:
    def test_load_file(self, tmp_path):
        path = tmp_path / "tail.env"
        path.write_text("KIND=tail\nN_VALUES=1e5\nEPS=0.05\nL_RULE=fixed:40000\nTOL_TAIL_FACTOR=1.5\n")
        settings = load_experiment_file(str(path))
        assert settings["kind"] == "tail"
        assert settings["n_values"] == [100000]
        assert settings["eps"] == [0.05]
        assert settings["tolerances"]["tail_factor"] == 1.5

    @pytest.mark.parametrize("text", ["COLOUR=blue\n", "N_VALUES=abc\n", "M=2.5\n", "TOL_BOGUS=1\n"])
    def test_bad_files(self, tmp_path, text):
        path = tmp_path / "bad.env"
        path.write_text(text)
        with pytest.raises(ConfigurationError):
            load_experiment_file(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_experiment_file(str(tmp_path / "absent.env"))

    def test_resolve_settings(self):
        resolved = resolve_settings("tail", {"p": 0.001, "samples": None})
        assert resolved["p"] == 0.001 and "eps" not in resolved
        assert resolved["samples"] == 1_000_000
        with pytest.raises(ConfigurationError):
            resolve_settings("tail", {"kind": "l1"})
        with pytest.raises(ConfigurationError):
            resolve_settings("nope", {})

    def test_run_experiment_dispatches(self):
        report = run_experiment("totsize", {"samples": 2000, "master_seed": 5})
        assert report.kind == "totsize"
        assert report.config["samples"] == 2000

    def test_run_experiment_needs_eps_for_sqrt_rule(self):
        with pytest.raises(ConfigurationError):
            run_experiment("trunc", {"p": 0.5 / 10 ** 6, "l_rule": "sqrt"})

    def test_defaults_follow_the_acceptance_runs(self):
        assert resolve_settings("totsize", {})["p"] == 0.01
        assert resolve_settings("totsize", {})["samples"] == 10 ** 6
        assert resolve_settings("tail", {})["samples"] == 10 ** 6
        assert resolve_settings("l1", {})["n_values"] == [10 ** 5, 10 ** 6, 10 ** 7]

    def test_shipped_config_files_load(self):
        trunc = load_experiment_file(str(CONFIGS / "criterion_08_trunc.env"))
        assert trunc["kind"] == "trunc" and trunc["exponent"] == 0.2
        lower = load_experiment_file(str(CONFIGS / "criterion_10_lower.env"))
        assert lower["window_high"] == 0.5 and lower["l_rule"] == "fixed:100000"

    def test_seed_from_file_reaches_the_report(self, tmp_path):
        path = tmp_path / "totsize.env"
        path.write_text("KIND=totsize\nSAMPLES=500\nMASTER_SEED=42\nPARALLELISM=1\n")
        report = run_experiment("totsize", load_experiment_file(str(path)))
        assert report.config["master_seed"] == 42
