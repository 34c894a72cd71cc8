import math
from collections import Counter

import pytest
from hypothesis import assume, given, settings
import hypothesis.strategies as st

from modules.bp_engine import (UNBOUNDED, BpParams, BpStatus, SurvivalLabel, classify_survival, default_caps,
                               dual_parameter, expected_total_size_subcritical, misclassification_bound,
                               sample_dual_direct, simulate_bp, solve_survival)
from modules.errors import ParameterDomainError, PreconditionError
from modules.oracles import exact_bp_size_distribution, pmf_with_tail
from modules.rng_stats import chi_square_gof, substream


def test_closed_form_fixed_point():
    solution = solve_survival(BpParams(2, 0.75))
    assert solution.rho == pytest.approx(8 / 9, abs=1e-10)
    assert solution.pi == pytest.approx(0.25, abs=1e-10)
    assert solution.dual_mean == pytest.approx(0.5, abs=1e-10)
    assert solution.dual_expected_size == pytest.approx(2.0, abs=1e-9)
    assert solution.residual <= 1e-12


def test_rho_is_about_twice_eps():
    solution = solve_survival(BpParams(10 ** 6, 1.01e-6))
    assert abs(solution.rho / 0.02 - 1.0) < 0.05


def test_subcritical_and_critical_have_rho_zero():
    solution = solve_survival(BpParams(5, 0.1))
    assert solution.rho == 0.0 and solution.pi == 0.1
    assert solve_survival(BpParams(4, 0.25)).rho == 0.0


def test_certain_survival():
    solution = solve_survival(BpParams(3, 1.0))
    assert solution.rho == 1.0
    assert solution.pi == 0.0 and solution.dual_expected_size == 1.0


def test_solver_rejects_bad_input():
    with pytest.raises(ParameterDomainError):
        solve_survival(BpParams(2, 0.75), tol=0.0)
    with pytest.raises(ParameterDomainError):
        BpParams(2, 1.5)
    with pytest.raises(ParameterDomainError):
        BpParams(0, 0.5)


@pytest.mark.property_based
@given(st.integers(2, 5000), st.floats(0.0, 1.0))
@settings(max_examples=300, deadline=None)
def test_fixed_point_invariants(n, p):
    params = BpParams(n, p)
    solution = solve_survival(params)
    residual = abs(1.0 - solution.rho - (1.0 - p * solution.rho) ** n)
    assert residual <= 1e-9
    if params.mean <= 1.0:
        assert solution.rho == 0.0 and solution.pi == p
    else:
        assert solution.rho > 0.0
        if p < 1.0:
            assert solution.pi == pytest.approx(dual_parameter(p, solution.rho))


@pytest.mark.property_based
@given(st.integers(2, 5000), st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_dual_is_subcritical(n, p):
    assume(n * p > 1.001)
    solution = solve_survival(BpParams(n, p))
    assert solution.dual_mean < 1.0
    # the dual of a subcritical process is itself
    assert solve_survival(BpParams(n, solution.pi)).pi == solution.pi


def test_expected_total_size():
    assert expected_total_size_subcritical(0.0) == 1.0
    assert expected_total_size_subcritical(0.5) == 2.0
    assert expected_total_size_subcritical(0.9) == pytest.approx(10.0)
    with pytest.raises(ParameterDomainError):
        expected_total_size_subcritical(1.0)


def test_default_caps():
    assert default_caps(solve_survival(BpParams(2, 0.75))) == (26, 23)
    assert default_caps(solve_survival(BpParams(2, 0.25))) == (UNBOUNDED, UNBOUNDED)


def test_simulate_without_offspring():
    outcome = simulate_bp(BpParams(7, 0.0), 10, 10, substream(1, 0, "bp"))
    assert (outcome.status, outcome.total_size, outcome.width, outcome.generations) == (BpStatus.EXTINCT, 1, 1, 0)


def test_simulate_unary_chain_hits_size_cap():
    outcome = simulate_bp(BpParams(1, 1.0), 100, UNBOUNDED, substream(1, 0, "bp"))
    assert outcome.status is BpStatus.CENSORED_SIZE
    assert outcome.total_size == 100


def test_simulate_rejects_bad_caps():
    with pytest.raises(ParameterDomainError):
        simulate_bp(BpParams(2, 0.5), 0, 10, substream(1, 0, "bp"))


@pytest.mark.property_based
@given(st.integers(1, 20), st.floats(0.0, 1.0), st.integers(1, 200), st.integers(1, 50), st.integers(0, 1000))
@settings(max_examples=200, deadline=None)
def test_outcome_invariants(n, p, size_cap, width_cap, replicate):
    outcome = simulate_bp(BpParams(n, p), size_cap, width_cap, substream(11, replicate, "bp"))
    assert outcome.width <= outcome.total_size
    assert outcome.generations < outcome.total_size
    if outcome.status is BpStatus.CENSORED_SIZE:
        assert outcome.total_size >= size_cap
    if outcome.status is BpStatus.CENSORED_WIDTH:
        assert outcome.width >= width_cap


def test_classify_survival():
    solution = solve_survival(BpParams(2, 0.75))
    _, width_cap = default_caps(solution)
    died = simulate_bp(BpParams(2, 0.0), 10, width_cap, substream(1, 0, "bp"))
    assert classify_survival(died, solution, width_cap).label is SurvivalLabel.DIED

    wide = simulate_bp(BpParams(2, 1.0), UNBOUNDED, width_cap, substream(1, 0, "bp"))
    assert wide.status is BpStatus.CENSORED_WIDTH
    verdict = classify_survival(wide, solution, width_cap)
    assert verdict.label is SurvivalLabel.SURVIVED
    assert verdict.misclassification_bound <= math.exp(-20)


def test_classify_survival_names_minimum_cap():
    solution = solve_survival(BpParams(2, 0.75))
    outcome = simulate_bp(BpParams(2, 1.0), UNBOUNDED, 2, substream(1, 0, "bp"))
    with pytest.raises(PreconditionError, match="minimum width_cap is 23"):
        classify_survival(outcome, solution, 2)


def test_misclassification_bound_uses_smaller_cap_bound():
    solution = solve_survival(BpParams(2, 0.75))
    assert misclassification_bound(solution, None, 23) == pytest.approx((1 / 9) ** 23)
    assert misclassification_bound(solution, 1000, None) == pytest.approx((1 / 9) * 2 / 1000)
    assert misclassification_bound(solution, None, None) == 1.0


def test_dual_rejects_subcritical():
    params = BpParams(2, 0.25)
    with pytest.raises(ParameterDomainError):
        sample_dual_direct(params, solve_survival(params), 10, 10, substream(1, 0, "dual"))


def test_direct_dual_size_one_frequency():
    params = BpParams(2, 0.75)
    solution = solve_survival(params)
    rng = substream(5, 0, "dual")
    sizes = [sample_dual_direct(params, solution, UNBOUNDED, UNBOUNDED, rng).total_size for _ in range(20000)]
    # Pr(size 1) = (3/4)^2 = 9/16; sd of the estimate ~ 0.0035
    assert abs(sizes.count(1) / len(sizes) - 9 / 16) < 0.015


@pytest.mark.slow
def test_conditioned_sizes_match_exact_enumeration():
    params = BpParams(2, 0.75)
    size_cap, width_cap = default_caps(solve_survival(params))
    rng = substream(6, 0, "bp")
    counts = Counter()
    for _ in range(100000):
        outcome = simulate_bp(params, size_cap, width_cap, rng)
        if outcome.extinct:
            counts[min(outcome.total_size, 11)] += 1
    observed = [counts[s] for s in range(1, 12)]
    pmf = pmf_with_tail(exact_bp_size_distribution(2, "0.25", 10), list(range(1, 11)))
    _, pvalue = chi_square_gof(observed, pmf)
    assert pvalue > 1e-3
