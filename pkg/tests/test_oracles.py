import math
from fractions import Fraction

import pytest

from modules.errors import ParameterDomainError
from modules.oracles import as_fraction, exact_bp_size_distribution, exact_l1_distribution, pmf_with_tail


def test_two_vertices():
    assert exact_l1_distribution(2, "0.3") == {1: Fraction(7, 10), 2: Fraction(3, 10)}


def test_three_vertices_at_one_half():
    distribution = exact_l1_distribution(3, 0.5)
    # 4 of the 8 graphs have at least two edges
    assert distribution[3] == Fraction(1, 2)
    assert distribution == {1: Fraction(1, 8), 2: Fraction(3, 8), 3: Fraction(1, 2)}


def test_single_vertex_and_extreme_p():
    assert exact_l1_distribution(1, 0.7) == {1: Fraction(1)}
    assert exact_l1_distribution(4, 0) == {1: Fraction(1)}
    assert exact_l1_distribution(4, 1) == {4: Fraction(1)}


def test_distribution_sums_to_one():
    assert sum(exact_l1_distribution(4, "1/3").values()) == 1
    assert sum(exact_l1_distribution(5, 0.2).values()) == 1


def test_tree_sizes_for_binary_fanout():
    distribution = exact_bp_size_distribution(2, "1/4", 6)
    assert distribution[1] == Fraction(9, 16)
    assert distribution[2] == Fraction(27, 128)
    assert sum(distribution.values()) < 1


@pytest.mark.parametrize("fanout, p", [(1, "1/3"), (2, "1/4"), (3, "1/2"), (3, "1/5")])
def test_tree_sizes_match_the_hitting_time_formula(fanout, p):
    # Pr(|X| = s) = C(fanout s, s - 1) p^(s-1) (1-p)^(fanout s - s + 1) / s
    q = Fraction(p)
    distribution = exact_bp_size_distribution(fanout, p, 6)
    for s in range(1, 7):
        expected = Fraction(math.comb(fanout * s, s - 1), s) * q ** (s - 1) * (1 - q) ** (fanout * s - s + 1)
        assert distribution[s] == expected


def test_tree_sizes_are_exactly_dual():
    # extinction probability of X(2, 3/4) is 1/9 and its dual is X(2, 1/4)
    supercritical = exact_bp_size_distribution(2, "0.75", 8)
    dual = exact_bp_size_distribution(2, "0.25", 8)
    assert all(supercritical[s] * 9 == dual[s] for s in range(1, 9))


def test_certain_branching_never_finishes():
    distribution = exact_bp_size_distribution(2, 1, 10)
    assert all(prob == 0 for prob in distribution.values())


@pytest.mark.parametrize("call", [
    lambda: exact_l1_distribution(6, 0.5),
    lambda: exact_l1_distribution(0, 0.5),
    lambda: exact_bp_size_distribution(4, 0.5, 5),
    lambda: exact_bp_size_distribution(2, 0.5, 13),
    lambda: exact_bp_size_distribution(2, 0.5, 0),
])
def test_enumeration_limits(call):
    with pytest.raises(ParameterDomainError):
        call()


def test_pmf_with_tail():
    pmf = pmf_with_tail(exact_bp_size_distribution(2, "0.25", 10), list(range(1, 6)))
    assert len(pmf) == 6
    assert sum(pmf) == pytest.approx(1.0)
    assert pmf[0] == pytest.approx(9 / 16)


def test_as_fraction():
    assert as_fraction(0.1) == Fraction(1, 10)
    assert as_fraction("3/8") == Fraction(3, 8)
    assert as_fraction(1) == Fraction(1)
    with pytest.raises(ParameterDomainError):
        as_fraction("abc")
    with pytest.raises(ParameterDomainError):
        as_fraction(1.5)
