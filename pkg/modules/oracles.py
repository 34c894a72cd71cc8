"""Exact small-case distributions by exhaustive enumeration.

Probabilities are exact Fractions. A float p is read through its decimal
repr, so 0.1 means 1/10 rather than the nearest binary double.
"""
import logging
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Dict, List, Union

from config import Config
from modules.errors import ParameterDomainError
from modules.gnp_graph import UnionFind

Probability = Union[float, int, str, Fraction]


def as_fraction(p: Probability) -> Fraction:
    try:
        value = Fraction(repr(p)) if isinstance(p, float) else Fraction(p)
    except (ValueError, TypeError, ZeroDivisionError) as e:
        raise ParameterDomainError(f"p must be a number, decimal string or fraction, got {p!r}") from e
    if not 0 <= value <= 1:
        raise ParameterDomainError(f"p must lie in [0, 1], got {p}")
    return value


def exact_l1_distribution(n: int, p: Probability) -> Dict[int, Fraction]:
    """Law of L1(G(n, p)) by summing over all 2^C(n,2) graphs."""
    if not 1 <= n <= Config.ORACLE_MAX_VERTICES:
        raise ParameterDomainError(f"exact L1 enumeration supports 1 <= n <= {Config.ORACLE_MAX_VERTICES}, got {n}")
    q = as_fraction(p)
    pairs = list(combinations(range(n), 2))
    m = len(pairs)
    # weight depends only on the edge count
    weights = [q ** e * (1 - q) ** (m - e) for e in range(m + 1)]
    distribution: Dict[int, Fraction] = {}
    for mask in range(1 << m):
        weight = weights[bin(mask).count("1")]
        if not weight:
            continue
        forest = UnionFind(n)
        for bit, (a, b) in enumerate(pairs):
            if mask >> bit & 1:
                forest.union(a, b)
        l1 = max(forest.component_sizes())
        distribution[l1] = distribution.get(l1, Fraction(0)) + weight
    logging.debug(f"Enumerated {1 << m} graphs on {n} vertices")
    return {size: distribution[size] for size in sorted(distribution)}


def exact_bp_size_distribution(fanout: int, p: Probability, max_size: int) -> Dict[int, Fraction]:
    """Pr(|X(fanout, p)| = s) for s = 1..max_size.

    Every tree with at most max_size vertices is enumerated as its sequence
    of child counts in exploration order; sequences sharing a (pending,
    reached) state are summed once. The mass missing from the result is
    Pr(|X| > max_size), infinite trees included.
    """
    if not 1 <= fanout <= Config.ORACLE_MAX_FANOUT:
        raise ParameterDomainError(f"exact tree enumeration supports fan-out 1..{Config.ORACLE_MAX_FANOUT}, got {fanout}")
    if not 1 <= max_size <= Config.ORACLE_MAX_TREE_SIZE:
        raise ParameterDomainError(f"exact tree enumeration supports sizes 1..{Config.ORACLE_MAX_TREE_SIZE}, got {max_size}")
    q = as_fraction(p)
    offspring = [comb(fanout, k) * q ** k * (1 - q) ** (fanout - k) for k in range(fanout + 1)]

    @lru_cache(maxsize=None)
    def finish(pending: int, reached: int) -> tuple:
        if pending == 0:
            return ((reached, Fraction(1)),)
        totals: Dict[int, Fraction] = {}
        for children, weight in enumerate(offspring):
            if weight == 0 or reached + children > max_size:
                continue
            for size, prob in finish(pending - 1 + children, reached + children):
                totals[size] = totals.get(size, Fraction(0)) + weight * prob
        return tuple(sorted(totals.items()))

    found = dict(finish(1, 1))
    return {size: found.get(size, Fraction(0)) for size in range(1, max_size + 1)}


def pmf_with_tail(distribution: Dict[int, Fraction], support: List[int]) -> List[float]:
    """Probabilities on `support` followed by one bin holding the remaining mass."""
    head = [distribution.get(s, Fraction(0)) for s in support]
    tail = 1 - sum(head, Fraction(0))
    return [float(x) for x in head] + [float(tail)]
