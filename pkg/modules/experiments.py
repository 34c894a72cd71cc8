"""Replicated runs that turn the branching-process and G(n, p) statements
into pass/fail reports.

Each run_* function resolves its configuration, cuts the work into
replicates keyed by replicate index, executes them serially or on a process
pool, and folds the records (sorted by replicate index) into aggregates and
verdicts. Records depend only on (configuration, master seed), never on the
worker count.
"""
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import dotenv_values
from tqdm import tqdm

from config import Config
from modules.bp_engine import (UNBOUNDED, BpParams, default_caps, sample_dual_direct,
                               simulate_bp, solve_survival)
from modules.coupling import (StopReason, boundary_cap_for, conditional_second_explore, coupled_explore,
                              coupled_explore_lower, truncated_explore)
from modules.errors import ConfigurationError, ParameterDomainError
from modules.gnp_graph import (FixedGraphOracle, GnpParams, LazyGnpOracle, UnionFind, UnvisitedPool,
                               component_census, count_large, explore_component, sample_gnp_edges)
from modules.oracles import exact_bp_size_distribution, exact_l1_distribution, pmf_with_tail
from modules.rng_stats import (CiEstimate, z_score, chi_square_gof, chi_square_two_sample, mean_ci, proportion_ci,
                               replicate_seed, substream)

SAMPLE_BATCH = 10_000
ROOT_BATCH = 250

ACCEPTANCE_CRITERIA = {
    "fixed-point": "closed-form survival fixed point at (n=2, p=0.75): rho = 8/9, pi = 1/4",
    "rho-2eps": "rho / 2eps within the band for each eps",
    "rho-monotone": "|rho / 2eps - 1| decreases as eps decreases",
    "duality": "conditioned X(n,p) and direct X(n,pi) size histograms agree (chi-square)",
    "duality-exact": "both histograms match the exact enumeration of the dual",
    "dual-mean": "mean dual size covers 1 / (1 - n pi)",
    "totsize": "subcritical mean total size covers 1 / (1 - np)",
    "tail-bound": "Pr(|X| >= L) <= f (2eps + 1/(eps L))",
    "tail-markov": "subcritical Pr(|X| >= L) <= 1 / ((1 - np) L)",
    "width-extinct": "Pr(width >= M and extinct) <= f eps",
    "width-conditional": "Pr(extinct | width >= M) <= (1-rho)^M + k half-widths",
    "survival-frequency": "censored-run survival frequency covers rho",
    "coupling-subset": "exploration tree inside X(n,p) generation by generation",
    "coupling-dichotomy": "|C_v| >= |X(n-k,p)| or both at least k",
    "coupling-marginal": "branching side of the coupling is distributed as X(n,p)",
    "boundary-arithmetic": "ceil(eps L) <= |boundary| at boundary stops, |boundary| <= ceil(eps L) + 1 always",
    "event-a": "Pr(truncated exploration stops early) <= f 2eps",
    "boundary-hit": "Pr(second exploration touches the boundary) <= f eps L E|C'_w| / n",
    "exhausted-census": "an Exhausted truncated exploration reaches exactly the census component of its root",
    "exhausted-law": "Exhausted sizes from lazy and edge-stream graphs agree (chi-square)",
    "l1-ratio": "mean L1 / 2eps n within the band",
    "giant-unique": "mean L2 / L1 strictly decreasing along the sweep",
    "sandwich": "N_[L,n] / 2eps n between the lower-bound estimate and 1, up to slack",
    "lower-bound": "Wilson lower limit of Pr(|C_v| >= L) at least f eps",
    "lower-band": "Pr(|C_v| >= L) estimate inside [low eps, high eps]",
    "tail-flatness": "estimates at L and 2L agree within their half-widths",
    "sprinkle-merge": "mean merged fraction of the large components",
    "sprinkle-l1": "mean final L1 at least f 2eps n",
    "sprinkle-algebra": "(1-p0)(1-p1) = 1-p",
    "oracle-l1": "simulated L1 law matches exhaustive enumeration",
    "oracle-exact": "enumeration gives Pr(L1 = 3) = 1/2 at n=3, p=1/2",
}


@dataclass(frozen=True)
class Verdict:
    criterion: str
    passed: bool
    margin: float
    detail: str = ""

    def __post_init__(self):
        if self.criterion not in ACCEPTANCE_CRITERIA:
            raise ConfigurationError(f"unknown acceptance criterion {self.criterion!r}")

    def as_dict(self) -> dict:
        return {"criterion": self.criterion, "passed": bool(self.passed), "margin": float(self.margin),
                "detail": self.detail}


@dataclass
class ExperimentReport:
    kind: str
    config: Dict[str, Any]
    records: List[Dict[str, Any]] = field(default_factory=list)
    aggregates: Dict[str, Any] = field(default_factory=dict)
    verdicts: List[Verdict] = field(default_factory=list)
    timings: List[Dict[str, Any]] = field(default_factory=list)
    degenerate: int = 0

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def summary(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "aggregates": self.aggregates,
            "verdicts": [v.as_dict() for v in self.verdicts],
            "degenerate": self.degenerate,
            "passed": self.passed,
        }


def resolve_tolerances(overrides: Optional[Dict[str, float]] = None) -> Dict[str, float]:
    tolerances = dict(Config.TOLERANCES)
    for key, value in (overrides or {}).items():
        if key not in tolerances:
            raise ConfigurationError(f"unknown tolerance {key!r}; known: {', '.join(sorted(tolerances))}")
        tolerances[key] = float(value)
    return tolerances


# ---------------------------------------------------------------------------
# Schedules and plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsSchedule:
    """eps(n) = n^-a along an ascending list of n."""
    exponent: float
    n_values: Tuple[int, ...]
    floor: float = Config.CRITICALITY_FLOOR

    def __post_init__(self):
        if not 0.0 < self.exponent < 1.0 / 3.0:
            raise ConfigurationError(f"exponent a must lie in (0, 1/3), got {self.exponent}")
        if not self.n_values or list(self.n_values) != sorted(set(self.n_values)):
            raise ConfigurationError(f"n values must be a non-empty ascending list, got {list(self.n_values)}")

    def eps(self, n: int) -> float:
        return n ** -self.exponent

    def omega(self, n: int) -> float:
        return self.eps(n) * n ** (1.0 / 3.0)

    def criticality(self, n: int) -> float:
        return self.eps(n) ** 3 * n

    def check(self):
        for n in self.n_values:
            value = self.criticality(n)
            if value < self.floor:
                raise ConfigurationError(f"eps^3 n >= {self.floor:g} violated at n={n}: eps^3 n = {value:.3f}")


@dataclass(frozen=True)
class LRule:
    """How L is chosen from (n, eps): sqrt (middle of the window), fixed, or eps n / omega."""
    kind: str = "sqrt"
    value: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "LRule":
        kind, _, value = text.strip().partition(":")
        if kind == "sqrt" and not value:
            return cls("sqrt")
        if kind in ("fixed", "omega") and value:
            try:
                return cls(kind, float(value))
            except ValueError:
                pass
        raise ConfigurationError(f"L rule must be sqrt, fixed:<int> or omega:<float>, got {text!r}")

    def resolve(self, n: int, eps: float, low: float, high: float) -> int:
        if self.kind == "fixed":
            return int(self.value)
        if self.kind == "omega":
            return math.ceil(eps * n / self.value)
        return math.ceil(math.sqrt(low * n / (high * eps)))

    def __str__(self):
        return self.kind if self.kind == "sqrt" else f"{self.kind}:{self.value:g}"


def check_window(L: int, n: int, eps: float, low: float, high: float):
    """Raise unless eps^2 L >= low and L <= eps n / high."""
    if eps ** 2 * L < low:
        raise ConfigurationError(f"eps^2 L >= {low:g} violated: eps^2 L = {eps ** 2 * L:.3f} at n={n}, L={L}")
    if L > eps * n / high:
        raise ConfigurationError(f"L <= eps n / {high:g} violated: L = {L} > {eps * n / high:.1f} at n={n}")


@dataclass(frozen=True)
class SprinklePlan:
    n: int
    p: float
    p1: float
    p0: float
    L: int
    omega_prime: float
    delta: float
    eps: float
    omega: float

    @classmethod
    def build(cls, n: int, p: float, omega_prime: Optional[float] = None,
              delta: Optional[float] = None) -> "SprinklePlan":
        omega_prime = Config.OMEGA_PRIME if omega_prime is None else omega_prime
        delta = Config.SPRINKLE_DELTA if delta is None else delta
        if not 0.0 < delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
        if omega_prime <= 0.0:
            raise ConfigurationError(f"omega' must be positive, got {omega_prime}")
        eps = n * p - 1.0
        if eps <= 0.0:
            raise ConfigurationError(f"sprinkling needs a supercritical p, got n p - 1 = {eps:.4g}")
        p1 = n ** (-4.0 / 3.0)
        if p < p1:
            raise ConfigurationError(f"p >= p1 = n^-4/3 violated: p = {p:.4g}")
        p0 = (p - p1) / (1.0 - p1)
        size = eps * n / omega_prime
        if size < 1.0:
            raise ConfigurationError(f"eps n / omega' >= 1 violated: {size:.3f}")
        return cls(n=n, p=p, p1=p1, p0=p0, L=math.ceil(size), omega_prime=omega_prime, delta=delta,
                   eps=eps, omega=eps * n ** (1.0 / 3.0))

    def algebra_error(self) -> float:
        """Relative error of (1 - p0)(1 - p1) against 1 - p."""
        return abs((1.0 - self.p0) * (1.0 - self.p1) - (1.0 - self.p)) / (1.0 - self.p)

    def as_dict(self) -> dict:
        return {"n": self.n, "p": self.p, "p0": self.p0, "p1": self.p1, "L": self.L,
                "omega_prime": self.omega_prime, "delta": self.delta, "eps": self.eps, "omega": self.omega}


# ---------------------------------------------------------------------------
# Replicate execution
# ---------------------------------------------------------------------------

def _l1_replicate(n: int, p: float, eps: float, L: int, master_seed: int, replicate: int) -> dict:
    label = f"gnp:n={n}"
    rng = substream(master_seed, replicate, label)
    census = component_census(n, sample_gnp_edges(GnpParams(n, p), rng))
    return {"replicate": replicate, "seed": replicate_seed(master_seed, replicate, label), "n": n,
            "eps": eps, "L": L, "l1": census.l1, "l2": census.l2, "n_large": count_large(census, L),
            "components": len(census.sizes)}


def _lower_batch(n: int, p: float, L: int, cap: int, samples: int, master_seed: int, replicate: int) -> dict:
    rng = substream(master_seed, replicate, "lower")
    params = GnpParams(n, p)
    hits, hits_double = 0, 0
    for _ in range(samples):
        v = int(rng.integers(n))
        tree = explore_component(v, LazyGnpOracle(params, rng), UnvisitedPool(n), size_cap=cap)
        hits += tree.size >= L
        hits_double += tree.size >= 2 * L
    return {"replicate": replicate, "seed": replicate_seed(master_seed, replicate, "lower"), "n": n,
            "L": L, "samples": samples, "hits": hits, "hits_2L": hits_double}


def _histogram(sizes: Sequence[int], bins: int) -> List[int]:
    """Counts of sizes 1..bins-1 followed by the count of sizes >= bins."""
    counts = [0] * bins
    for s in sizes:
        counts[min(s, bins) - 1] += 1
    return counts


def _duality_batch(n: int, p: float, bins: int, samples: int, master_seed: int, replicate: int) -> dict:
    params = BpParams(n, p)
    solution = solve_survival(params)
    size_cap, width_cap = default_caps(solution)
    rng_a = substream(master_seed, replicate, "bp")
    rng_b = substream(master_seed, replicate, "dual")
    conditioned = []
    for _ in range(samples):
        outcome = simulate_bp(params, size_cap, width_cap, rng_a)
        if outcome.extinct:
            conditioned.append(outcome.total_size)
    direct = [sample_dual_direct(params, solution, UNBOUNDED, UNBOUNDED, rng_b).total_size for _ in range(samples)]
    return {"replicate": replicate, "seed": replicate_seed(master_seed, replicate, "bp"), "n": n, "p": p,
            "samples": samples, "extinct": len(conditioned),
            "conditioned_hist": _histogram(conditioned, bins), "direct_hist": _histogram(direct, bins),
            "direct_sum": sum(direct), "direct_sumsq": sum(s * s for s in direct)}


def _totsize_batch(n: int, p: float, samples: int, master_seed: int, replicate: int) -> dict:
    rng = substream(master_seed, replicate, "bp")
    params = BpParams(n, p)
    sizes = [simulate_bp(params, UNBOUNDED, UNBOUNDED, rng).total_size for _ in range(samples)]
    return {"replicate": replicate, "seed": replicate_seed(master_seed, replicate, "bp"), "n": n, "p": p,
            "samples": samples, "size_sum": sum(sizes), "size_sumsq": sum(s * s for s in sizes)}


def _tail_batch(n: int, p: float, L: int, M: int, width_cap: int, samples: int, master_seed: int,
                replicate: int) -> dict:
    rng = substream(master_seed, replicate, "bp")
    params = BpParams(n, p)
    tail, extinct, wide, wide_extinct = 0, 0, 0, 0
    for _ in range(samples):
        outcome = simulate_bp(params, UNBOUNDED, width_cap, rng)
        died = outcome.extinct
        extinct += died
        tail += (not died) or outcome.total_size >= L
        reached_width = outcome.width >= M
        wide += reached_width
        wide_extinct += reached_width and died
    return {"replicate": replicate, "seed": replicate_seed(master_seed, replicate, "bp"), "n": n, "p": p,
            "samples": samples, "tail": tail, "extinct": extinct, "wide": wide, "wide_extinct": wide_extinct}


def _coupling_batch(n: int, p: float, k: int, bins: int, samples: int, master_seed: int, replicate: int) -> dict:
    params = GnpParams(n, p)
    size_cap, width_cap = default_caps(solve_survival(BpParams(n, p)))
    rng = substream(master_seed, replicate, "couple")
    rng_free = substream(master_seed, replicate, "bp")
    subset_violations, dichotomy_violations, graph_above_bp = 0, 0, 0
    coupled_sizes, free_sizes = [], []
    for _ in range(samples):
        v = int(rng.integers(n))
        joint = coupled_explore(params, v, rng, size_cap, width_cap)
        subset_violations += not joint.holds()
        coupled_sizes.append(joint.bp_outcome.total_size)
        lower = coupled_explore_lower(params, v, k, rng, graph_cap=size_cap)
        dichotomy_violations += not lower.holds()
        graph_above_bp += lower.component_size > lower.bp_outcome.total_size
        free_sizes.append(simulate_bp(BpParams(n, p), size_cap, width_cap, rng_free).total_size)
    return {"replicate": replicate, "seed": replicate_seed(master_seed, replicate, "couple"), "n": n, "p": p,
            "k": k, "samples": samples, "subset_violations": subset_violations,
            "dichotomy_violations": dichotomy_violations, "graph_above_bp": graph_above_bp,
            "coupled_hist": _histogram(coupled_sizes, bins), "free_hist": _histogram(free_sizes, bins)}


def _truncation_batch(n: int, p: float, L: int, second_cap: Optional[int], bins: int, samples: int,
                      master_seed: int, replicate: int) -> dict:
    params = GnpParams(n, p)
    rng = substream(master_seed, replicate, "trunc")
    event_a, boundary_max, boundary_stops, boundary_short = 0, 0, 0, 0
    second_runs, second_hits, second_size_sum = 0, 0, 0
    exhausted = []
    for _ in range(samples):
        v = int(rng.integers(n))
        state = truncated_explore(params, v, L, rng)
        boundary_max = max(boundary_max, len(state.boundary))
        if state.stopped_by is StopReason.BOUNDARY_CAP:
            boundary_stops += 1
            boundary_short += len(state.boundary) < state.boundary_cap
        if not state.event_a:
            exhausted.append(len(state.reached))
            continue
        event_a += 1
        if len(state.reached) >= n:
            continue
        w = int(rng.integers(n))
        while w in state.reached:
            w = int(rng.integers(n))
        second = conditional_second_explore(state, w, params, rng, size_cap=second_cap)
        second_runs += 1
        second_hits += second.hits_boundary
        second_size_sum += second.size
    mismatches, census_exhausted = _census_exhausted(params, L, samples, master_seed, replicate)
    return {"replicate": replicate, "seed": replicate_seed(master_seed, replicate, "trunc"), "n": n, "p": p,
            "L": L, "samples": samples, "event_a": event_a, "boundary_max": boundary_max,
            "boundary_stops": boundary_stops, "boundary_short": boundary_short, "second_runs": second_runs,
            "second_hits": second_hits, "second_size_sum": second_size_sum,
            "exhausted_hist": _histogram(exhausted, bins), "census_exhausted_hist": _histogram(census_exhausted, bins),
            "census_mismatches": mismatches}


def _census_exhausted(params: GnpParams, L: int, samples: int, master_seed: int,
                      replicate: int) -> Tuple[int, List[int]]:
    """Truncated explorations of one edge-stream sample against its union-find census.

    Returns the number of Exhausted explorations whose reached set is not the
    census component of the root, and the sizes of all Exhausted ones.
    """
    rng = substream(master_seed, replicate, "trunc-gnp")
    batches = list(sample_gnp_edges(params, rng))
    forest = UnionFind(params.n)
    component_census(params.n, batches, forest)
    graph = FixedGraphOracle.from_edges(pair for batch in batches for pair in batch.tolist())
    mismatches, sizes = 0, []
    for _ in range(samples):
        v = int(rng.integers(params.n))
        state = truncated_explore(params, v, L, rng, oracle=graph)
        if state.stopped_by is not StopReason.EXHAUSTED:
            continue
        root = forest.find(v)
        same = forest.size[root] == len(state.reached) and all(forest.find(x) == root for x in state.reached)
        mismatches += not same
        sizes.append(len(state.reached))
    return mismatches, sizes


def _sprinkle_replicate(n: int, p0: float, p1: float, L: int, master_seed: int, replicate: int) -> dict:
    rng_graph = substream(master_seed, replicate, "gnp")
    rng_sprinkle = substream(master_seed, replicate, "sprinkle")
    forest = UnionFind(n)
    census = component_census(n, sample_gnp_edges(GnpParams(n, p0), rng_graph), forest)
    large = [forest.size[v] for v in range(n) if forest.parent[v] == v and forest.size[v] >= L]
    record = {"replicate": replicate, "seed": replicate_seed(master_seed, replicate, "gnp"), "n": n,
              "l1": census.l1, "l2": census.l2, "n_large": sum(large), "components_large": len(large)}
    if not large:
        record.update({"merged_fraction": None, "final_l1": census.l1})
        return record
    # only pairs straddling two large components matter for the merge
    merged = UnionFind(len(large))
    pairs = [(a, b) for a in range(len(large)) for b in range(a + 1, len(large))]
    if pairs:
        draws = rng_sprinkle.random(len(pairs))
        for (a, b), u in zip(pairs, draws.tolist()):
            miss = math.exp(large[a] * large[b] * math.log1p(-p1))
            if u >= miss:
                merged.union(a, b)
    unions: Dict[int, int] = {}
    for index, size in enumerate(large):
        root = merged.find(index)
        unions[root] = unions.get(root, 0) + size
    biggest = max(unions.values())
    record.update({"merged_fraction": biggest / sum(large), "final_l1": max(biggest, census.l1)})
    return record


def _oracle_batch(n: int, p: float, samples: int, master_seed: int, replicate: int) -> dict:
    label = f"oracle:n={n}:p={p!r}"
    rng = substream(master_seed, replicate, label)
    params = GnpParams(n, p)
    counts = [0] * n
    for _ in range(samples):
        counts[component_census(n, sample_gnp_edges(params, rng)).l1 - 1] += 1
    return {"replicate": replicate, "seed": replicate_seed(master_seed, replicate, label), "n": n, "p": p,
            "samples": samples, "l1_counts": counts}


WORKERS: Dict[str, Callable[..., dict]] = {
    "l1": _l1_replicate,
    "lower": _lower_batch,
    "duality": _duality_batch,
    "totsize": _totsize_batch,
    "tail": _tail_batch,
    "couple": _coupling_batch,
    "trunc": _truncation_batch,
    "sprinkle": _sprinkle_replicate,
    "oracle": _oracle_batch,
}


def _execute(task: Tuple[str, Dict[str, Any]]) -> Tuple[dict, float]:
    name, payload = task
    started = time.perf_counter()
    record = WORKERS[name](**payload)
    return record, (time.perf_counter() - started) * 1000.0


def run_replicates(tasks: List[Tuple[str, Dict[str, Any]]], parallelism: int = 1,
                   label: str = "replicates") -> Tuple[List[dict], List[dict]]:
    """Run tasks and return (records, timings) in task order."""
    if parallelism < 1:
        raise ConfigurationError(f"parallelism must be positive, got {parallelism}")
    progress = dict(total=len(tasks), desc=label, disable=not Config.SHOW_PROGRESS)
    if parallelism == 1 or len(tasks) <= 1:
        results = [_execute(task) for task in tqdm(tasks, **progress)]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(tqdm(pool.map(_execute, tasks), **progress))
    records = [record for record, _ in results]
    timings = [{"replicate": record.get("replicate"), "kind": name, "runtime_ms": round(ms, 3)}
               for (record, ms), (name, _) in zip(results, tasks)]
    return records, timings


def _batches(total: int, size: int) -> List[int]:
    """Split `total` samples into fixed-size batches, last one possibly short."""
    if total < 1:
        raise ConfigurationError(f"sample count must be positive, got {total}")
    full, rest = divmod(total, size)
    return [size] * full + ([rest] if rest else [])


def _ci_dict(estimate) -> dict:
    return estimate.as_dict()


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def run_l1_experiment(schedule: EpsSchedule, l_rule: LRule, replicates: int, master_seed: int,
                      parallelism: int = 1, tolerances: Optional[Dict[str, float]] = None,
                      window: Optional[Tuple[float, float]] = None, sandwich_roots: int = 0) -> ExperimentReport:
    """L1, L2 and N_[L,n] over G(n, (1 + eps)/n) samples along an eps schedule.

    With `sandwich_roots`, each n also gets a lower-bound run over that many
    roots at the same (n, eps, L), and N_[L,n] / 2eps n is judged against it.
    """
    tol = resolve_tolerances(tolerances)
    low, high = window or (Config.WINDOW_LOW, Config.WINDOW_HIGH)
    if replicates < 1:
        raise ConfigurationError(f"replicates must be positive, got {replicates}")
    if sandwich_roots < 0:
        raise ConfigurationError(f"sandwich roots must be non-negative, got {sandwich_roots}")
    schedule.check()
    plan = []
    for n in schedule.n_values:
        eps = schedule.eps(n)
        L = l_rule.resolve(n, eps, low, high)
        check_window(L, n, eps, low, high)
        plan.append((n, eps, L))

    config = {"kind": "l1", "exponent": schedule.exponent, "n_values": list(schedule.n_values),
              "floor": schedule.floor, "l_rule": str(l_rule), "window": [low, high], "replicates": replicates,
              "sandwich_roots": sandwich_roots, "master_seed": master_seed, "tolerances": tol}
    report = ExperimentReport("l1", config)
    tasks = [("l1", {"n": n, "p": (1.0 + eps) / n, "eps": eps, "L": L, "master_seed": master_seed,
                     "replicate": r}) for n, eps, L in plan for r in range(replicates)]
    report.records, report.timings = run_replicates(tasks, parallelism, "l1")

    l2_means = []
    for n, eps, L in plan:
        rows = [rec for rec in report.records if rec["n"] == n]
        scale = 2.0 * eps * n
        l1_ratio = [rec["l1"] / scale for rec in rows]
        large_ratio = [rec["n_large"] / scale for rec in rows]
        l2_over_l1 = [rec["l2"] / rec["l1"] for rec in rows]
        l1_ci = mean_ci(l1_ratio, Config.CI_LEVEL)
        large_ci = mean_ci(large_ratio, Config.CI_LEVEL)
        l2_ci = mean_ci(l2_over_l1, Config.CI_LEVEL)
        l2_means.append(l2_ci.point)
        report.aggregates[f"n={n}"] = {
            "eps": eps, "criticality": eps ** 3 * n, "omega": schedule.omega(n), "L": L,
            "l1_ratio": l1_ci.point, "l1_ratio_lo": l1_ci.lo, "l1_ratio_hi": l1_ci.hi,
            "n_large_ratio": large_ci.point, "n_large_ratio_lo": large_ci.lo, "n_large_ratio_hi": large_ci.hi,
            "n_large_ratio_var": float(np.var(large_ratio, ddof=1)) if len(rows) > 1 else 0.0,
            "l2_over_l1": l2_ci.point, "mean_abs_l1_deviation": float(np.mean([abs(x - 1.0) for x in l1_ratio])),
        }
        if n >= tol["l1_band_from_n"]:
            band = tol["l1_band_large"] if n >= 10 ** 7 else tol["l1_band"]
            deviation = abs(l1_ci.point - 1.0)
            report.verdicts.append(Verdict("l1-ratio", deviation <= band, band - deviation,
                                           f"n={n}: mean L1/2eps n = {l1_ci.point:.4f}, band +-{band:g}"))
        if sandwich_roots:
            lower = run_lower_bound_check(GnpParams(n, (1.0 + eps) / n), L, sandwich_roots, master_seed,
                                          parallelism, tol, high)
            report.timings.extend(lower.timings)
            report.aggregates[f"n={n}"].update({
                "lower_estimate": lower.aggregates["estimate"],
                "lower_estimate_over_2eps": lower.aggregates["estimate_over_2eps"],
            })
            report.verdicts.append(check_sandwich(report, lower, n))
        logging.info(f"exp-l1 n={n}: L1/2eps n = {l1_ci.point:.4f}, N/2eps n = {large_ci.point:.4f}, "
                     f"L2/L1 = {l2_ci.point:.4f}")

    if len(l2_means) >= 2:
        steps = [a - b for a, b in zip(l2_means, l2_means[1:])]
        report.verdicts.append(Verdict("giant-unique", all(s > 0 for s in steps), min(steps),
                                       "mean L2/L1 along the sweep: " + ", ".join(f"{x:.4f}" for x in l2_means)))
    return report


def check_sandwich(l1_report: ExperimentReport, lower_report: ExperimentReport, n: int,
                   halfwidths: Optional[float] = None) -> Verdict:
    """N_[L,n]/2eps n must sit between the lower-bound estimate / 2eps and 1, up to slack."""
    halfwidths = Config.TOLERANCES["sandwich_halfwidths"] if halfwidths is None else halfwidths
    row = l1_report.aggregates.get(f"n={n}")
    if row is None or "estimate_over_2eps" not in lower_report.aggregates:
        raise ConfigurationError(f"sandwich check needs an l1 row for n={n} and a completed lower-bound report")
    slack = halfwidths * (row["n_large_ratio_hi"] - row["n_large_ratio_lo"]) / 2.0
    slack += halfwidths * lower_report.aggregates["half_width_over_2eps"]
    value = row["n_large_ratio"]
    floor = lower_report.aggregates["estimate_over_2eps"] - slack
    ceiling = 1.0 + slack
    margin = min(value - floor, ceiling - value)
    return Verdict("sandwich", floor <= value <= ceiling, margin,
                   f"N/2eps n = {value:.4f} in [{floor:.4f}, {ceiling:.4f}]")


def run_lower_bound_check(params: GnpParams, L: int, replicates: int, master_seed: int,
                          parallelism: int = 1, tolerances: Optional[Dict[str, float]] = None,
                          window_high: Optional[float] = None) -> ExperimentReport:
    """Estimate Pr(|C_v| >= L) for a uniform root by lazy exploration capped at 2L."""
    tol = resolve_tolerances(tolerances)
    high = Config.WINDOW_HIGH if window_high is None else window_high
    out_of_regime = params.eps <= 0.0
    if not out_of_regime and L > params.eps * params.n / high:
        raise ConfigurationError(f"L <= eps n / {high:g} violated: L = {L} > {params.eps * params.n / high:.1f}")
    if L < 1:
        raise ConfigurationError(f"L must be positive, got {L}")
    cap = 2 * L if 2 * L <= params.n else L
    config = {"kind": "lower", **params.as_dict(), "L": L, "cap": cap, "replicates": replicates,
              "master_seed": master_seed, "tolerances": tol, "window_high": high}
    report = ExperimentReport("lower", config)
    tasks = [("lower", {"n": params.n, "p": params.p, "L": L, "cap": cap, "samples": size,
                        "master_seed": master_seed, "replicate": r})
             for r, size in enumerate(_batches(replicates, ROOT_BATCH))]
    report.records, report.timings = run_replicates(tasks, parallelism, "lower")

    total = sum(rec["samples"] for rec in report.records)
    hits = sum(rec["hits"] for rec in report.records)
    estimate = proportion_ci(hits, total, Config.CI_LEVEL)
    report.aggregates.update({"estimate": _ci_dict(estimate), "samples": total})
    if out_of_regime:
        logging.warning(f"exp-lower: n p - 1 = {params.eps:.4g} is not supercritical")
        report.verdicts.append(Verdict("lower-bound", False, float("nan"), "out-of-regime: eps <= 0"))
        return report

    eps = params.eps
    report.aggregates.update({"estimate_over_2eps": estimate.point / (2 * eps),
                              "half_width_over_2eps": estimate.half_width / (2 * eps)})
    lower = tol["lower_bound_low"] * eps
    upper = tol["lower_bound_high"] * eps
    report.verdicts.append(Verdict("lower-bound", estimate.lo >= lower, estimate.lo - lower,
                                   f"Wilson lower limit {estimate.lo:.5f} vs {lower:.5f}"))
    report.verdicts.append(Verdict("lower-band", lower <= estimate.point <= upper,
                                   min(estimate.point - lower, upper - estimate.point),
                                   f"estimate {estimate.point:.5f} in [{lower:.5f}, {upper:.5f}]"))
    if cap == 2 * L:
        double = proportion_ci(sum(rec["hits_2L"] for rec in report.records), total, Config.CI_LEVEL)
        report.aggregates["estimate_2L"] = _ci_dict(double)
        gap = abs(estimate.point - double.point)
        allowed = estimate.half_width + double.half_width
        report.verdicts.append(Verdict("tail-flatness", gap <= allowed, allowed - gap,
                                       f"|p(L) - p(2L)| = {gap:.5f}"))
    return report


def run_duality_check(params: BpParams, size_truncation: int, samples: int, master_seed: int,
                      parallelism: int = 1, tolerances: Optional[Dict[str, float]] = None) -> ExperimentReport:
    """Compare X(n,p) conditioned on extinction (by rejection) with X(n,pi) drawn directly."""
    if params.mean <= 1.0:
        raise ParameterDomainError(f"duality check needs n p > 1, got {params.mean}")
    if size_truncation < 2:
        raise ConfigurationError(f"size truncation must be at least 2, got {size_truncation}")
    tol = resolve_tolerances(tolerances)
    solution = solve_survival(params)
    config = {"kind": "duality", "n": params.n, "p": params.p, "size_truncation": size_truncation,
              "samples": samples, "master_seed": master_seed, "tolerances": tol}
    report = ExperimentReport("duality", config)
    tasks = [("duality", {"n": params.n, "p": params.p, "bins": size_truncation, "samples": size,
                          "master_seed": master_seed, "replicate": r})
             for r, size in enumerate(_batches(samples, SAMPLE_BATCH))]
    report.records, report.timings = run_replicates(tasks, parallelism, "duality")

    conditioned = np.sum([rec["conditioned_hist"] for rec in report.records], axis=0)
    direct = np.sum([rec["direct_hist"] for rec in report.records], axis=0)
    statistic, pvalue = chi_square_two_sample(conditioned, direct)
    extinct = int(conditioned.sum())
    report.aggregates.update({
        "solution": solution.as_dict(), "extinct_fraction": extinct / samples,
        "conditioned_hist": conditioned.tolist(), "direct_hist": direct.tolist(),
        "chi_square": statistic, "p_value": pvalue,
    })
    report.verdicts.append(Verdict("duality", pvalue > Config.SIGNIFICANCE, pvalue - Config.SIGNIFICANCE,
                                   f"two-sample chi-square p = {pvalue:.4g}"))

    if params.n <= Config.ORACLE_MAX_FANOUT and size_truncation - 1 <= Config.ORACLE_MAX_TREE_SIZE:
        exact = exact_bp_size_distribution(params.n, solution.pi, size_truncation - 1)
        pmf = pmf_with_tail(exact, list(range(1, size_truncation)))
        _, p_conditioned = chi_square_gof(conditioned, pmf)
        _, p_direct = chi_square_gof(direct, pmf)
        worst = min(p_conditioned, p_direct)
        report.aggregates.update({"exact_pmf": pmf, "p_value_exact_conditioned": p_conditioned,
                                  "p_value_exact_direct": p_direct})
        report.verdicts.append(Verdict("duality-exact", worst > Config.SIGNIFICANCE, worst - Config.SIGNIFICANCE,
                                       f"goodness of fit p = {p_conditioned:.4g} (conditioned), {p_direct:.4g} (direct)"))

    total = sum(rec["direct_sum"] for rec in report.records)
    total_sq = sum(rec["direct_sumsq"] for rec in report.records)
    mean_estimate = _moment_ci(total, total_sq, samples)
    target = solution.dual_expected_size
    report.aggregates.update({"dual_mean_size": _ci_dict(mean_estimate), "dual_expected_size": target})
    report.verdicts.append(Verdict("dual-mean", mean_estimate.contains(target),
                                   mean_estimate.half_width - abs(mean_estimate.point - target),
                                   f"mean {mean_estimate.point:.4f} vs 1/(1 - n pi) = {target:.4f}"))
    return report


def _moment_ci(total: float, total_sq: float, count: int):
    """Normal-theory interval for a mean from its first two raw moments."""
    mean = total / count
    variance = max(total_sq / count - mean * mean, 0.0) * count / max(count - 1, 1)
    half = z_score(Config.CI_LEVEL) * math.sqrt(variance / count)
    return CiEstimate(point=mean, lo=mean - half, hi=mean + half, level=Config.CI_LEVEL, n_samples=count)


def run_total_size_check(params: BpParams, samples: int, master_seed: int, parallelism: int = 1) -> ExperimentReport:
    """Mean total size of a subcritical process against 1 / (1 - np)."""
    if params.mean >= 1.0:
        raise ParameterDomainError(f"total-size check needs n p < 1, got {params.mean}")
    config = {"kind": "totsize", "n": params.n, "p": params.p, "samples": samples, "master_seed": master_seed}
    report = ExperimentReport("totsize", config)
    tasks = [("totsize", {"n": params.n, "p": params.p, "samples": size, "master_seed": master_seed,
                          "replicate": r}) for r, size in enumerate(_batches(samples, SAMPLE_BATCH))]
    report.records, report.timings = run_replicates(tasks, parallelism, "totsize")
    estimate = _moment_ci(sum(r["size_sum"] for r in report.records), sum(r["size_sumsq"] for r in report.records),
                          samples)
    target = 1.0 / (1.0 - params.mean)
    report.aggregates.update({"mean_size": _ci_dict(estimate), "expected": target})
    report.verdicts.append(Verdict("totsize", estimate.contains(target),
                                   estimate.half_width - abs(estimate.point - target),
                                   f"mean {estimate.point:.4f} vs {target:.4f}"))
    return report


def run_tail_and_width_checks(params: BpParams, L: int, M: int, samples: int, master_seed: int,
                              parallelism: int = 1, tolerances: Optional[Dict[str, float]] = None) -> ExperimentReport:
    """Tail of |X| and the width/extinction bounds for X(n, p)."""
    tol = resolve_tolerances(tolerances)
    eps = params.eps
    if eps == 0.0:
        raise ConfigurationError("tail checks are undefined at n p = 1 exactly")
    if eps > 0.0:
        if eps ** 2 * L < Config.TAIL_MIN_PRODUCT:
            raise ConfigurationError(f"eps^2 L >= {Config.TAIL_MIN_PRODUCT:g} violated: eps^2 L = {eps ** 2 * L:.3f}")
        if eps * M < Config.MIN_WIDTH_PRODUCT:
            raise ConfigurationError(f"eps M >= {Config.MIN_WIDTH_PRODUCT:g} violated: eps M = {eps * M:.3f}")
    solution = solve_survival(params)
    width_cap = UNBOUNDED if solution.rho == 0.0 else M + math.ceil(Config.SURVIVAL_EXPONENT / solution.rho)
    config = {"kind": "tail", "n": params.n, "p": params.p, "L": L, "M": M, "samples": samples,
              "width_cap": width_cap, "master_seed": master_seed, "tolerances": tol}
    report = ExperimentReport("tail", config)
    tasks = [("tail", {"n": params.n, "p": params.p, "L": L, "M": M, "width_cap": width_cap, "samples": size,
                       "master_seed": master_seed, "replicate": r})
             for r, size in enumerate(_batches(samples, SAMPLE_BATCH))]
    report.records, report.timings = run_replicates(tasks, parallelism, "tail")

    def total(key):
        return sum(rec[key] for rec in report.records)

    tail = proportion_ci(total("tail"), samples, Config.CI_LEVEL)
    report.aggregates.update({"solution": solution.as_dict(), "tail": _ci_dict(tail)})
    if eps < 0.0:
        bound = 1.0 / ((1.0 - params.mean) * L)
        report.verdicts.append(Verdict("tail-markov", tail.point <= bound, bound - tail.point,
                                       f"Pr(|X| >= L) = {tail.point:.5g} vs Markov {bound:.5g}"))
        return report

    bound = tol["tail_factor"] * (2 * eps + 1.0 / (eps * L))
    report.verdicts.append(Verdict("tail-bound", tail.point <= bound, bound - tail.point,
                                   f"Pr(|X| >= L) = {tail.point:.5f} vs {bound:.5f}"))

    survived = proportion_ci(samples - total("extinct"), samples, Config.CI_LEVEL)
    report.aggregates["survival"] = _ci_dict(survived)
    report.aggregates["misclassification_bound"] = (1.0 - solution.rho) ** width_cap
    report.verdicts.append(Verdict("survival-frequency", survived.contains(solution.rho),
                                   survived.half_width - abs(survived.point - solution.rho),
                                   f"survived {survived.point:.5f} vs rho {solution.rho:.5f}"))

    wide_extinct = proportion_ci(total("wide_extinct"), samples, Config.CI_LEVEL)
    limit = tol["width_extinct_factor"] * eps
    report.aggregates["wide_and_extinct"] = _ci_dict(wide_extinct)
    report.verdicts.append(Verdict("width-extinct", wide_extinct.point <= limit, limit - wide_extinct.point,
                                   f"Pr(width >= M, extinct) = {wide_extinct.point:.3g} vs {limit:.3g}"))

    wide = total("wide")
    if wide == 0:
        logging.warning(f"exp-tail: no run reached width M={M}")
        report.degenerate += 1
        report.verdicts.append(Verdict("width-conditional", False, float("nan"), "no run reached width M"))
        return report
    conditional = proportion_ci(total("wide_extinct"), wide, Config.CI_LEVEL)
    limit = (1.0 - solution.rho) ** M + tol["width_halfwidths"] * conditional.half_width
    report.aggregates["extinct_given_wide"] = _ci_dict(conditional)
    report.verdicts.append(Verdict("width-conditional", conditional.point <= limit, limit - conditional.point,
                                   f"Pr(extinct | width >= M) = {conditional.point:.3g} vs {limit:.3g}"))
    return report


def run_survival_checks(n: int = 10 ** 6, eps_values: Sequence[float] = (0.001, 0.01, 0.05),
                        tol: Optional[float] = None, tolerances: Optional[Dict[str, float]] = None) -> ExperimentReport:
    """Closed-form fixed point and rho ~ 2 eps at fixed n."""
    tolerances = resolve_tolerances(tolerances)
    config = {"kind": "survival", "n": n, "eps_values": list(eps_values), "solver_tol": tol or Config.SOLVER_TOL,
              "tolerances": tolerances}
    report = ExperimentReport("survival", config)
    started = time.perf_counter()
    exact = solve_survival(BpParams(2, 0.75), tol)
    error = max(abs(exact.rho - 8.0 / 9.0), abs(exact.pi - 0.25))
    report.aggregates["fixed_point"] = exact.as_dict()
    report.verdicts.append(Verdict("fixed-point", error <= tolerances["fixed_point_abs"],
                                   tolerances["fixed_point_abs"] - error, f"max error {error:.3e}"))

    deviations = []
    for index, eps in enumerate(sorted(eps_values, reverse=True)):
        solution = solve_survival(BpParams(n, (1.0 + eps) / n), tol)
        ratio = solution.rho / (2 * eps)
        deviations.append(abs(ratio - 1.0))
        report.records.append({"replicate": index, "n": n, "eps": eps, "rho": solution.rho, "ratio": ratio,
                               "pi": solution.pi, "dual_mean": solution.dual_mean})
        band = tolerances["rho_ratio"]
        report.verdicts.append(Verdict("rho-2eps", abs(ratio - 1.0) <= band, band - abs(ratio - 1.0),
                                       f"eps={eps:g}: rho/2eps = {ratio:.5f}"))
    if len(deviations) >= 2:
        steps = [a - b for a, b in zip(deviations, deviations[1:])]
        report.verdicts.append(Verdict("rho-monotone", all(s > 0 for s in steps), min(steps),
                                       "deviations " + ", ".join(f"{d:.4g}" for d in deviations)))
    report.timings = [{"replicate": 0, "kind": "survival", "runtime_ms": (time.perf_counter() - started) * 1000.0}]
    return report


def run_coupling_check(params: GnpParams, k: int, samples: int, master_seed: int, parallelism: int = 1,
                       size_bins: int = 20) -> ExperimentReport:
    """Count violations of both couplings and test the branching side's marginal law."""
    if not 1 <= k < params.n:
        raise ParameterDomainError(f"k must satisfy 1 <= k < n = {params.n}, got {k}")
    config = {"kind": "couple", **params.as_dict(), "k": k, "samples": samples, "size_bins": size_bins,
              "master_seed": master_seed}
    report = ExperimentReport("couple", config)
    tasks = [("couple", {"n": params.n, "p": params.p, "k": k, "bins": size_bins, "samples": size,
                         "master_seed": master_seed, "replicate": r})
             for r, size in enumerate(_batches(samples, ROOT_BATCH * 4))]
    report.records, report.timings = run_replicates(tasks, parallelism, "couple")
    subset = sum(r["subset_violations"] for r in report.records)
    dichotomy = sum(r["dichotomy_violations"] for r in report.records)
    coupled = np.sum([r["coupled_hist"] for r in report.records], axis=0)
    free = np.sum([r["free_hist"] for r in report.records], axis=0)
    statistic, pvalue = chi_square_two_sample(coupled, free)
    report.aggregates.update({"subset_violations": subset, "dichotomy_violations": dichotomy,
                              "graph_above_bp": sum(r["graph_above_bp"] for r in report.records),
                              "marginal_chi_square": statistic, "marginal_p_value": pvalue})
    report.verdicts.append(Verdict("coupling-subset", subset == 0, -subset, f"{subset} violations"))
    report.verdicts.append(Verdict("coupling-dichotomy", dichotomy == 0, -dichotomy, f"{dichotomy} violations"))
    report.verdicts.append(Verdict("coupling-marginal", pvalue > Config.SIGNIFICANCE, pvalue - Config.SIGNIFICANCE,
                                   f"two-sample chi-square p = {pvalue:.4g}"))
    return report


def run_truncation_check(params: GnpParams, L: int, samples: int, master_seed: int, parallelism: int = 1,
                         second_cap: Optional[int] = None, size_bins: int = 20,
                         tolerances: Optional[Dict[str, float]] = None) -> ExperimentReport:
    """Boundary arithmetic, Pr(A) and the boundary-hit rate of the second exploration.

    The second exploration is capped at `second_cap` vertices (default L);
    the hit-rate bound is evaluated with the mean of the same capped sizes.
    Each batch also explores one edge-stream sample of G(n, p) and checks
    its Exhausted explorations against the union-find census.
    """
    tol = resolve_tolerances(tolerances)
    cap = boundary_cap_for(params.eps, L)
    second_cap = L if second_cap is None else second_cap
    config = {"kind": "trunc", **params.as_dict(), "L": L, "boundary_cap": cap, "second_cap": second_cap,
              "size_bins": size_bins, "samples": samples, "master_seed": master_seed, "tolerances": tol}
    report = ExperimentReport("trunc", config)
    tasks = [("trunc", {"n": params.n, "p": params.p, "L": L, "second_cap": second_cap, "bins": size_bins,
                        "samples": size, "master_seed": master_seed, "replicate": r})
             for r, size in enumerate(_batches(samples, ROOT_BATCH))]
    report.records, report.timings = run_replicates(tasks, parallelism, "trunc")

    def total(key):
        return sum(rec[key] for rec in report.records)

    boundary_max = max(rec["boundary_max"] for rec in report.records)
    short = total("boundary_short")
    arithmetic_ok = boundary_max <= cap + 1 and short == 0
    report.verdicts.append(Verdict("boundary-arithmetic", arithmetic_ok, cap + 1 - boundary_max,
                                   f"max boundary {boundary_max}, cap {cap}, short boundary stops {short}"))
    event_a = proportion_ci(total("event_a"), samples, Config.CI_LEVEL)
    limit = tol["event_a_factor"] * 2 * params.eps
    report.aggregates.update({"event_a": _ci_dict(event_a), "boundary_max": boundary_max,
                              "boundary_stops": total("boundary_stops")})
    report.verdicts.append(Verdict("event-a", event_a.point <= limit, limit - event_a.point,
                                   f"Pr(A) = {event_a.point:.5f} vs {limit:.5f}"))

    mismatches = total("census_mismatches")
    lazy = np.sum([rec["exhausted_hist"] for rec in report.records], axis=0)
    census = np.sum([rec["census_exhausted_hist"] for rec in report.records], axis=0)
    report.aggregates.update({"census_mismatches": mismatches, "exhausted_hist": lazy.tolist(),
                              "census_exhausted_hist": census.tolist()})
    report.verdicts.append(Verdict("exhausted-census", mismatches == 0, -mismatches,
                                   f"{mismatches} Exhausted explorations differ from their census component"))
    if lazy.sum() and census.sum():
        statistic, pvalue = chi_square_two_sample(lazy, census)
        report.aggregates.update({"exhausted_chi_square": statistic, "exhausted_p_value": pvalue})
        report.verdicts.append(Verdict("exhausted-law", pvalue > Config.SIGNIFICANCE, pvalue - Config.SIGNIFICANCE,
                                       f"two-sample chi-square p = {pvalue:.4g}"))
    else:
        report.degenerate += 1
        logging.warning("exp-trunc: no Exhausted exploration on one side, size laws not compared")

    runs = total("second_runs")
    if runs == 0:
        report.degenerate += 1
        logging.warning("exp-trunc: event A never held, no second exploration to measure")
        return report
    hits = proportion_ci(total("second_hits"), runs, Config.CI_LEVEL)
    mean_size = total("second_size_sum") / runs
    bound = tol["boundary_hit_factor"] * params.eps * L * mean_size / params.n
    report.aggregates.update({"boundary_hit": _ci_dict(hits), "second_mean_size": mean_size})
    report.verdicts.append(Verdict("boundary-hit", hits.point <= bound, bound - hits.point,
                                   f"Pr(flag) = {hits.point:.5f} vs {bound:.5f}"))
    return report


def run_sprinkle(plan: SprinklePlan, replicates: int, master_seed: int, parallelism: int = 1,
                 tolerances: Optional[Dict[str, float]] = None) -> ExperimentReport:
    """Two-round exposure: G(n, p0), then p1-edges between its components of size >= L."""
    tol = resolve_tolerances(tolerances)
    config = {"kind": "sprinkle", **plan.as_dict(), "replicates": replicates, "master_seed": master_seed,
              "tolerances": tol}
    report = ExperimentReport("sprinkle", config)
    error = plan.algebra_error()
    report.verdicts.append(Verdict("sprinkle-algebra", error <= 1e-15, 1e-15 - error, f"relative error {error:.3e}"))
    tasks = [("sprinkle", {"n": plan.n, "p0": plan.p0, "p1": plan.p1, "L": plan.L, "master_seed": master_seed,
                           "replicate": r}) for r in range(replicates)]
    report.records, report.timings = run_replicates(tasks, parallelism, "sprinkle")

    scale = 2.0 * plan.eps * plan.n
    useful = [rec for rec in report.records if rec["merged_fraction"] is not None]
    report.degenerate = len(report.records) - len(useful)
    if report.degenerate:
        logging.warning(f"exp-sprinkle: {report.degenerate} replicate(s) had no component of size >= {plan.L}")
    report.aggregates.update({
        "threshold": (2.0 - plan.delta) * (1.0 - plan.delta) * plan.eps * plan.n,
        "pair_miss_bound": math.exp(-plan.p1 * plan.L ** 2),
        "mean_components_large": float(np.mean([rec["components_large"] for rec in report.records])),
    })
    if not useful:
        report.verdicts.append(Verdict("sprinkle-merge", False, float("nan"), "every replicate degenerate"))
        return report
    merged = mean_ci([rec["merged_fraction"] for rec in useful], Config.CI_LEVEL)
    final = mean_ci([rec["final_l1"] / scale for rec in useful], Config.CI_LEVEL)
    report.aggregates.update({"merged_fraction": _ci_dict(merged), "final_l1_ratio": _ci_dict(final)})
    report.verdicts.append(Verdict("sprinkle-merge", merged.point >= tol["merged_fraction"],
                                   merged.point - tol["merged_fraction"], f"mean merged fraction {merged.point:.4f}"))
    report.verdicts.append(Verdict("sprinkle-l1", final.point >= tol["sprinkle_l1_floor"],
                                   final.point - tol["sprinkle_l1_floor"], f"mean final L1/2eps n {final.point:.4f}"))
    return report


def run_oracle_check(n_values: Sequence[int] = (1, 2, 3, 4, 5), p_values: Sequence[float] = (0.1, 0.5, 0.9),
                     samples: int = 10 ** 6, master_seed: int = Config.MASTER_SEED,
                     parallelism: int = 1) -> ExperimentReport:
    """Simulated L1 law on tiny graphs against exhaustive enumeration."""
    config = {"kind": "oracle", "n_values": list(n_values), "p_values": list(p_values), "samples": samples,
              "master_seed": master_seed}
    report = ExperimentReport("oracle", config)
    half = exact_l1_distribution(3, "0.5").get(3)
    report.verdicts.append(Verdict("oracle-exact", half == Fraction(1, 2), 0.0, f"Pr(L1 = 3) = {half}"))
    tasks = [("oracle", {"n": n, "p": p, "samples": size, "master_seed": master_seed, "replicate": r})
             for n in n_values for p in p_values for r, size in enumerate(_batches(samples, SAMPLE_BATCH * 10))]
    report.records, report.timings = run_replicates(tasks, parallelism, "oracle")
    for n in n_values:
        for p in p_values:
            counts = np.sum([rec["l1_counts"] for rec in report.records if rec["n"] == n and rec["p"] == p], axis=0)
            exact = exact_l1_distribution(n, p)
            pmf = [float(exact.get(s, 0)) for s in range(1, n + 1)]
            _, pvalue = chi_square_gof(counts, pmf)
            report.aggregates[f"n={n},p={p:g}"] = {"counts": counts.tolist(), "exact": pmf, "p_value": pvalue}
            report.verdicts.append(Verdict("oracle-l1", pvalue > Config.SIGNIFICANCE, pvalue - Config.SIGNIFICANCE,
                                           f"n={n}, p={p:g}: p = {pvalue:.4g}"))
    return report


# ---------------------------------------------------------------------------
# Experiment config files and kind-level dispatch
# ---------------------------------------------------------------------------

def _as_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"{text!r} is not an integer")
        return int(value)


def _int_list(text: str) -> List[int]:
    return [_as_int(part) for part in text.split(",") if part.strip()]


def _float_list(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


FILE_KEYS: Dict[str, Callable[[str], Any]] = {
    "KIND": str.strip,
    "N_VALUES": _int_list,
    "EXPONENT": float,
    "EPS": _float_list,
    "P": float,
    "P_VALUES": _float_list,
    "L_RULE": str.strip,
    "M": _as_int,
    "K": _as_int,
    "REPLICATES": _as_int,
    "SAMPLES": _as_int,
    "MASTER_SEED": _as_int,
    "PARALLELISM": _as_int,
    "SIZE_TRUNCATION": _as_int,
    "OMEGA_PRIME": float,
    "DELTA": float,
    "SANDWICH_ROOTS": _as_int,
    "WINDOW_HIGH": float,
}


def load_experiment_file(path: str) -> Dict[str, Any]:
    """Read a KEY=value experiment file into lower-case settings.

    TOL_<NAME> keys are gathered under "tolerances" with <name> lower-cased.
    """
    if not os.path.isfile(path):
        raise ConfigurationError(f"experiment config file not found: {path}")
    settings: Dict[str, Any] = {}
    tolerances: Dict[str, float] = {}
    for key, raw in dotenv_values(path).items():
        if raw is None:
            raise ConfigurationError(f"{path}: key {key} has no value")
        if not key.startswith("TOL_") and key not in FILE_KEYS:
            raise ConfigurationError(f"{path}: unknown key {key}")
        try:
            if key.startswith("TOL_"):
                tolerances[key[4:].lower()] = float(raw)
            else:
                settings[key.lower()] = FILE_KEYS[key](raw)
        except ValueError as e:
            raise ConfigurationError(f"{path}: bad value for {key}: {raw!r}") from e
    if tolerances:
        settings["tolerances"] = resolve_tolerances(tolerances)
    logging.debug(f"Loaded experiment settings from {path}: {sorted(settings)}")
    return settings


EXPERIMENT_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "l1": {"n_values": [100_000, 1_000_000, 10_000_000], "exponent": 0.2, "l_rule": "sqrt", "replicates": 20,
           "sandwich_roots": 2000},
    "lower": {"n_values": [1_000_000], "eps": [0.05], "l_rule": "fixed:10000", "replicates": 10_000},
    "duality": {"n_values": [2], "p": 0.75, "size_truncation": 11, "samples": 1_000_000},
    "sprinkle": {"n_values": [1_000_000], "exponent": 0.2, "replicates": 20},
    "tail": {"n_values": [100_000], "eps": [0.05], "l_rule": "fixed:40000", "m": 1000, "samples": 1_000_000},
    "survival": {"n_values": [1_000_000], "eps": [0.05, 0.01, 0.001]},
    "totsize": {"n_values": [50], "p": 0.01, "samples": 1_000_000},
    "couple": {"n_values": [1000], "eps": [0.2], "k": 50, "samples": 100_000},
    "trunc": {"n_values": [1_000_000], "eps": [0.02], "l_rule": "fixed:100000", "samples": 10_000},
    "oracle": {"n_values": [1, 2, 3, 4, 5], "p_values": [0.1, 0.5, 0.9], "samples": 1_000_000},
}


def resolve_settings(kind: str, settings: Dict[str, Any]) -> Dict[str, Any]:
    """Defaults for `kind`, then `settings` on top; None values are ignored."""
    if kind not in EXPERIMENT_DEFAULTS:
        raise ConfigurationError(f"unknown experiment kind {kind!r}; known: {', '.join(EXPERIMENT_DEFAULTS)}")
    given = {key: value for key, value in settings.items() if value is not None}
    if given.get("kind", kind) != kind:
        raise ConfigurationError(f"config file is for kind {given['kind']!r}, not {kind!r}")
    resolved = {"master_seed": Config.MASTER_SEED, "parallelism": Config.PARALLELISM,
                "tolerances": resolve_tolerances(), **EXPERIMENT_DEFAULTS[kind]}
    # p, eps and exponent are alternative ways to set the edge probability
    if given.keys() & {"p", "eps", "exponent"}:
        for key in ("p", "eps", "exponent"):
            resolved.pop(key, None)
    resolved.update(given)
    resolved["kind"] = kind
    return resolved


def _single_n(settings: Dict[str, Any]) -> int:
    n_values = settings["n_values"]
    if len(n_values) != 1:
        raise ConfigurationError(f"{settings['kind']} takes exactly one n, got {n_values}")
    return n_values[0]


def _edge_probability(settings: Dict[str, Any], n: int) -> float:
    if settings.get("p") is not None:
        return settings["p"]
    if settings.get("eps"):
        eps = settings["eps"]
        if len(eps) != 1:
            raise ConfigurationError(f"{settings['kind']} takes exactly one eps, got {eps}")
        return (1.0 + eps[0]) / n
    if settings.get("exponent") is not None:
        return (1.0 + n ** -settings["exponent"]) / n
    raise ConfigurationError(f"{settings['kind']} needs one of p, eps or exponent")


def _window_length(settings: Dict[str, Any], n: int, eps: float) -> int:
    rule = LRule.parse(settings["l_rule"])
    if rule.kind != "fixed" and eps <= 0.0:
        raise ConfigurationError(f"L rule {rule} needs eps > 0, got {eps:.4g}; use fixed:<L>")
    return rule.resolve(n, eps, Config.WINDOW_LOW, Config.WINDOW_HIGH)


def run_experiment(kind: str, settings: Dict[str, Any]) -> ExperimentReport:
    """Resolve settings for `kind` and run the matching experiment."""
    s = resolve_settings(kind, settings)
    seed, workers, tol = s["master_seed"], s["parallelism"], s["tolerances"]
    logging.info(f"Running experiment {kind} with master seed {seed} on {workers} worker(s)")

    if kind == "l1":
        schedule = EpsSchedule(s["exponent"], tuple(s["n_values"]))
        return run_l1_experiment(schedule, LRule.parse(s["l_rule"]), s["replicates"], seed, workers, tol,
                                 sandwich_roots=s["sandwich_roots"])
    if kind == "survival":
        return run_survival_checks(_single_n(s), s["eps"], tolerances=tol)
    if kind == "oracle":
        return run_oracle_check(s["n_values"], s["p_values"], s["samples"], seed, workers)

    n = _single_n(s)
    p = _edge_probability(s, n)
    if kind == "duality":
        return run_duality_check(BpParams(n, p), s["size_truncation"], s["samples"], seed, workers, tol)
    if kind == "totsize":
        return run_total_size_check(BpParams(n, p), s["samples"], seed, workers)
    if kind == "sprinkle":
        plan = SprinklePlan.build(n, p, s.get("omega_prime"), s.get("delta"))
        return run_sprinkle(plan, s["replicates"], seed, workers, tol)
    if kind == "couple":
        return run_coupling_check(GnpParams(n, p), s["k"], s["samples"], seed, workers)

    eps = n * p - 1.0
    L = _window_length(s, n, eps)
    if kind == "lower":
        return run_lower_bound_check(GnpParams(n, p), L, s["replicates"], seed, workers, tol, s.get("window_high"))
    if kind == "tail":
        return run_tail_and_width_checks(BpParams(n, p), L, s["m"], s["samples"], seed, workers, tol)
    return run_truncation_check(GnpParams(n, p), L, s["samples"], seed, workers, tolerances=tol)
