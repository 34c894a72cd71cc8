"""Seeded substreams and the small set of estimators the experiments share.

Every random draw in the lab comes from a substream named by
(master_seed, replicate_index, stream_label). Substreams are numpy
Generators over the counter-based Philox bit generator, keyed through a
SeedSequence, so any substream can be rebuilt without touching the others.
"""
import hashlib
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import stats

from modules.errors import ParameterDomainError

MAX_SEED = 2 ** 64


def _label_key(stream_label: str) -> int:
    digest = hashlib.sha256(stream_label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replicate_index: int
    stream_label: str

    def __post_init__(self):
        if not 0 <= self.master_seed < MAX_SEED:
            raise ParameterDomainError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.replicate_index < 0:
            raise ParameterDomainError(f"replicate_index must be non-negative, got {self.replicate_index}")
        if not self.stream_label:
            raise ParameterDomainError("stream_label must be a non-empty string")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.replicate_index, _label_key(self.stream_label)),
        )

    def generator(self) -> np.random.Generator:
        """A fresh Generator positioned at the start of this substream."""
        return np.random.Generator(np.random.Philox(self.seed_sequence()))


def substream(master_seed: int, replicate_index: int, stream_label: str) -> np.random.Generator:
    return SeedSpec(master_seed, replicate_index, stream_label).generator()


def replicate_seed(master_seed: int, replicate_index: int, stream_label: str) -> int:
    """A 64-bit integer identifying a substream, for echoing in records."""
    state = SeedSpec(master_seed, replicate_index, stream_label).seed_sequence().generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def sample_binomial(trials: int, prob: float, rng: np.random.Generator) -> int:
    """Exact Bi(trials, prob) draw.

    numpy uses inversion when trials*prob is small and the BTPE rejection
    sampler otherwise; both are exact in distribution.
    """
    if trials < 0:
        raise ParameterDomainError(f"trials must be non-negative, got {trials}")
    if not 0.0 <= prob <= 1.0:
        raise ParameterDomainError(f"prob must lie in [0, 1], got {prob}")
    if trials == 0 or prob == 0.0:
        return 0
    if prob == 1.0:
        return trials
    return int(rng.binomial(trials, prob))


def _check_skip_prob(prob: float):
    if not 0.0 < prob <= 1.0:
        raise ParameterDomainError(f"geometric skip needs prob in (0, 1], got {prob}")


def sample_geometric_skip(prob: float, rng: np.random.Generator) -> int:
    """Index of the first success in i.i.d. Bernoulli(prob) trials (1-based)."""
    _check_skip_prob(prob)
    if prob == 1.0:
        return 1
    # 1 - U lies in (0, 1], so the logarithm is finite
    u = 1.0 - rng.random()
    return int(math.floor(math.log(u) / math.log1p(-prob))) + 1


def geometric_skips(prob: float, size: int, rng: np.random.Generator, cap: int = 2 ** 62) -> np.ndarray:
    """Vectorised sample_geometric_skip; values are clipped at `cap`."""
    _check_skip_prob(prob)
    if prob == 1.0:
        return np.ones(size, dtype=np.int64)
    u = 1.0 - rng.random(size)
    skips = np.floor(np.log(u) / math.log1p(-prob)) + 1.0
    return np.minimum(skips, float(cap)).astype(np.int64)


@dataclass(frozen=True)
class CiEstimate:
    point: float
    lo: float
    hi: float
    level: float
    n_samples: int

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2.0

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def as_dict(self) -> dict:
        return {
            "point": self.point,
            "lo": self.lo,
            "hi": self.hi,
            "level": self.level,
            "n_samples": self.n_samples,
        }


def z_score(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ParameterDomainError(f"confidence level must lie in (0, 1), got {level}")
    return float(stats.norm.ppf(0.5 + level / 2.0))


def proportion_ci(successes: int, trials: int, level: float = 0.95) -> CiEstimate:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ParameterDomainError(f"trials must be positive, got {trials}")
    if not 0 <= successes <= trials:
        raise ParameterDomainError(f"successes must lie in [0, {trials}], got {successes}")
    z = z_score(level)
    z2 = z * z
    point = successes / trials
    denom = trials + z2
    center = (successes + z2 / 2.0) / denom
    half = (z / denom) * math.sqrt(successes * (trials - successes) / trials + z2 / 4.0)
    lo = 0.0 if successes == 0 else max(0.0, min(point, center - half))
    hi = 1.0 if successes == trials else min(1.0, max(point, center + half))
    return CiEstimate(point=point, lo=lo, hi=hi, level=level, n_samples=trials)


def mean_ci(values: Sequence[float], level: float = 0.95) -> CiEstimate:
    """Student-t interval for a sample mean; degenerate for a single value."""
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise ParameterDomainError("mean_ci needs at least one value")
    point = float(data.mean())
    if data.size == 1:
        return CiEstimate(point=point, lo=point, hi=point, level=level, n_samples=1)
    z_score(level)
    half = float(stats.t.ppf(0.5 + level / 2.0, data.size - 1) * data.std(ddof=1) / math.sqrt(data.size))
    return CiEstimate(point=point, lo=point - half, hi=point + half, level=level, n_samples=int(data.size))


def _group_bins(weights: Sequence[float], minimum: float) -> List[List[int]]:
    """Greedy left-to-right grouping of adjacent bins until each group reaches `minimum`."""
    groups: List[List[int]] = []
    current: List[int] = []
    total = 0.0
    for index, weight in enumerate(weights):
        current.append(index)
        total += weight
        if total >= minimum:
            groups.append(current)
            current, total = [], 0.0
    if current:
        if groups:
            groups[-1].extend(current)
        else:
            groups.append(current)
    return groups


def chi_square_gof(observed: Sequence[int], probabilities: Sequence[float]) -> Tuple[float, float]:
    """Goodness of fit of observed counts against a fully specified pmf.

    Adjacent cells are pooled until each expects at least 5 observations.
    Returns (statistic, p-value).
    """
    obs = np.asarray(observed, dtype=float)
    probs = np.asarray(probabilities, dtype=float)
    if obs.shape != probs.shape:
        raise ParameterDomainError("observed and probabilities must have the same length")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ParameterDomainError(f"probabilities must be a pmf, sum is {probs.sum()}")
    expected = probs * obs.sum()
    groups = _group_bins(expected, 5.0)
    if len(groups) < 2:
        logging.debug("chi_square_gof: fewer than two pooled cells, returning p=1")
        return 0.0, 1.0
    obs_g = np.array([obs[g].sum() for g in groups])
    exp_g = np.array([expected[g].sum() for g in groups])
    result = stats.chisquare(obs_g, exp_g)
    return float(result.statistic), float(result.pvalue)


def chi_square_two_sample(counts_a: Sequence[int], counts_b: Sequence[int]) -> Tuple[float, float]:
    """Homogeneity test of two histograms over the same bins."""
    a = np.asarray(counts_a, dtype=float)
    b = np.asarray(counts_b, dtype=float)
    if a.shape != b.shape:
        raise ParameterDomainError("histograms must have the same bins")
    if a.sum() == 0 or b.sum() == 0:
        raise ParameterDomainError("both histograms need at least one observation")
    groups = _group_bins(a + b, 10.0)
    if len(groups) < 2:
        return 0.0, 1.0
    table = np.array([[a[g].sum() for g in groups], [b[g].sum() for g in groups]])
    statistic, pvalue, _, _ = stats.chi2_contingency(table, correction=False)
    return float(statistic), float(pvalue)
