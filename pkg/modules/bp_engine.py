"""Binomial Galton-Watson process X(n, p): survival, duality, total size and width."""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from config import Config
from modules.errors import ParameterDomainError, PreconditionError
from modules.rng_stats import sample_binomial

UNBOUNDED = 2 ** 62


@dataclass(frozen=True)
class BpParams:
    """Offspring law Bi(n, p); pgf (1 - p(1 - x))^n."""
    n: int
    p: float
    mean: float = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ParameterDomainError(f"fan-out n must be positive, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterDomainError(f"p must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "mean", self.n * self.p)

    @property
    def eps(self) -> float:
        return self.mean - 1.0


@dataclass(frozen=True)
class SurvivalSolution:
    rho: float
    pi: float
    dual_mean: float
    dual_expected_size: float  # inf when the dual mean is not below 1
    residual: float = 0.0
    iterations: int = 0

    def as_dict(self) -> dict:
        return {
            "rho": self.rho,
            "pi": self.pi,
            "dual_mean": self.dual_mean,
            "dual_expected_size": self.dual_expected_size,
            "residual": self.residual,
            "iterations": self.iterations,
        }


class BpStatus(str, Enum):
    EXTINCT = "Extinct"
    CENSORED_SIZE = "CensoredSize"
    CENSORED_WIDTH = "CensoredWidth"


@dataclass(frozen=True)
class BpOutcome:
    status: BpStatus
    total_size: int
    width: int
    generations: int

    @property
    def extinct(self) -> bool:
        return self.status is BpStatus.EXTINCT

    def as_dict(self) -> dict:
        return {
            "status": self.status.value,
            "total_size": self.total_size,
            "width": self.width,
            "generations": self.generations,
        }


class SurvivalLabel(str, Enum):
    SURVIVED = "Survived"
    DIED = "Died"


@dataclass(frozen=True)
class SurvivalClassification:
    label: SurvivalLabel
    misclassification_bound: float


def _fixed_point_gap(params: BpParams, rho: float) -> float:
    # g(rho) = 1 - rho - (1 - p rho)^n, with (1 - p rho)^n = exp(n log1p(-p rho))
    if params.p * rho >= 1.0:
        return 1.0 - rho
    return -math.expm1(params.n * math.log1p(-params.p * rho)) - rho


def dual_parameter(p: float, rho: float) -> float:
    if rho == 0.0:
        return p
    if rho >= 1.0:
        # extinction is impossible; the dual is the lone root
        return 0.0
    return p * (1.0 - rho) / (1.0 - p * rho)


def expected_total_size_subcritical(mean: float) -> float:
    """1 + m + m^2 + ... = 1 / (1 - m) for offspring mean m < 1."""
    if mean < 0.0:
        raise ParameterDomainError(f"offspring mean must be non-negative, got {mean}")
    if mean >= 1.0:
        raise ParameterDomainError(f"expected total size diverges for offspring mean {mean} >= 1")
    return 1.0 / (1.0 - mean)


def _solution_from_rho(params: BpParams, rho: float, residual: float, iterations: int) -> SurvivalSolution:
    pi = dual_parameter(params.p, rho)
    dual_mean = params.n * pi
    dual_size = expected_total_size_subcritical(dual_mean) if dual_mean < 1.0 else math.inf
    return SurvivalSolution(rho=rho, pi=pi, dual_mean=dual_mean, dual_expected_size=dual_size,
                            residual=residual, iterations=iterations)


def solve_survival(params: BpParams, tol: Optional[float] = None) -> SurvivalSolution:
    """Survival probability by bisection on g(rho) = 1 - rho - (1 - p rho)^n over (0, 1].

    For n p > 1, g > 0 strictly between 0 and the root and g < 0 above it, so
    the sign of g at the midpoint decides the half. Bisection stops once the
    bracket is narrower than tol and the residual |g| is within tol.
    """
    tol = Config.SOLVER_TOL if tol is None else tol
    if tol <= 0.0:
        raise ParameterDomainError(f"solver tolerance must be positive, got {tol}")

    if params.mean <= 1.0:
        return _solution_from_rho(params, 0.0, 0.0, 0)
    if params.p == 1.0:
        return _solution_from_rho(params, 1.0, 0.0, 0)

    lo, hi = 0.0, 1.0
    iterations = 0
    rho = 1.0
    while iterations < Config.SOLVER_MAX_ITER:
        mid = (lo + hi) / 2.0
        if not lo < mid < hi:
            # bracket is down to adjacent floats
            break
        iterations += 1
        if _fixed_point_gap(params, mid) > 0.0:
            lo = mid
        else:
            hi = mid
        rho = (lo + hi) / 2.0
        if hi - lo <= tol and abs(_fixed_point_gap(params, rho)) <= tol:
            break

    residual = abs(_fixed_point_gap(params, rho))
    if residual > tol:
        logging.warning(f"Survival solver residual {residual:.3e} exceeds tol {tol:.1e} for n={params.n}, p={params.p}")
    logging.debug(f"solve_survival n={params.n} p={params.p}: rho={rho:.15g} after {iterations} bisections")
    return _solution_from_rho(params, rho, residual, iterations)


def default_caps(solution: SurvivalSolution, exponent: Optional[float] = None) -> Tuple[int, int]:
    """(size_cap, width_cap) = (ceil(k / rho^2), ceil(k / rho)); unbounded when rho = 0."""
    exponent = Config.SURVIVAL_EXPONENT if exponent is None else exponent
    if solution.rho <= 0.0:
        return UNBOUNDED, UNBOUNDED
    return math.ceil(exponent / solution.rho ** 2), math.ceil(exponent / solution.rho)


def simulate_bp(params: BpParams, size_cap: int, width_cap: int, rng: np.random.Generator) -> BpOutcome:
    """Grow X(n, p) generation by generation until extinction or a cap is met.

    The children of a generation of g vertices are the sum of g independent
    Bi(n, p) variates, drawn as one Bi(g n, p) variate. Only the frontier size
    and running totals are kept.
    """
    if size_cap < 1 or width_cap < 1:
        raise ParameterDomainError(f"caps must be positive, got size_cap={size_cap}, width_cap={width_cap}")

    frontier = 1
    total = 1
    width = 1
    generations = 0
    while True:
        children = sample_binomial(frontier * params.n, params.p, rng)
        if children == 0:
            return BpOutcome(BpStatus.EXTINCT, total, width, generations)
        generations += 1
        total += children
        width = max(width, children)
        if total >= size_cap:
            return BpOutcome(BpStatus.CENSORED_SIZE, total, width, generations)
        if children >= width_cap:
            return BpOutcome(BpStatus.CENSORED_WIDTH, total, width, generations)
        frontier = children


def misclassification_bound(solution: SurvivalSolution, size_cap: Optional[int], width_cap: Optional[int]) -> float:
    """Upper bound on Pr(a censored run would have died out).

    A generation of at least W vertices dies out with probability at most
    (1 - rho)^W. A run censored at size S is bounded through Markov's
    inequality on the dual: (1 - rho) E|X(n, pi)| / S.
    """
    bounds = [1.0]
    if width_cap is not None and width_cap < UNBOUNDED:
        bounds.append((1.0 - solution.rho) ** width_cap)
    if size_cap is not None and size_cap < UNBOUNDED and math.isfinite(solution.dual_expected_size):
        bounds.append((1.0 - solution.rho) * solution.dual_expected_size / size_cap)
    return min(bounds)


def classify_survival(outcome: BpOutcome, solution: SurvivalSolution, width_cap: int,
                      size_cap: Optional[int] = None, exponent: Optional[float] = None) -> SurvivalClassification:
    """Map a run to Survived/Died, refusing caps too small for an e^-exponent error."""
    exponent = Config.SURVIVAL_EXPONENT if exponent is None else exponent
    bound = misclassification_bound(solution, size_cap, width_cap)
    if bound > math.exp(-exponent):
        minimum = math.ceil(exponent / solution.rho) if solution.rho > 0.0 else UNBOUNDED
        raise PreconditionError(
            f"caps too small for misclassification bound e^-{exponent:g}: "
            f"width_cap={width_cap} gives {bound:.3e}; minimum width_cap is {minimum}"
        )
    if outcome.extinct:
        return SurvivalClassification(SurvivalLabel.DIED, 0.0)
    return SurvivalClassification(SurvivalLabel.SURVIVED, bound)


def sample_dual_direct(params: BpParams, solution: SurvivalSolution, size_cap: int, width_cap: int,
                       rng: np.random.Generator) -> BpOutcome:
    """Draw X(n, pi), which is X(n, p) conditioned on dying out."""
    if params.mean <= 1.0:
        raise ParameterDomainError(f"the dual is only defined for supercritical input, got n p = {params.mean}")
    return simulate_bp(BpParams(params.n, solution.pi), size_cap, width_cap, rng)
