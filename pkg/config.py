import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

class Config:
    """Configuration class for the giant-component lab."""

    # Output settings - LAB_OUTPUT_DIR overrides where experiment files land
    OUTPUT_DIR = os.getenv("LAB_OUTPUT_DIR", "results")
    SHOW_PROGRESS = os.getenv("SHOW_PROGRESS", "FALSE").upper() == "TRUE"
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

    # Reproducibility
    MASTER_SEED = int(os.getenv("MASTER_SEED", 20120724))
    PARALLELISM = int(os.getenv("PARALLELISM", 1))

    # Branching-process solver and censoring
    SOLVER_TOL = float(os.getenv("SOLVER_TOL", 1e-12))
    SOLVER_MAX_ITER = int(os.getenv("SOLVER_MAX_ITER", 200))
    SURVIVAL_EXPONENT = float(os.getenv("SURVIVAL_EXPONENT", 20.0))

    # Regime gates: eps^3 n >= floor, eps^2 L >= WINDOW_LOW, L <= eps n / WINDOW_HIGH
    CRITICALITY_FLOOR = float(os.getenv("CRITICALITY_FLOOR", 30.0))
    WINDOW_LOW = float(os.getenv("WINDOW_LOW", 5.0))
    WINDOW_HIGH = float(os.getenv("WINDOW_HIGH", 5.0))
    MIN_WIDTH_PRODUCT = float(os.getenv("MIN_WIDTH_PRODUCT", 50.0))
    TAIL_MIN_PRODUCT = float(os.getenv("TAIL_MIN_PRODUCT", 30.0))

    # Sprinkling
    OMEGA_PRIME = float(os.getenv("OMEGA_PRIME", 3.0))
    SPRINKLE_DELTA = float(os.getenv("SPRINKLE_DELTA", 0.1))

    # Statistical levels
    CI_LEVEL = float(os.getenv("CI_LEVEL", 0.99))
    SIGNIFICANCE = float(os.getenv("SIGNIFICANCE", 0.01))

    # Acceptance bands, fixed a priori; any of them can be overridden per run
    # with a TOL_<NAME> key in an experiment config file.
    TOLERANCES = {
        "rho_ratio": 0.1,             # |rho / 2eps - 1|
        "fixed_point_abs": 1e-10,     # closed-form solver oracle
        "tail_factor": 1.2,           # Pr(|X| >= L) <= f (2eps + 1/(eps L))
        "width_extinct_factor": 0.2,  # Pr(width >= M, extinct) <= f eps
        "width_halfwidths": 3.0,      # (1-rho)^M + k Wilson half-widths
        "event_a_factor": 1.3,        # Pr(A) <= f 2eps
        "boundary_hit_factor": 3.0,   # Pr(flag) <= f eps L E|C'_w| / n
        "lower_bound_low": 1.7,       # Pr(|C_v| >= L) >= 1.7 eps
        "lower_bound_high": 2.3,      # Pr(|C_v| >= L) <= 2.3 eps
        "l1_band": 0.15,              # |mean L1 / 2eps n - 1| below 10^7
        "l1_band_large": 0.10,        # same, from 10^7 vertices on
        "l1_band_from_n": 1000000,    # smallest n that gets a band verdict
        "merged_fraction": 0.95,
        "sprinkle_l1_floor": 0.81,    # final L1 >= f 2eps n
        "sandwich_halfwidths": 3.0,
    }

    # Subcommands whose outputs carry acceptance verdicts
    EXPERIMENT_KINDS = [
        "l1", "lower", "duality", "sprinkle", "tail",
        "survival", "totsize", "couple", "trunc", "oracle",
    ]

    # Brute-force oracle limits
    ORACLE_MAX_VERTICES = 5
    ORACLE_MAX_FANOUT = 3
    ORACLE_MAX_TREE_SIZE = 12
