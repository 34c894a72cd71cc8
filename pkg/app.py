import logging
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import click

from config import Config
from modules import report_writer
from modules.bp_engine import (BpParams, SurvivalLabel, classify_survival, default_caps, misclassification_bound,
                               simulate_bp, solve_survival)
from modules.coupling import coupled_explore, coupled_explore_lower, truncated_explore
from modules.errors import ConfigurationError, LabError, PreconditionError
from modules.experiments import load_experiment_file, run_experiment
from modules.gnp_graph import (GnpParams, component_census, count_large, lazy_component_census,
                               sample_gnp_edges, write_edge_list)
from modules.oracles import exact_bp_size_distribution, exact_l1_distribution
from modules.rng_stats import replicate_seed, substream

# Setup logging; stderr only, stdout carries results
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)


@dataclass
class CliConfig:
    """One resolved command line."""
    subcommand: str
    params: Dict[str, Any] = field(default_factory=dict)
    output: Optional[str] = None
    fmt: str = "json"
    master_seed: Optional[int] = None
    parallelism: Optional[int] = None
    config_file: Optional[str] = None

    @property
    def seed(self) -> int:
        return Config.MASTER_SEED if self.master_seed is None else self.master_seed


# ============================================================================
# OUTPUT HELPERS
# ============================================================================

def _flat_rows(payload: Dict[str, Any], prefix: str = "") -> List[Dict[str, Any]]:
    rows = []
    for key, value in sorted(payload.items()):
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(_flat_rows(value, f"{name}."))
        else:
            rows.append({"section": "result", "key": name, "value": value})
    return rows


def _emit(config: CliConfig, resolved: Dict[str, Any], payload: Dict[str, Any]):
    """Print (or atomically write) a single-shot result with its config header."""
    header = report_writer.make_header({"subcommand": config.subcommand, **resolved})
    if config.fmt == "csv":
        text = report_writer.csv_text(header, _flat_rows(payload))
    else:
        text = report_writer.dumps({"header": header, **payload}, indent=2) + "\n"
    if config.output:
        report_writer.atomic_write_text(config.output, text)
        logging.info(f"{config.subcommand}: result written to {config.output}")
    else:
        click.echo(text, nl=False)


# ============================================================================
# SINGLE-SHOT COMMANDS
# ============================================================================

def _solve_rho(config: CliConfig) -> int:
    params = BpParams(config.params["n"], config.params["p"])
    solution = solve_survival(params, config.params.get("tol"))
    size_cap, width_cap = default_caps(solution)
    payload = {**solution.as_dict(), "size_cap": size_cap, "width_cap": width_cap}
    _emit(config, {"n": params.n, "p": params.p, "tol": config.params.get("tol") or Config.SOLVER_TOL}, payload)
    return 0


def _simulate_bp(config: CliConfig) -> int:
    params = BpParams(config.params["n"], config.params["p"])
    solution = solve_survival(params)
    size_cap, width_cap = default_caps(solution)
    size_cap = config.params.get("size_cap") or size_cap
    width_cap = config.params.get("width_cap") or width_cap
    replicate = config.params.get("replicate", 0)
    outcome = simulate_bp(params, size_cap, width_cap, substream(config.seed, replicate, "bp"))
    payload = {"outcome": outcome.as_dict(), "solution": solution.as_dict(),
               "seed": replicate_seed(config.seed, replicate, "bp")}
    try:
        if solution.rho == 0.0 and outcome.extinct:
            payload["classification"] = {"label": SurvivalLabel.DIED.value, "misclassification_bound": 0.0}
        else:
            verdict = classify_survival(outcome, solution, width_cap, size_cap)
            payload["classification"] = {"label": verdict.label.value,
                                         "misclassification_bound": verdict.misclassification_bound}
    except PreconditionError as e:
        logging.warning(f"simulate-bp: run left unclassified: {e}")
        payload["classification"] = {"label": None,
                                     "misclassification_bound": misclassification_bound(solution, size_cap, width_cap)}
    resolved = {"n": params.n, "p": params.p, "size_cap": size_cap, "width_cap": width_cap,
                "replicate": replicate, "master_seed": config.seed}
    _emit(config, resolved, payload)
    return 0


def _census(config: CliConfig) -> int:
    params = GnpParams(config.params["n"], config.params["p"])
    replicate = config.params.get("replicate", 0)
    rng = substream(config.seed, replicate, "gnp")
    export = config.params.get("export_edges")
    if config.params.get("lazy"):
        if export:
            raise ConfigurationError("--export-edges needs the edge-stream census, drop --lazy")
        census = lazy_component_census(params, rng)
    else:
        batches = list(sample_gnp_edges(params, rng))
        census = component_census(params.n, batches)
        if export:
            write_edge_list(export, params.n, batches)
    payload = {**census.as_dict(), "sizes": ",".join(str(s) for s in census.sizes),
               "seed": replicate_seed(config.seed, replicate, "gnp")}
    if config.params.get("L"):
        payload["n_large"] = count_large(census, config.params["L"])
    resolved = {**params.as_dict(), "replicate": replicate, "master_seed": config.seed,
                "lazy": bool(config.params.get("lazy")), "L": config.params.get("L")}
    _emit(config, resolved, payload)
    return 0


def _couple(config: CliConfig) -> int:
    params = GnpParams(config.params["n"], config.params["p"])
    v = config.params.get("v", 0)
    if not 0 <= v < params.n:
        raise ConfigurationError(f"--v must lie in [0, {params.n}), got {v}")
    replicate = config.params.get("replicate", 0)
    rng = substream(config.seed, replicate, "couple")
    payload = {"upper": coupled_explore(params, v, rng).as_dict()}
    k = config.params.get("k")
    if k is not None:
        payload["lower"] = coupled_explore_lower(params, v, k, rng).as_dict()
    resolved = {**params.as_dict(), "v": v, "k": k, "replicate": replicate, "master_seed": config.seed}
    _emit(config, resolved, payload)
    return 0


def _explore_trunc(config: CliConfig) -> int:
    params = GnpParams(config.params["n"], config.params["p"])
    v = config.params.get("v", 0)
    if not 0 <= v < params.n:
        raise ConfigurationError(f"--v must lie in [0, {params.n}), got {v}")
    replicate = config.params.get("replicate", 0)
    state = truncated_explore(params, v, config.params["L"], substream(config.seed, replicate, "trunc"))
    resolved = {**params.as_dict(), "v": v, "L": config.params["L"], "replicate": replicate,
                "master_seed": config.seed}
    _emit(config, resolved, {**state.as_dict(), "event_a": state.event_a})
    return 0


def _fractions(distribution) -> Dict[str, Any]:
    return {str(size): {"exact": str(prob), "float": float(prob)} for size, prob in distribution.items()}


def _oracle_enum(config: CliConfig) -> int:
    p = config.params["p"]
    if config.params.get("fanout") is not None:
        fanout = config.params["fanout"]
        max_size = config.params.get("max_size") or Config.ORACLE_MAX_TREE_SIZE
        distribution = exact_bp_size_distribution(fanout, p, max_size)
        resolved = {"fanout": fanout, "p": p, "max_size": max_size}
        payload = {"bp_size": _fractions(distribution)}
    else:
        n = config.params.get("n")
        if n is None:
            raise ConfigurationError("oracle-enum needs --n (graph) or --fanout (branching process)")
        resolved = {"n": n, "p": p}
        payload = {"l1": _fractions(exact_l1_distribution(n, p))}
    _emit(config, resolved, payload)
    return 0


# ============================================================================
# EXPERIMENT COMMANDS
# ============================================================================

def _experiment(kind: str) -> Callable[[CliConfig], int]:
    def handler(config: CliConfig) -> int:
        settings = load_experiment_file(config.config_file) if config.config_file else {}
        settings.update({key: value for key, value in config.params.items() if value is not None})
        # flags win over the file; the file wins over Config
        if config.master_seed is not None:
            settings["master_seed"] = config.master_seed
        if config.parallelism is not None:
            settings["parallelism"] = config.parallelism
        report = run_experiment(kind, settings)

        header = report_writer.make_header(report.config)
        output_dir = config.output or Config.OUTPUT_DIR
        summary = report.summary()
        report_writer.write_experiment(output_dir, kind, header, report.records, summary, report.timings)
        if config.fmt == "csv":
            click.echo(report_writer.csv_text(header, report_writer.summary_rows(summary)), nl=False)
        else:
            click.echo(report_writer.dumps({"header": header, **summary}, indent=2))
        for verdict in report.verdicts:
            log = logging.info if verdict.passed else logging.warning
            log(f"{kind}: {verdict.criterion} {'pass' if verdict.passed else 'FAIL'} ({verdict.detail})")
        return 0 if report.passed else 1
    return handler


COMMANDS: Dict[str, Callable[[CliConfig], int]] = {
    "solve-rho": _solve_rho,
    "simulate-bp": _simulate_bp,
    "census": _census,
    "couple": _couple,
    "explore-trunc": _explore_trunc,
    "oracle-enum": _oracle_enum,
    "exp-l1": _experiment("l1"),
    "exp-lower": _experiment("lower"),
    "exp-duality": _experiment("duality"),
    "exp-sprinkle": _experiment("sprinkle"),
    "exp-tail": _experiment("tail"),
    "exp-survival": _experiment("survival"),
    "exp-totsize": _experiment("totsize"),
    "exp-couple": _experiment("couple"),
    "exp-trunc": _experiment("trunc"),
    "exp-oracle": _experiment("oracle"),
}


def dispatch(config: CliConfig) -> int:
    """Run one command: 0 on success, 1 on a failing verdict, 2 on bad configuration."""
    handler = COMMANDS.get(config.subcommand)
    if handler is None:
        click.echo(f"error: unknown subcommand {config.subcommand}", err=True)
        return 2
    try:
        return handler(config)
    except LabError as e:
        logging.error(f"{config.subcommand}: {e}")
        click.echo(f"error: {e}", err=True)
        return 2
    except Exception as e:
        logging.error(f"{config.subcommand}: unexpected failure: {str(e)}", exc_info=True)
        click.echo(f"error: {e}", err=True)
        return 2


# ============================================================================
# CLICK SURFACE
# ============================================================================

PROBABILITY = click.FloatRange(0.0, 1.0)
POSITIVE = click.IntRange(min=1)
NON_NEGATIVE = click.IntRange(min=0)


def _seed_option(default: Optional[int]):
    # experiments default to None so a MASTER_SEED in --config is not overridden
    return click.option("--seed", "master_seed", type=click.IntRange(0, 2 ** 64 - 1), default=default,
                        show_default=default is not None, help="Master seed for every substream.")


OUTPUT = click.option("--output", type=click.Path(dir_okay=True), default=None,
                      help="Result file (single-shot) or output directory (experiments).")
FORMAT = click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)

common_options = [_seed_option(Config.MASTER_SEED), OUTPUT, FORMAT]

experiment_options = [
    _seed_option(None),
    OUTPUT,
    FORMAT,
    click.option("--config", "config_file", type=click.Path(), default=None, help="KEY=value experiment file."),
    click.option("--parallelism", type=POSITIVE, default=None, help="Worker processes; overrides the file."),
]


def with_options(options):
    def decorate(f):
        for option in reversed(options):
            f = option(f)
        return f
    return decorate


def _run(subcommand: str, master_seed: Optional[int], output: Optional[str], fmt: str,
         parallelism: Optional[int] = None, config_file: Optional[str] = None, **params):
    config = CliConfig(subcommand, params, output, fmt, master_seed, parallelism, config_file)
    sys.exit(dispatch(config))


@click.group()
def cli():
    """Branching-process lab for the G(n, p) giant component."""


@cli.command("solve-rho")
@click.option("--n", type=POSITIVE, required=True)
@click.option("--p", type=PROBABILITY, required=True)
@click.option("--tol", type=click.FloatRange(min=0.0, min_open=True), default=None)
@with_options(common_options)
def solve_rho_cmd(**kwargs):
    """Survival probability rho of X(n, p) and the dual parameter pi."""
    _run("solve-rho", **kwargs)


@cli.command("simulate-bp")
@click.option("--n", type=POSITIVE, required=True)
@click.option("--p", type=PROBABILITY, required=True)
@click.option("--size-cap", type=POSITIVE, default=None)
@click.option("--width-cap", type=POSITIVE, default=None)
@click.option("--replicate", type=NON_NEGATIVE, default=0)
@with_options(common_options)
def simulate_bp_cmd(**kwargs):
    """One censored run of X(n, p)."""
    _run("simulate-bp", **kwargs)


@cli.command("census")
@click.option("--n", type=POSITIVE, required=True)
@click.option("--p", type=PROBABILITY, required=True)
@click.option("--L", "L", type=POSITIVE, default=None, help="Also report N_[L,n].")
@click.option("--lazy", is_flag=True, help="Census by lazy exploration instead of the edge stream.")
@click.option("--export-edges", type=click.Path(dir_okay=False), default=None)
@click.option("--replicate", type=NON_NEGATIVE, default=0)
@with_options(common_options)
def census_cmd(**kwargs):
    """Component sizes of one G(n, p) sample."""
    _run("census", **kwargs)


@cli.command("couple")
@click.option("--n", type=POSITIVE, required=True)
@click.option("--p", type=PROBABILITY, required=True)
@click.option("--v", type=NON_NEGATIVE, default=0)
@click.option("--k", type=POSITIVE, default=None, help="Also run the lower coupling with this k.")
@click.option("--replicate", type=NON_NEGATIVE, default=0)
@with_options(common_options)
def couple_cmd(**kwargs):
    """One joint exploration / branching-process sample."""
    _run("couple", **kwargs)


@cli.command("explore-trunc")
@click.option("--n", type=POSITIVE, required=True)
@click.option("--p", type=PROBABILITY, required=True)
@click.option("--L", "L", type=POSITIVE, required=True)
@click.option("--v", type=NON_NEGATIVE, default=0)
@click.option("--replicate", type=NON_NEGATIVE, default=0)
@with_options(common_options)
def explore_trunc_cmd(**kwargs):
    """One exploration truncated at L vertices or ceil(eps L) boundary vertices."""
    _run("explore-trunc", **kwargs)


@cli.command("oracle-enum")
@click.option("--p", type=str, required=True, help="Decimal or fraction, read exactly (e.g. 0.25 or 1/4).")
@click.option("--n", type=click.IntRange(1, Config.ORACLE_MAX_VERTICES), default=None)
@click.option("--fanout", type=click.IntRange(1, Config.ORACLE_MAX_FANOUT), default=None)
@click.option("--max-size", type=click.IntRange(1, Config.ORACLE_MAX_TREE_SIZE), default=None)
@with_options(common_options)
def oracle_enum_cmd(**kwargs):
    """Exact L1 law of G(n, p) for n <= 5, or exact size law of X(fanout, p)."""
    _run("oracle-enum", **kwargs)


def _experiment_command(name: str, options: list, doc: str):
    @with_options(options + experiment_options)
    def command(**kwargs):
        _run(name, **kwargs)
    command.__doc__ = doc
    cli.command(name)(command)


N_VALUES = click.option("--n", "n_values", type=POSITIVE, multiple=True, callback=lambda _c, _p, v: list(v) or None)
EXPONENT = click.option("--exponent", type=click.FloatRange(0.0, 1.0 / 3.0, min_open=True, max_open=True), default=None)
EPS = click.option("--eps", type=click.FloatRange(min=-1.0), multiple=True, callback=lambda _c, _p, v: list(v) or None)
P = click.option("--p", type=PROBABILITY, default=None)
L_RULE = click.option("--l-rule", type=str, default=None, help="sqrt, fixed:<L> or omega:<w>.")
REPLICATES = click.option("--replicates", type=POSITIVE, default=None)
SAMPLES = click.option("--samples", type=POSITIVE, default=None)

_experiment_command("exp-l1", [N_VALUES, EXPONENT, L_RULE, REPLICATES,
                              click.option("--sandwich-roots", type=NON_NEGATIVE, default=None,
                                           help="Roots for the lower-bound run per n; 0 skips the sandwich.")],
                    "L1, L2 and N_[L,n] along eps = n^-a, with the lower-bound sandwich.")
_experiment_command("exp-lower", [N_VALUES, EPS, P, L_RULE, REPLICATES],
                    "Pr(|C_v| >= L) against 2 eps.")
_experiment_command("exp-duality", [N_VALUES, P, EPS, SAMPLES,
                                    click.option("--size-truncation", type=click.IntRange(min=2), default=None)],
                    "X(n,p) conditioned on extinction against X(n,pi).")
_experiment_command("exp-sprinkle", [N_VALUES, EXPONENT, EPS, P, REPLICATES,
                                     click.option("--omega-prime", type=click.FloatRange(min=0.0, min_open=True),
                                                  default=None),
                                     click.option("--delta", type=click.FloatRange(0.0, 1.0, min_open=True,
                                                                                   max_open=True), default=None)],
                    "Two-round exposure merging the large components.")
_experiment_command("exp-tail", [N_VALUES, EPS, P, L_RULE, SAMPLES, click.option("--m", type=POSITIVE, default=None)],
                    "Tail of |X| and the width bounds.")
_experiment_command("exp-survival", [N_VALUES, EPS], "Survival solver against the closed form and 2 eps.")
_experiment_command("exp-totsize", [N_VALUES, P, EPS, SAMPLES], "Subcritical mean total size.")
_experiment_command("exp-couple", [N_VALUES, EPS, P, SAMPLES, click.option("--k", type=POSITIVE, default=None)],
                    "Violation counts for both exploration couplings.")
_experiment_command("exp-trunc", [N_VALUES, EPS, P, L_RULE, SAMPLES], "Truncated exploration and boundary hits.")
_experiment_command("exp-oracle", [N_VALUES, SAMPLES,
                                   click.option("--p", "p_values", type=PROBABILITY, multiple=True,
                                                callback=lambda _c, _p, v: list(v) or None)],
                    "Simulated L1 on tiny graphs against exhaustive enumeration.")


if __name__ == '__main__':
    cli()
