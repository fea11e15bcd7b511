"""
Terminal CLI for out-of-sample R² estimation and inference.
Usage:
    python main.py analyze data.csv --outcome y
    python main.py compare --within data.csv --outcome a --outcome b
    python main.py compare --across species_a.json species_b.json
    python main.py simulate scenarios.txt --output diagnostics.csv
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from analysis import R2Analysis
from config import (
    CI_METHODS, FORMAT_ALIASES, MSE_METHODS, OUTPUT_FORMATS, RHO_ALIASES, SE_METHODS, RunConfig, resolve_settings,
)
from data_manager import load_outcomes
from errors import EXIT_OK, InputError, NumericalError
from predictors import PredictorSpec
from r2_inference import ESTIMATORS
from reporting import load_report, render_analysis, render_comparison, to_json, write_output
from sim_harness import load_scenarios, manifest, run_grid

logger = logging.getLogger("oosr2")


def print_banner():
    print("=" * 60, file=sys.stderr)
    print("  OOSR2  -  out-of-sample R² estimation and inference", file=sys.stderr)
    print("=" * 60, file=sys.stderr)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------
def _add_run_flags(p: argparse.ArgumentParser) -> None:
    """Every flag defaults to None so that unset flags never override the config layers."""
    g = p.add_argument_group("estimation")
    g.add_argument("--mse-method", choices=MSE_METHODS)
    g.add_argument("--folds", type=int, help="K, number of CV folds (default 10)")
    g.add_argument("--repeats", type=int, help="R, repeats of the fold split (default 100)")
    g.add_argument("--boot", type=int, help="bootstrap draws for the .632 MSE (default 100)")
    g.add_argument("--rho", choices=sorted(RHO_ALIASES), help="rho estimation (default jackknife)")
    g.add_argument("--n-boot-rho", type=int, help="outer bootstrap replicates (default 50)")
    g.add_argument("--se", choices=SE_METHODS)
    g.add_argument("--ci", choices=CI_METHODS)
    g.add_argument("--alpha", type=float)
    g.add_argument("--simple-cv", dest="nested", action="store_const", const=False,
                   help="plain repeated CV instead of nested CV")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("--predictor", help="ols, elastic_net, mean_only or a registered kind (default ols)")
    g.add_argument("--en-mixing", type=float, help="elastic-net mixing weight (default 0.5)")
    g.add_argument("--no-scale", dest="scale", action="store_const", const=False,
                   help="center the predictors without scaling them")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=[*OUTPUT_FORMATS, *FORMAT_ALIASES])
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--output", "-o", help="write the report here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oosr2", description="Out-of-sample R² with standard errors")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate R², SE, CI and p-value from a CSV file")
    a.add_argument("input")
    a.add_argument("--outcome", action="append", help="outcome column name or index (repeatable)")
    a.add_argument("--delimiter", default=",")
    a.add_argument("--estimator", choices=ESTIMATORS, default="pooling")
    _add_run_flags(a)
    _add_common_flags(a)

    c = sub.add_parser("compare", help="test the difference of two R² values")
    mode = c.add_mutually_exclusive_group(required=True)
    mode.add_argument("--within", metavar="CSV", help="two outcomes sharing the predictors in CSV")
    mode.add_argument("--across", nargs=2, metavar="REPORT", help="two JSON reports from independent datasets")
    c.add_argument("--outcome", action="append",
                   help="within: the two outcome columns; across: the outcome to pick from each report")
    c.add_argument("--delimiter", default=",")
    _add_run_flags(c)
    _add_common_flags(c)

    s = sub.add_parser("simulate", help="run a Monte-Carlo scenario file")
    s.add_argument("scenarios")
    s.add_argument("--manifest", help="also write a JSON manifest of configs and seeds")
    _add_run_flags(s)
    _add_common_flags(s)
    return parser


def _configure_logging(args) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _flags(args) -> dict:
    names = ("mse_method", "folds", "repeats", "boot", "rho", "n_boot_rho", "se", "ci",
             "alpha", "nested", "seed", "threads", "format", "scale", "predictor", "en_mixing")
    return {k: getattr(args, k) for k in names if getattr(args, k, None) is not None}


def _resolve(args) -> tuple[RunConfig, dict]:
    settings = resolve_settings(args.config, _flags(args))
    return RunConfig.from_settings(settings), settings


def _analysis(args, cfg: RunConfig, settings: dict) -> R2Analysis:
    spec = PredictorSpec(kind=settings.get("predictor", "ols"), en_mixing=settings.get("en_mixing", 0.5))
    return R2Analysis(cfg, spec, scale_predictors=settings.get("scale", True))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
def cmd_analyze(args) -> str:
    cfg, settings = _resolve(args)
    outcomes = args.outcome or [0]
    datasets = load_outcomes(args.input, outcomes, args.delimiter)
    analysis = _analysis(args, cfg, settings)
    reports = [
        analysis.analyze(d, estimator=args.estimator, outcome=str(name))
        for name, d in zip(outcomes, datasets)
    ]
    return render_analysis(reports, settings.get("format", "json"))


def cmd_compare(args) -> str:
    cfg, settings = _resolve(args)
    fmt = settings.get("format", "json")
    if args.within:
        if not args.outcome or len(args.outcome) != 2:
            raise InputError("--within needs exactly two --outcome columns")
        a, b = args.outcome
        d_a, d_b = load_outcomes(args.within, [a, b], args.delimiter)
        comparison, r_a, r_b = _analysis(args, cfg, settings).compare_within(d_a, d_b, (a, b))
        return render_comparison(comparison, fmt, (a, b), [r_a, r_b])

    picks = args.outcome or [None, None]
    if len(picks) == 1:
        picks = picks * 2
    if len(picks) != 2:
        raise InputError("--across takes at most two --outcome names")
    path_a, path_b = args.across
    r_a = load_report(path_a, picks[0])
    r_b = load_report(path_b, picks[1])
    comparison = R2Analysis.compare_across(r_a, r_b)
    return render_comparison(comparison, fmt, (path_a, path_b), [r_a, r_b])


def cmd_simulate(args) -> str:
    cfg, _ = _resolve(args)
    scenarios = load_scenarios(args.scenarios, cfg)
    for sc in scenarios:
        logger.info("Scenario %s uses seed %d", sc.label(), sc.run.seed)
    if args.manifest:
        write_output(to_json(manifest(scenarios)), args.manifest)
    table = run_grid(scenarios)
    return table.to_csv(index=False, float_format="%.10g")


COMMANDS = {"analyze": cmd_analyze, "compare": cmd_compare, "simulate": cmd_simulate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    if not args.quiet:
        print_banner()

    try:
        text = COMMANDS[args.command](args)
        write_output(text, args.output)
    except (InputError, NumericalError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
