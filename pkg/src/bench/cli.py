"""
Command-line interface: ``pnp <subcommand> ...``.

Exit codes: 0 on success, 1 on runtime failures (solver, I/O), 2 on config
and usage errors.
"""

import argparse
import logging
import sys
from typing import List, Optional

from .. import __version__
from ..core.diagnostics import budget_comparison, format_number
from ..core.errors import ConfigError, PnPError
from ..core.signal import snr_db
from ..core.signal_io import export_pgm, format_float, read_signal, write_signal
from ..core.solvers import Algorithm
from .config import load_config
from .experiment import (
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_RUNTIME_ERROR,
    build_problem,
    effective_seeds,
    run_experiment,
    seed_offset_from_env,
)
from .phantoms import PHANTOM_KINDS, make_phantom, parse_shape

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool) -> None:
    """Route log records to stderr, at DEBUG when verbose and INFO otherwise."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    return run_experiment(config, outdir=args.outdir, jobs=args.jobs)


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(
        f"{args.config}: ok ({len(config.experiment.algorithms)} algorithms, "
        f"{len(config.experiment.budgets)} budgets, {len(config.experiment.seeds)} seeds)"
    )
    return EXIT_OK


def _cmd_phantom(args: argparse.Namespace) -> int:
    try:
        shape = parse_shape(args.shape)
    except ValueError as e:
        raise ConfigError(str(e))
    signal = make_phantom(
        args.kind, shape, args.seed, sparsity=args.sparsity, blocks=args.blocks
    )
    write_signal(args.out, signal)
    logger.info("wrote %s phantom %s to %s", args.kind, args.shape, args.out)
    return EXIT_OK


def _cmd_snr(args: argparse.Namespace) -> int:
    value = snr_db(read_signal(args.truth), read_signal(args.estimate))
    print(format_float(value))
    return EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    export_pgm(args.out, read_signal(args.signal))
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    seeds = effective_seeds(config, seed_offset_from_env())
    seed = args.seed if args.seed is not None else seeds[0]
    budgets = args.budget or list(config.experiment.budgets)
    problem = build_problem(config, seed)
    algorithms = [Algorithm.parse(name) for name in config.experiment.algorithms]

    print("algorithm,budget,final_snr_db,iters")
    for budget in budgets:
        rows = budget_comparison(
            algorithms,
            problem.fidelity,
            problem.denoiser,
            problem.solver_config,
            budget,
            problem.truth,
        )
        for row in rows:
            print(
                f"{row.algorithm},{format_number(budget)},"
                f"{format_float(row.final_snr_db)},{row.iterations}"
            )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnp",
        description="Plug-and-play reconstruction: batch and online solvers, experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log debug messages"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="run every triple of an experiment config")
    run_parser.add_argument("config", help="experiment config file")
    run_parser.add_argument("--outdir", default=None, help="override experiment.output_dir")
    run_parser.add_argument("--jobs", type=int, default=1, help="parallel runs (default 1)")
    run_parser.set_defaults(handler=_cmd_run)

    validate_parser = subparsers.add_parser("validate", help="check a config without running")
    validate_parser.add_argument("config")
    validate_parser.set_defaults(handler=_cmd_validate)

    phantom_parser = subparsers.add_parser("phantom", help="write a synthetic ground truth")
    phantom_parser.add_argument("kind", choices=PHANTOM_KINDS)
    phantom_parser.add_argument("shape", help="N for a flat signal or HxW for a grid")
    phantom_parser.add_argument("seed", type=int)
    phantom_parser.add_argument("out", help="output .pnps file")
    phantom_parser.add_argument("--sparsity", type=float, default=0.05)
    phantom_parser.add_argument("--blocks", type=int, default=8)
    phantom_parser.set_defaults(handler=_cmd_phantom)

    snr_parser = subparsers.add_parser("snr", help="print the SNR in dB of an estimate")
    snr_parser.add_argument("truth")
    snr_parser.add_argument("estimate")
    snr_parser.set_defaults(handler=_cmd_snr)

    export_parser = subparsers.add_parser("export", help="export a grid signal as PGM")
    export_parser.add_argument("signal")
    export_parser.add_argument("out")
    export_parser.set_defaults(handler=_cmd_export)

    compare_parser = subparsers.add_parser(
        "compare", help="final SNR of each algorithm under a measurement budget"
    )
    compare_parser.add_argument("config")
    compare_parser.add_argument(
        "--budget", type=float, action="append", help="budget (repeatable)"
    )
    compare_parser.add_argument("--seed", type=int, default=None)
    compare_parser.set_defaults(handler=_cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Command-line entry point.

    Args:
        argv: Arguments without the program name; sys.argv is used when None.

    Returns:
        The exit code: 0 on success, 1 on a runtime failure and 2 on a usage
        or config error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG_ERROR
    configure_logging(args.verbose)

    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_CONFIG_ERROR
    except (PnPError, OSError, ValueError) as e:
        logger.error("%s", e)
        return EXIT_RUNTIME_ERROR
