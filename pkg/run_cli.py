import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import termcolor
from pyfiglet import Figlet

from core.config import MODES, ProblemConfig, apply_overrides, parse_config
from core.errors import KeffError
from core.router import (
    EXIT_CONVERGED,
    EXIT_ERROR,
    EXIT_NOT_CONVERGED,
    Router,
    RunOutcome,
    error_outcome,
    summarize,
)
from core.synthetic import DEFAULT_GROUPS, write_synthetic_library

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"
logger = logging.getLogger("keff_lowrank")

HEADER_COLOR = 'green'
SUBHEADER_COLOR = 'cyan'
INFO_COLOR = 'yellow'
ERROR_COLOR = 'red'
SUCCESS_COLOR = 'green'
CODE_COLOR = 'cyan'
DIVIDER = "─" * 60


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def print_banner() -> None:
    f = Figlet(font='slant')
    print(termcolor.colored(f.renderText('keff-lowrank'), HEADER_COLOR))
    print(termcolor.colored("Multigroup k-eigenvalue diffusion with low-rank power iteration\n",
                            SUBHEADER_COLOR))


def print_configuration(config: ProblemConfig) -> None:
    solver = config.solver
    print(termcolor.colored("Configuration:", INFO_COLOR, attrs=['bold']))
    print(f"• Mode: {solver.mode}")
    if solver.mode == "simplified":
        settings = config.simplified
        print(f"• Spectra: lambdas={list(settings.lambdas)}, sigmas={list(settings.sigmas)}")
        print(f"• Problems: {settings.n_problems} ({settings.similarity} similarity), "
              f"rank {settings.rank}, {settings.iterations} iterations")
    else:
        print(f"• Mesh: {config.mesh.n_cells} cells, radius {config.mesh.radius_cm} cm "
              f"({config.mesh.outer_boundary} outer boundary)")
        print(f"• Materials: {config.materials_path}")
        print(f"• Shells: {', '.join(f'{s.material}<{s.outer_radius_cm}' for s in config.shells)}")
        if solver.mode != "full":
            print(f"• Rank: {solver.rank if solver.rank is not None else 'r_min'}")
        if solver.mode == "dlra-adaptive":
            print(f"• Truncation: theta={solver.theta:g} "
                  f"({'relative' if solver.theta_relative else 'absolute'}), "
                  f"r_min={solver.r_min}, r_max={solver.r_max or 'min(N_x, G)'}")
        print(f"• Backend: {solver.backend}")
    print(f"• eps: {solver.eps:g}, max_iter: {solver.max_iter}, seed: {solver.seed}")
    print(f"• Output directory: {config.output_dir}")
    print()


def print_outcome(outcome: RunOutcome) -> None:
    print(f"\n{DIVIDER}")
    if outcome.exit_code == EXIT_CONVERGED:
        print(termcolor.colored("Converged", SUCCESS_COLOR, attrs=['bold']))
    elif outcome.exit_code == EXIT_NOT_CONVERGED:
        print(termcolor.colored("Stopped without convergence", INFO_COLOR, attrs=['bold']))
    else:
        print(termcolor.colored("Error", ERROR_COLOR, attrs=['bold']))
    print(f"{DIVIDER}\n")
    color = ERROR_COLOR if outcome.error is not None else CODE_COLOR
    for line in summarize(outcome):
        print(termcolor.colored(f"• {line}", color))
    print()


def solve_command(args: argparse.Namespace) -> int:
    try:
        config = parse_config(args.config)
        config = apply_overrides(config, mode=args.mode, rank=args.rank, eps=args.eps,
                                 theta=args.theta, seed=args.seed, out_dir=args.out_dir)
    except KeffError as e:
        logger.error(f"Invalid configuration: {e}")
        if not args.quiet:
            print_outcome(error_outcome(e))
        return EXIT_ERROR

    if not args.quiet:
        print_configuration(config)
    outcome = Router(config).run()
    if not args.quiet:
        print_outcome(outcome)
    return outcome.exit_code


def generate_library_command(args: argparse.Namespace) -> int:
    try:
        write_synthetic_library(args.output, args.groups, seed=args.seed)
    except (KeffError, ValueError, OSError) as e:
        print(termcolor.colored(f"Error: could not write library: {str(e)}", ERROR_COLOR))
        return EXIT_ERROR
    if not args.quiet:
        print(termcolor.colored(f"Success: wrote {args.groups}-group library to {args.output}",
                                SUCCESS_COLOR, attrs=['bold']))
    return EXIT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true", help="Log every iteration")
    common.add_argument("--quiet", "-q", action="store_true",
                        help="Only warnings and errors, no console summary")
    common.add_argument("--no-banner", dest="banner", action="store_false",
                        help="Skip the start-up banner")

    parser = argparse.ArgumentParser(
        prog="keff-lowrank",
        description="k-eigenvalue solver for multigroup diffusion in spherical geometry")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", parents=[common], help="Run a problem configuration")
    solve.add_argument("config", type=Path, help="Path to the problem configuration (JSON)")
    solve.add_argument("--mode", choices=MODES, help="Override solver.mode")
    solve.add_argument("--rank", type=int, help="Override solver.rank")
    solve.add_argument("--eps", type=float, help="Override solver.eps")
    solve.add_argument("--theta", type=float, help="Override solver.theta")
    solve.add_argument("--seed", type=int, help="Override solver.seed")
    solve.add_argument("--out-dir", type=Path, help="Override outputs.directory")
    solve.set_defaults(handler=solve_command)

    library = commands.add_parser("generate-library", parents=[common],
                                  help="Write a synthetic three-material library")
    library.add_argument("output", type=Path, help="Destination JSON file")
    library.add_argument("--groups", "-g", type=int, default=DEFAULT_GROUPS,
                         help=f"Number of energy groups (default: {DEFAULT_GROUPS})")
    library.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
    library.set_defaults(handler=generate_library_command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns 0 converged, 2 not converged, 1 on errors."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(verbose=args.verbose, quiet=args.quiet)
    if args.banner and not args.quiet:
        print_banner()
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
