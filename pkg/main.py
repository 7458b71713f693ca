#!/usr/bin/env python3
"""
Virtual Inertia Control
Main entry point with subcommand selection.
"""

import argparse
import sys

from src.cli.terminal import run_cli


def parse_arguments(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description="Virtual Inertia Control - optimal time-variant inertia for storage units",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py validate twobus
  python main.py solve twobus --solver dp-basic --out output/basic
  python main.py simulate twelvebus --dt-substeps 10
  python main.py compare output/a/report.json output/b/report.json
        """
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--out",
        type=str,
        default="output",
        help="Output directory for results (default: output)"
    )
    common.add_argument(
        "--quiet",
        action="store_true",
        help="Do not echo log lines to the console"
    )

    run_options = argparse.ArgumentParser(add_help=False)
    run_options.add_argument("--seed", type=int, help="Seed for jittered optimizer starts")
    run_options.add_argument("--dt-substeps", type=int, dest="substeps",
                             help="Integrator substeps per stage")

    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common, run_options],
                                   help="Simulate a scenario at its initial inertia")
    simulate.add_argument("scenario", help="Scenario file or bundled scenario name")

    solve = commands.add_parser("solve", parents=[common, run_options],
                                help="Solve a scenario")
    solve.add_argument("scenario", help="Scenario file or bundled scenario name")
    solve.add_argument("--solver", choices=["dp-basic", "dp-levelset", "traj-opt"],
                       help="Override the scenario's solver")
    solve.add_argument("--tables", action="store_true",
                       help="Export DP value tables (DP solvers only)")

    compare = commands.add_parser("compare", parents=[common], help="Compare two run reports")
    compare.add_argument("report_a")
    compare.add_argument("report_b")

    validate = commands.add_parser("validate", parents=[common], help="Validate a scenario")
    validate.add_argument("scenario", help="Scenario file or bundled scenario name")

    return parser.parse_args(argv)


def main(argv=None):
    """Main entry point."""
    args = parse_arguments(argv)
    options = {
        "simulate": lambda: {"scenario_name": args.scenario, "seed": args.seed, "substeps": args.substeps},
        "solve": lambda: {"scenario_name": args.scenario, "solver": args.solver, "seed": args.seed,
                          "substeps": args.substeps, "tables": args.tables},
        "compare": lambda: {"report_a": args.report_a, "report_b": args.report_b},
        "validate": lambda: {"scenario_name": args.scenario},
    }[args.command]()
    return run_cli(args.command, output_dir=args.out, quiet=args.quiet, **options)


if __name__ == "__main__":
    sys.exit(main())
