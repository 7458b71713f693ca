"""
CLI Terminal Module
Command handlers behind `simulate`, `solve`, `compare` and `validate`.
"""

import sys
from pathlib import Path
from typing import Dict, Optional

from src.config import config
from src.modules.output_handler import OutputHandler, compare_reports
from src.modules.runner import RunReport, ScenarioRunner
from src.modules.scenario import Scenario, ScenarioLoader, SolverKind, validate_scenario
from src.utils.errors import InertiaControlError
from src.utils.tracker import RunTracker


def resolve_scenario_path(name: str) -> Path:
    """A scenario path as given, or the bundled scenario of that name."""
    path = Path(name)
    if path.exists():
        return path
    bundled = config.bundled_scenario(name)
    return bundled if bundled.exists() else path


class TerminalInterface:
    """Command-line interface for scenario runs."""

    def __init__(
        self,
        output_dir: str = None,
        quiet: bool = False,
        log_to_file: bool = True
    ):
        """
        Initialize the CLI.

        Args:
            output_dir: Directory for run outputs and the run log.
            quiet: Suppress log lines on the console.
            log_to_file: Write the run log into the output directory.
        """
        self.output_dir = output_dir or config.output_directory
        self.tracker = RunTracker(
            log_to_file=log_to_file,
            log_to_console=not quiet,
            log_dir=self.output_dir,
        )

    def _guard(self, action) -> int:
        """Run a command, mapping failures to exit codes."""
        try:
            return action()
        except KeyboardInterrupt:
            print("\n\nOperation cancelled by user.")
            return 1
        except InertiaControlError as e:
            print(f"\nError: {e}", file=sys.stderr)
            self.tracker.log_error(type(e).__name__, exception=e)
            return e.exit_code
        except Exception as e:
            print(f"\nFatal error: {e}", file=sys.stderr)
            self.tracker.log_critical("Fatal error", exception=e)
            return 1
        finally:
            self.tracker.close()

    def _load(self, name: str) -> Scenario:
        return ScenarioLoader(self.tracker).load(resolve_scenario_path(name))

    def simulate(self, scenario_name: str, seed: Optional[int] = None,
                 substeps: Optional[int] = None) -> int:
        """Run a scenario as a pure simulation at its initial inertia."""
        def action() -> int:
            scenario = self._load(scenario_name).with_overrides(
                solver=SolverKind.SIMULATE, seed=seed, substeps=substeps)
            return self._run(scenario)
        return self._guard(action)

    def solve(self, scenario_name: str, solver: Optional[str] = None, seed: Optional[int] = None,
              substeps: Optional[int] = None, tables: bool = False) -> int:
        """Run a scenario with its solver, or the one given."""
        def action() -> int:
            scenario = self._load(scenario_name).with_overrides(
                solver=SolverKind(solver) if solver else None, seed=seed, substeps=substeps)
            return self._run(scenario, tables)
        return self._guard(action)

    def compare(self, report_a: str, report_b: str) -> int:
        """Compare two run reports and write the comparison document."""
        def action() -> int:
            handler = OutputHandler(self.output_dir, self.tracker)
            comparison = compare_reports(handler.load_json(report_a), handler.load_json(report_b))
            path = handler.save_json(comparison, config.comparison_filename)
            self._display_comparison(comparison, path)
            return 0
        return self._guard(action)

    def validate(self, scenario_name: str) -> int:
        """Load a scenario and print its pre-run checks."""
        def action() -> int:
            summary = validate_scenario(self._load(scenario_name))
            self._print_header("SCENARIO VALIDATION")
            for key, value in summary.items():
                print(f"{key + ':':<22} {value}")
            print("=" * 60)
            return 0
        return self._guard(action)

    def _run(self, scenario: Scenario, tables: bool = False) -> int:
        self._print_header(f"RUN: {scenario.name} ({scenario.solver.value})")
        report = ScenarioRunner(self.tracker).run(scenario, self.output_dir, tables)
        self._display_report(report)
        return 0

    def _print_header(self, title: str) -> None:
        """Print a section header."""
        print("=" * 60)
        print(title)
        print("=" * 60)

    def _display_report(self, report: RunReport) -> None:
        """Display run results."""
        metrics = report.metrics
        objective = report.objective
        print("\n" + "=" * 60)
        print("RUN RESULTS")
        print("=" * 60)
        print(f"Objective total:       {objective.total:.6f}")
        print(f"  stage integral:      {objective.stage_integral:.6f}")
        print(f"  terminal penalty:    {objective.terminal_penalty:.6f}")
        print(f"  constraint penalty:  {objective.constraint_penalty:.6f}")
        print(f"Freq. abs. integral:   {metrics['freq_abs_integral']:.6f}")
        if metrics["power_peak_value"] is not None:
            print(f"Power peak:            {metrics['power_peak_value']:.6f} p.u. "
                  f"at t = {metrics['power_peak_time']:g} s")
        for bus, energy in metrics["energy_final"].items():
            print(f"Energy (storage {bus}):  {energy:.6f} p.u.s")
        print("-" * 60)
        print(f"Results saved to: {self.output_dir}")
        print("=" * 60)

        if self.tracker.get_warning_count() > 0:
            print(f"\n{self.tracker.get_warning_count()} warning(s); see {config.log_filename}")

    def _display_comparison(self, comparison: Dict, path: Path) -> None:
        """Display a comparison table."""
        self._print_header(
            f"COMPARE: {comparison['a']['scenario']} ({comparison['a']['solver']}) vs "
            f"{comparison['b']['scenario']} ({comparison['b']['solver']})")
        print(f"{'metric':<22}{'a':>14}{'b':>14}{'b - a':>14}  lower")
        print("-" * 60)
        for name, row in comparison["metrics"].items():
            cells = ["" if row[k] is None else f"{row[k]:.6f}" for k in ("a", "b", "delta")]
            print(f"{name:<22}{cells[0]:>14}{cells[1]:>14}{cells[2]:>14}  {row['lower'] or ''}")
        print("-" * 60)
        print(f"Comparison saved to: {path}")
        print("=" * 60)


def run_cli(command: str, output_dir: str = None, quiet: bool = False, **options) -> int:
    """
    Entry point for CLI commands.

    Args:
        command: One of simulate, solve, compare, validate.
        output_dir: Optional output directory.
        quiet: Suppress console logging.
        options: Arguments of the command.

    Returns:
        Exit code.
    """
    log_to_file = command in ("simulate", "solve")
    cli = TerminalInterface(output_dir=output_dir, quiet=quiet, log_to_file=log_to_file)
    handler = getattr(cli, command)
    return handler(**options)
