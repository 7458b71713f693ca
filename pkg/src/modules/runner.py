"""
Scenario Runner Module
Dispatches a scenario to its solver, computes the run metrics and writes
the run artifacts.
"""

import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from src.config import config
from src.modules.dp_solver import DPSolver, export_tables
from src.modules.limits import CostModel, freq_abs_integral, power_peak
from src.modules.output_handler import OutputHandler
from src.modules.scenario import Scenario, SolverKind, case_hash, scenario_hash
from src.modules.traj_opt import TrajectoryOptimizer, write_history
from src.modules.trajectory import ObjectiveBreakdown, Trajectory
from src.utils.tracker import RunTracker


@dataclass
class RunReport:
    """Summary document of one run."""
    scenario: str
    scenario_hash: str
    case_hash: str
    solver: str
    metrics: Dict
    objective: ObjectiveBreakdown
    timings: Dict[str, float] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    details: Dict = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "scenario": self.scenario,
            "scenario_hash": self.scenario_hash,
            "case_hash": self.case_hash,
            "solver": self.solver,
            "metrics": self.metrics,
            "objective": self.objective.to_dict(),
            "timings": self.timings,
            "artifacts": self.artifacts,
            "details": self.details,
            "warnings": self.warnings,
        }


def compute_metrics(
    traj: Trajectory,
    flow_lines: Sequence[Tuple[int, int]],
    model: Optional[CostModel] = None
) -> Dict:
    """
    Report metrics of a trajectory; the first flow line gives power_peak_*.

    freq_abs_integral weights every frequency bus by 1 whatever the objective
    weights are; freq_weighted_integral applies the scenario frequency
    weights b_i (None without a model).
    """
    peaks = {f"{a}-{b}": power_peak(traj, (a, b)) for a, b in flow_lines}
    first = next(iter(peaks.values()), None)
    return {
        "freq_abs_integral": freq_abs_integral(traj),
        "freq_weighted_integral": freq_abs_integral(traj, model.b) if model is not None else None,
        "power_peak_value": first.value if first else None,
        "power_peak_time": first.time if first else None,
        "power_peaks": {line: peak.to_dict() for line, peak in peaks.items()},
        "energy_final": {str(b): float(e) for b, e in zip(traj.network.storage_ids, traj.energy_final)},
    }


class ScenarioRunner:
    """Runs scenarios and writes their outputs."""

    def __init__(self, tracker: Optional[RunTracker] = None):
        """Initialize the runner."""
        self.tracker = tracker or RunTracker.silent()
        self._written: List[Path] = []

    def run(self, scenario: Scenario, out_dir: Optional[str] = None, tables: bool = False) -> RunReport:
        """
        Solve a scenario and write trajectory CSV, report and solver artifacts.

        Args:
            scenario: Validated scenario.
            out_dir: Output directory (config default if omitted).
            tables: Also export the DP value tables.

        Returns:
            The run report (also written to disk).

        Raises:
            InertiaControlError: solver failure; files this run already
                wrote are removed first.
        """
        handler = OutputHandler(out_dir, self.tracker)
        self._written = []
        digest = scenario_hash(scenario)
        self.tracker.log_info(f"Running '{scenario.name}' ({digest}) with {scenario.solver.value}")

        try:
            with self.tracker.timed("setup"):
                model = scenario.cost_model()
                scenario.initial_state()

            with self.tracker.timed("solve"):
                trajectory, breakdown, details = self._solve(scenario, handler, tables)

            for bus, excess in model.energy_violations(trajectory.energy_final).items():
                self.tracker.log_warning(f"storage {bus}: final energy outside limits by {excess:.6g}")

            report = RunReport(
                scenario=scenario.name,
                scenario_hash=digest,
                case_hash=case_hash(scenario),
                solver=scenario.solver.value,
                metrics=compute_metrics(trajectory, scenario.flow_lines(), model),
                objective=breakdown,
                details=details,
            )
            self._written.append(handler.save_trajectory(trajectory, scenario.flow_lines()))
            report.timings = {k: round(v, 6) for k, v in self.tracker.timings.items()}
            report.warnings = [w.message for w in self.tracker.warnings]
            report.artifacts = [p.name for p in self._written] + [config.report_filename]
            self._written.append(handler.save_json(report.to_dict()))

        except Exception as e:
            self.tracker.log_error(f"Run of '{scenario.name}' failed", exception=e,
                                   context={"solver": scenario.solver.value})
            self._cleanup()
            raise

        self.tracker.log_info(
            f"Run finished: objective {report.objective.total:.6f}, "
            f"freq integral {report.metrics['freq_abs_integral']:.6f}")
        return report

    def _solve(
        self,
        scenario: Scenario,
        handler: OutputHandler,
        tables: bool
    ) -> Tuple[Trajectory, ObjectiveBreakdown, Dict]:
        """Dispatch to the configured solver."""
        if scenario.solver.uses_grid:
            result = DPSolver(self.tracker).solve(scenario)
            if tables:
                directory = handler.output_dir / config.tables_directory
                self._written.append(directory)
                export_tables(result, directory)
            details = {
                "variant": result.config.variant.value,
                "start_value": result.start_value,
                "stages": result.config.n_stages,
                "grid": result.config.to_dict(),
            }
            return result.trajectory, result.breakdown, details

        optimizer = TrajectoryOptimizer.from_scenario(scenario, tracker=self.tracker)
        schedule = scenario.initial_schedule()

        if scenario.solver is SolverKind.TRAJ_OPT:
            result = optimizer.optimize(schedule)
            self._written.append(write_history(
                result.history, handler.output_dir / config.history_filename))
            details = {
                "start_label": result.start_label,
                "initial_objective": result.initial_objective,
                "iterations": sum(1 for row in result.history if row.iteration > 0),
                "optimizer": optimizer.cfg.to_dict(),
            }
            return result.evaluation.trajectory, result.evaluation.breakdown, details

        evaluation = optimizer.evaluate(schedule)
        details = {
            "inertia": schedule.values[0].tolist(),
            "integrator": optimizer.cfg.integrator.value,
            "substeps": optimizer.cfg.substeps,
        }
        return evaluation.trajectory, evaluation.breakdown, details

    def _cleanup(self) -> None:
        """Remove files and directories written by a failed run."""
        for path in reversed(self._written):
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            elif path.exists():
                path.unlink()
            self.tracker.log_debug(f"Removed partial output {path}")
        self._written = []
