"""
Configuration settings for the virtual inertia control toolkit.
"""

from pathlib import Path
from dataclasses import dataclass


@dataclass
class Config:
    """Application configuration settings."""

    # Output settings
    output_directory: str = "output"
    trajectory_filename: str = "trajectory.csv"
    report_filename: str = "report.json"
    history_filename: str = "optimizer_history.csv"
    tables_directory: str = "dp_tables"
    tables_manifest_filename: str = "manifest.json"
    comparison_filename: str = "comparison.json"
    log_filename: str = "run.log"
    report_version: str = "1.0"

    # Bundled scenario documents
    scenario_directory: str = str(Path(__file__).resolve().parent / "scenarios")

    # Network settings
    default_base_mva: float = 100.0
    balance_tolerance: float = 1e-9
    newton_max_iterations: int = 50
    newton_tolerance: float = 1e-11
    line_reactance_per_km: float = 0.001
    transformer_reactance: float = 0.15

    # Dynamic programming settings
    grid_tolerance: float = 1e-9  # relative to axis span
    dp_progress_every: int = 10

    # Trajectory optimizer defaults
    integrator: str = "rk4"
    substeps: int = 5
    max_iterations: int = 60
    fd_relative_step: float = 1e-4
    convergence_tolerance: float = 1e-9
    initial_step: float = 0.25  # fraction of the control range
    step_shrink: float = 0.5
    step_growth: float = 1.5
    max_backtracks: int = 12

    def bundled_scenario(self, name: str) -> Path:
        """Get the path of a bundled scenario document."""
        filename = name if name.endswith(".json") else f"{name}.json"
        return Path(self.scenario_directory) / filename


# Global configuration instance
config = Config()
