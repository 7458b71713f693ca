"""
Output Handler Module
Writes trajectory CSVs and JSON reports, reads them back, and compares
two run reports.
"""

import csv
import json
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import config
from src.modules.trajectory import Trajectory
from src.utils.errors import ValidationError
from src.utils.tracker import RunTracker

# Metrics compared between reports; lower is better for all of them.
COMPARED_METRICS = ("freq_abs_integral", "power_peak_value", "objective_total")


def trajectory_columns(traj: Trajectory, flow_lines: Sequence[Tuple[int, int]]) -> List[str]:
    """CSV header: time, angles, frequencies, inertia, power, energy, flows."""
    net = traj.network
    return (["t"]
            + [f"delta_{b}" for b in net.delta_ids]
            + [f"omega_{b}" for b in net.omega_ids]
            + [f"M_e_{b}" for b in net.storage_ids]
            + [f"P_r_{b}" for b in net.storage_ids]
            + [f"E_{b}" for b in net.storage_ids]
            + [f"flow_{a}_{b}" for a, b in flow_lines])


class OutputHandler:
    """Handles output generation for one run directory."""

    def __init__(self, output_dir: str = None, tracker: Optional[RunTracker] = None):
        """Initialize the output handler."""
        self.output_dir = Path(output_dir or config.output_directory)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.tracker = tracker or RunTracker.silent()

    def save_json(self, data: Dict, filename: str = None) -> Path:
        """
        Save data to a JSON file inside the standard envelope.

        Args:
            data: Dictionary to save.
            filename: Optional custom filename.

        Returns:
            Path to the saved file.
        """
        filename = filename or config.report_filename
        filepath = self.output_dir / filename

        try:
            output_data = {
                "generated_at": datetime.now().isoformat(),
                "version": config.report_version,
                "data": data
            }

            with open(filepath, 'w', encoding='utf-8') as f:
                json.dump(output_data, f, indent=2, ensure_ascii=False)

            self.tracker.log_info(f"JSON saved to: {filepath}")
            return filepath

        except Exception as e:
            self.tracker.log_error(f"Failed to save JSON: {filepath}", exception=e)
            raise

    def save_trajectory(
        self,
        traj: Trajectory,
        flow_lines: Sequence[Tuple[int, int]] = (),
        filename: str = None
    ) -> Path:
        """
        Save a trajectory as CSV with full double precision.

        The final row (t = t1) has no control, power or energy entries.

        Returns:
            Path to the saved file.
        """
        filename = filename or config.trajectory_filename
        filepath = self.output_dir / filename

        try:
            flows = [traj.network.flow_between(traj.delta, a, b) for a, b in flow_lines]
            energy = traj.energy
            with open(filepath, 'w', newline='', encoding='utf-8') as f:
                writer = csv.writer(f)
                writer.writerow(trajectory_columns(traj, flow_lines))
                for k in range(traj.n_steps + 1):
                    row = [traj.times[k], *traj.delta[k], *traj.omega[k]]
                    if k < traj.n_steps:
                        row += [*traj.controls[k], *traj.power[k], *energy[k]]
                    else:
                        row += [None] * (3 * traj.network.n_storage)
                    row += [flow[k] for flow in flows]
                    writer.writerow(["" if v is None else repr(float(v)) for v in row])

            self.tracker.log_info(f"CSV saved to: {filepath}")
            return filepath

        except Exception as e:
            self.tracker.log_error(f"Failed to save CSV: {filepath}", exception=e)
            raise

    def load_json(self, filename: Union[str, Path] = None) -> Dict:
        """
        Load the payload of a JSON file written by save_json.

        Args:
            filename: File name inside the output directory, or a path.

        Returns:
            The `data` payload.
        """
        filepath = Path(filename or config.report_filename)
        if not filepath.is_absolute() and not filepath.exists():
            filepath = self.output_dir / filepath

        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                document = json.load(f)
        except Exception as e:
            self.tracker.log_error(f"Failed to load JSON: {filepath}", exception=e)
            raise
        return document.get("data", document) if isinstance(document, dict) else document


def load_trajectory_csv(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read a trajectory CSV into columns; blank cells become NaN."""
    with open(path, 'r', newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) if v != "" else np.nan for v in row] for row in reader]
    table = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: table[:, i] for i, name in enumerate(header)}


def _dominance(a: Optional[float], b: Optional[float]) -> Optional[str]:
    if a is None or b is None:
        return None
    if a < b:
        return "a"
    if b < a:
        return "b"
    return "tie"


def compare_reports(report_a: Dict, report_b: Dict) -> Dict:
    """
    Side-by-side metric deltas (b - a) and which run is lower on each.

    Raises:
        ValidationError: the reports come from different physical cases.
    """
    if report_a.get("case_hash") != report_b.get("case_hash"):
        raise ValidationError(
            f"incompatible scenarios: case {report_a.get('case_hash')} vs {report_b.get('case_hash')}")

    def flat(report: Dict) -> Dict[str, Optional[float]]:
        metrics = dict(report.get("metrics", {}))
        metrics["objective_total"] = report.get("objective", {}).get("total")
        for bus, value in (metrics.pop("energy_final", None) or {}).items():
            metrics[f"energy_final_{bus}"] = value
        return metrics

    a, b = flat(report_a), flat(report_b)
    names = list(COMPARED_METRICS) + sorted(k for k in a if k.startswith("energy_final_"))
    rows = {}
    for name in names:
        va, vb = a.get(name), b.get(name)
        rows[name] = {
            "a": va,
            "b": vb,
            "delta": None if va is None or vb is None else vb - va,
            "lower": _dominance(va, vb) if name in COMPARED_METRICS else None,
        }
    return {
        "case_hash": report_a.get("case_hash"),
        "a": {"scenario": report_a.get("scenario"), "solver": report_a.get("solver")},
        "b": {"scenario": report_b.get("scenario"), "solver": report_b.get("solver")},
        "metrics": rows,
    }
