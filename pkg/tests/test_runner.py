"""Scenario runs: written artifacts, recomputed metrics, cleanup and compare."""

import numpy as np
import pytest

from conftest import twobus_document
from src.config import config
from src.modules.output_handler import OutputHandler, compare_reports, load_trajectory_csv
from src.modules.runner import ScenarioRunner
from src.modules.scenario import ScenarioLoader, SolverKind
from src.utils.errors import ValidationError


class TestRun:
    def test_simulation_artifacts(self, twobus_scenario, output_dir):
        report = ScenarioRunner().run(twobus_scenario, output_dir)
        assert (output_dir / config.trajectory_filename).exists()
        document = OutputHandler(output_dir).load_json(config.report_filename)
        assert document["solver"] == "simulate-only"
        assert document["objective"]["total"] == pytest.approx(report.objective.total)
        assert set(document["timings"]) >= {"setup", "solve"}
        assert document["artifacts"] == [config.trajectory_filename, config.report_filename]

    def test_csv_reproduces_reported_metrics(self, output_dir):
        scenario = ScenarioLoader().from_dict(twobus_document(report_lines=[[1, 2]]))
        report = ScenarioRunner().run(scenario, output_dir)
        columns = load_trajectory_csv(output_dir / config.trajectory_filename)
        assert list(columns)[:3] == ["t", "delta_1", "omega_1"]

        dt = columns["t"][1] - columns["t"][0]
        integral = float(np.sum(np.abs(columns["omega_1"][:-1])) * dt)
        assert integral == pytest.approx(report.metrics["freq_abs_integral"], rel=1e-12)

        flows = columns["flow_1_2"]
        k = int(np.argmax(flows))
        assert flows[k] == pytest.approx(report.metrics["power_peak_value"], rel=1e-12)
        assert columns["t"][k] == report.metrics["power_peak_time"]

        # no control, power or energy after the last step
        assert np.isnan(columns["M_e_1"][-1]) and np.isnan(columns["E_1"][-1])
        assert columns["E_1"][-2] == pytest.approx(report.metrics["energy_final"]["1"])

    def test_frequency_weights_only_touch_weighted_metric(self, tmp_path):
        runner = ScenarioRunner()
        unit = runner.run(ScenarioLoader().from_dict(twobus_document()), tmp_path / "unit")
        heavy = runner.run(
            ScenarioLoader().from_dict(twobus_document(weights={"frequency": 2.5})), tmp_path / "heavy")
        assert heavy.metrics["freq_abs_integral"] == unit.metrics["freq_abs_integral"]
        assert unit.metrics["freq_weighted_integral"] == pytest.approx(unit.metrics["freq_abs_integral"])
        assert heavy.metrics["freq_weighted_integral"] == pytest.approx(
            2.5 * heavy.metrics["freq_abs_integral"], rel=1e-12)

    def test_dp_run_exports_tables(self, output_dir):
        scenario = ScenarioLoader().from_dict(twobus_document(solver="dp-levelset"))
        report = ScenarioRunner().run(scenario, output_dir, tables=True)
        assert (output_dir / config.tables_directory / config.tables_manifest_filename).exists()
        assert report.details["variant"] == "levelset"
        assert report.details["stages"] == 10

    def test_traj_opt_writes_history(self, output_dir):
        scenario = ScenarioLoader().from_dict(twobus_document(solver="traj-opt"))
        report = ScenarioRunner().run(scenario, output_dir)
        assert (output_dir / config.history_filename).exists()
        assert report.objective.total <= report.details["initial_objective"] + 1e-9

    def test_failed_run_removes_partial_outputs(self, twobus_scenario, output_dir, monkeypatch):
        def broken_save(self, data, filename=None):
            raise OSError("disk full")

        monkeypatch.setattr(OutputHandler, "save_json", broken_save)
        with pytest.raises(OSError):
            ScenarioRunner().run(twobus_scenario, output_dir)
        assert not (output_dir / config.trajectory_filename).exists()


class TestCompare:
    def test_same_case_different_solvers(self, twobus_scenario, tmp_path):
        a = ScenarioRunner().run(twobus_scenario, tmp_path / "a").to_dict()
        b = ScenarioRunner().run(twobus_scenario.with_overrides(solver=SolverKind.DP_LEVELSET),
                                 tmp_path / "b").to_dict()
        comparison = compare_reports(a, b)
        row = comparison["metrics"]["objective_total"]
        assert row["delta"] == pytest.approx(row["b"] - row["a"])
        assert row["lower"] in ("a", "b", "tie")
        assert "energy_final_1" in comparison["metrics"]

    def test_different_cases_are_incompatible(self, twobus_scenario, tmp_path):
        other = ScenarioLoader().from_dict(twobus_document(disturbance={"bus": 1, "delta_p": 0.2}))
        a = ScenarioRunner().run(twobus_scenario, tmp_path / "a").to_dict()
        b = ScenarioRunner().run(other, tmp_path / "b").to_dict()
        with pytest.raises(ValidationError):
            compare_reports(a, b)

    def test_identical_reports(self, twobus_scenario, tmp_path):
        report = ScenarioRunner().run(twobus_scenario, tmp_path).to_dict()
        comparison = compare_reports(report, report)
        assert all(row["delta"] in (0.0, None) for row in comparison["metrics"].values())


def test_zero_disturbance_stays_at_equilibrium(output_dir):
    document = twobus_document(disturbance={"bus": 1, "delta_p": 0.0},
                               weights={"frequency": 1.0}, limits={}, report_lines=[[1, 2]])
    report = ScenarioRunner().run(ScenarioLoader().from_dict(document), output_dir)
    columns = load_trajectory_csv(output_dir / config.trajectory_filename)
    np.testing.assert_array_equal(columns["omega_1"], 0.0)
    assert report.objective.total == 0.0
    assert report.metrics["power_peak_time"] == 0.0
