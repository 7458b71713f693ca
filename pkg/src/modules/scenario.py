"""
Scenario Module
Scenario documents: loading with field-path validation, writing, hashing
and the pre-run checks behind the `validate` command.
"""

import hashlib
import json
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from src.config import config
from src.modules.dp_solver import AxisGrid, discretize, stage_count
from src.modules.limits import (
    CostModel,
    FlowObjective,
    FrequencyLimits,
    ObjectiveWeights,
    PenaltyMode,
    StorageLimits,
)
from src.modules.network import (
    Bus,
    BusKind,
    Integrator,
    Line,
    NetworkModel,
    SystemState,
    calibrate_susceptances,
    equilibrium_residual,
    solve_equilibrium,
)
from src.modules.traj_opt import ControlSchedule, OptimizerConfig
from src.utils.errors import ScenarioError, ValidationError
from src.utils.tracker import RunTracker


class SolverKind(Enum):
    """Solver a scenario runs with."""
    DP_BASIC = "dp-basic"
    DP_LEVELSET = "dp-levelset"
    TRAJ_OPT = "traj-opt"
    SIMULATE = "simulate-only"

    @property
    def uses_grid(self) -> bool:
        return self in (SolverKind.DP_BASIC, SolverKind.DP_LEVELSET)


class InitialSource(Enum):
    """Where the initial state comes from."""
    EQUILIBRIUM = "equilibrium"  # Newton on the pre-disturbance network
    TABLE = "table"              # stored network angles, omega = 0
    EXPLICIT = "explicit"        # values in the scenario


@dataclass(frozen=True)
class Disturbance:
    """Step change of P0 at one bus, applied at t0 and held."""
    bus: int
    delta_p: float

    def to_dict(self) -> Dict:
        return {"bus": self.bus, "delta_p": self.delta_p}


@dataclass(frozen=True)
class Horizon:
    """Time window [t0, t1] split into stages of length ts."""
    t0: float
    t1: float
    ts: float

    @property
    def n_steps(self) -> int:
        return stage_count(self.t0, self.t1, self.ts)

    def to_dict(self) -> Dict:
        return {"t0": self.t0, "t1": self.t1, "ts": self.ts}


@dataclass(frozen=True)
class InitialCondition:
    source: InitialSource = InitialSource.EQUILIBRIUM
    delta: Mapping[int, float] = field(default_factory=dict)
    omega: Mapping[int, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        data = {"source": self.source.value}
        if self.source is InitialSource.EXPLICIT:
            data["delta"] = {str(k): v for k, v in self.delta.items()}
            data["omega"] = {str(k): v for k, v in self.omega.items()}
        return data


@dataclass(frozen=True)
class GridSettings:
    """DP state axes keyed by state name, and control points per storage bus."""
    state_axes: Mapping[str, AxisGrid]
    control_points: int

    def to_dict(self) -> Dict:
        return {
            "state_axes": {name: axis.to_dict() for name, axis in self.state_axes.items()},
            "control_points": self.control_points,
        }


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    A complete, validated run description.

    `network` is the pre-disturbance network; `disturbed_network` has the
    step applied and is what every solver integrates.
    """
    name: str
    network: NetworkModel
    disturbance: Disturbance
    horizon: Horizon
    initial: InitialCondition
    weights: ObjectiveWeights
    frequency_limits: FrequencyLimits
    storage_limits: Tuple[StorageLimits, ...]
    solver: SolverKind
    grid: Optional[GridSettings] = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    initial_inertia: Mapping[int, float] = field(default_factory=dict)
    report_lines: Tuple[Tuple[int, int], ...] = ()
    network_angles: Mapping[int, float] = field(default_factory=dict)
    network_path: Optional[Path] = None
    calibrate: bool = False
    description: str = ""

    @cached_property
    def disturbed_network(self) -> NetworkModel:
        return self.network.with_injection_change(self.disturbance.bus, self.disturbance.delta_p)

    def storage_limits_ordered(self) -> Tuple[StorageLimits, ...]:
        by_bus = {s.bus: s for s in self.storage_limits}
        return tuple(by_bus[b] for b in self.network.storage_ids)

    def cost_model(self) -> CostModel:
        return self._cost_model

    @cached_property
    def _cost_model(self) -> CostModel:
        return CostModel.build(self.disturbed_network, self.weights, self.frequency_limits, self.storage_limits)

    def initial_state(self) -> SystemState:
        return self._initial_state

    @cached_property
    def _initial_state(self) -> SystemState:
        if self.initial.source is InitialSource.EXPLICIT:
            return SystemState.from_mapping(self.network, self.initial.delta, self.initial.omega)
        table = SystemState.from_mapping(self.network, self.network_angles)
        if self.initial.source is InitialSource.TABLE:
            return table
        return solve_equilibrium(self.network, initial=table)

    def initial_schedule(self) -> ControlSchedule:
        """Constant schedule at the initial inertia of every storage bus."""
        limits = self.storage_limits_ordered()
        lower = [s.m_min for s in limits]
        upper = [s.m_max for s in limits]
        values = []
        for s in limits:
            if s.bus in self.initial_inertia:
                values.append(self.initial_inertia[s.bus])
            elif s.bus in self.weights.desired_inertia:
                values.append(self.weights.desired_inertia[s.bus])
            else:
                values.append(s.m_min)
        return ControlSchedule.constant(self.horizon.n_steps, lower, upper, values)

    def flow_lines(self) -> Tuple[Tuple[int, int], ...]:
        """Lines reported in metrics and CSV: the flow objective line first."""
        lines = []
        if self.weights.flow is not None:
            lines.append((self.weights.flow.from_bus, self.weights.flow.to_bus))
        for line in self.report_lines:
            if tuple(line) not in lines:
                lines.append(tuple(line))
        return tuple(lines)

    def with_overrides(
        self,
        solver: Optional[SolverKind] = None,
        seed: Optional[int] = None,
        substeps: Optional[int] = None
    ) -> "Scenario":
        """Copy with command-line overrides applied."""
        optimizer = self.optimizer
        if seed is not None:
            optimizer = replace(optimizer, seed=seed)
        if substeps is not None:
            optimizer = replace(optimizer, substeps=substeps)
        result = replace(self, solver=solver or self.solver, optimizer=optimizer)
        _check_consistency(result)
        return result

    def to_dict(self, base_dir: Optional[Path] = None) -> Dict:
        """
        Convert to the scenario document layout.

        Args:
            base_dir: Directory the document will live in; a network loaded
                from a file is referenced relative to it. Inlined otherwise.
        """
        if self.network_path is not None and base_dir is not None:
            network: Union[str, Dict] = Path(os.path.relpath(self.network_path, base_dir)).as_posix()
        else:
            network = network_document(self.network, self.network_angles, self.calibrate)

        data = {
            "name": self.name,
            "description": self.description,
            "network": network,
            "disturbance": self.disturbance.to_dict(),
            "horizon": self.horizon.to_dict(),
            "initial_state": self.initial.to_dict(),
            "storage": [s.to_dict() for s in self.storage_limits],
            "weights": self.weights.to_dict(),
            "limits": self.frequency_limits.to_dict(),
            "solver": self.solver.value,
            "optimizer": self.optimizer.to_dict(),
            "initial_inertia": {str(k): v for k, v in self.initial_inertia.items()},
            "report_lines": [list(line) for line in self.report_lines],
        }
        if self.grid is not None:
            data["dp"] = self.grid.to_dict()
        return _finite_json(data)


def network_document(net: NetworkModel, angles: Mapping[int, float], calibrate: bool = False) -> Dict:
    """Network in its document layout, stored angles included."""
    data = net.to_dict()
    for bus in data["buses"]:
        if bus["id"] in angles:
            bus["angle"] = angles[bus["id"]]
    if calibrate:
        data["calibrate"] = True
    return data


def _finite_json(value: Any) -> Any:
    """Replace infinities with None (JSON has no infinity)."""
    if isinstance(value, float) and math.isinf(value):
        return None
    if isinstance(value, dict):
        return {k: _finite_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_json(v) for v in value]
    return value


def _canonical(data: Dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def scenario_hash(scenario: Scenario) -> str:
    """Hash of every solver-relevant field (name and description excluded)."""
    data = scenario.to_dict()
    data.pop("name")
    data.pop("description")
    return hashlib.sha256(_canonical(data).encode("utf-8")).hexdigest()[:16]


def case_hash(scenario: Scenario) -> str:
    """Hash of the physical case: network, disturbance, horizon, initial state and limits."""
    data = scenario.to_dict()
    keys = ("network", "disturbance", "horizon", "initial_state", "storage", "limits")
    return hashlib.sha256(_canonical({k: data[k] for k in keys}).encode("utf-8")).hexdigest()[:16]


# ---- loading ----------------------------------------------------------------


@contextmanager
def _section(path: str) -> Iterator[None]:
    """Re-raise validation failures of nested constructors under a field path."""
    try:
        yield
    except ScenarioError:
        raise
    except (ValidationError, ValueError, TypeError) as e:
        raise ScenarioError(path, str(e)) from e


def _require(data: Mapping, key: str, path: str) -> Any:
    if not isinstance(data, Mapping):
        raise ScenarioError(path, "expected an object")
    if key not in data:
        raise ScenarioError(f"{path}.{key}" if path else key, "required field missing")
    return data[key]


def _object(value: Any, path: str) -> Mapping:
    if not isinstance(value, Mapping):
        raise ScenarioError(path, "expected an object")
    return value


def _number(value: Any, path: str, default: Optional[float] = None) -> float:
    """A finite number; None maps to `default` (an error when no default)."""
    if value is None:
        if default is None:
            raise ScenarioError(path, "expected a number")
        return default
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioError(path, "expected a finite number")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(path, f"expected an integer, got {value!r}")
    return value


def _bus_id(value: Any, path: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ScenarioError(path, f"expected a bus id, got {value!r}") from None


def _bus_map(value: Any, path: str, all_ids: Tuple[int, ...] = ()) -> Dict[int, float]:
    """Per-bus numbers; a single number applies to every id in `all_ids`."""
    if value is None:
        return {}
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return {b: _number(value, path) for b in all_ids}
    if not isinstance(value, Mapping):
        raise ScenarioError(path, "expected a number or an object keyed by bus id")
    return {_bus_id(k, f"{path}.{k}"): _number(v, f"{path}.{k}") for k, v in value.items()}


def _enum(enum_type, value: Any, path: str):
    try:
        return enum_type(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_type)
        raise ScenarioError(path, f"expected one of {allowed}, got {value!r}") from None


def parse_network(data: Mapping, path: str = "network") -> Tuple[NetworkModel, Dict[int, float], bool]:
    """
    Build a network from its document.

    Injections are given as `P0` (p.u.) or `P0_mw` (converted with base_mva).
    With `calibrate` set, line susceptances are recomputed so the stored
    angles are an equilibrium.

    Returns:
        (network, stored angles, calibrate flag)
    """
    base_mva = _number(data.get("base_mva"), f"{path}.base_mva", config.default_base_mva)
    buses = []
    angles: Dict[int, float] = {}
    raw_buses = _require(data, "buses", path)
    if not isinstance(raw_buses, list) or not raw_buses:
        raise ScenarioError(f"{path}.buses", "expected a non-empty list")

    for i, raw in enumerate(raw_buses):
        bus_path = f"{path}.buses[{i}]"
        bus_id = _integer(_require(raw, "id", bus_path), f"{bus_path}.id")
        kind = _enum(BusKind, _require(raw, "kind", bus_path), f"{bus_path}.kind")
        if "P0_mw" in raw:
            injection = _number(raw["P0_mw"], f"{bus_path}.P0_mw") / base_mva
        else:
            injection = _number(raw.get("P0"), f"{bus_path}.P0", 0.0)
        with _section(bus_path):
            buses.append(Bus(
                id=bus_id,
                kind=kind,
                inertia=_number(raw.get("M"), f"{bus_path}.M", 0.0),
                damping=_number(raw.get("D"), f"{bus_path}.D", 0.0),
                injection=injection,
            ))
        if raw.get("angle") is not None:
            angles[bus_id] = _number(raw["angle"], f"{bus_path}.angle")

    lines = []
    raw_lines = _require(data, "lines", path)
    if not isinstance(raw_lines, list):
        raise ScenarioError(f"{path}.lines", "expected a list")
    for i, raw in enumerate(raw_lines):
        line_path = f"{path}.lines[{i}]"
        length = _object(raw, line_path).get("length_km")
        with _section(line_path):
            lines.append(Line(
                from_bus=_integer(_require(raw, "from", line_path), f"{line_path}.from"),
                to_bus=_integer(_require(raw, "to", line_path), f"{line_path}.to"),
                susceptance=_number(_require(raw, "b", line_path), f"{line_path}.b"),
                length_km=None if length is None else _number(length, f"{line_path}.length_km"),
                transformer=bool(raw.get("transformer", False)),
            ))

    with _section(path):
        net = NetworkModel(
            buses=tuple(buses),
            lines=tuple(lines),
            reference_bus=_integer(_require(data, "reference_bus", path), f"{path}.reference_bus"),
            base_mva=base_mva,
        )
        calibrate = bool(data.get("calibrate", False))
        if calibrate:
            net = calibrate_susceptances(net, SystemState.from_mapping(net, angles))
    return net, angles, calibrate


def _parse_flow(raw: Any, path: str) -> Optional[FlowObjective]:
    if raw is None:
        return None
    line = _require(raw, "line", path)
    if not isinstance(line, list) or len(line) != 2:
        raise ScenarioError(f"{path}.line", "expected [from_bus, to_bus]")
    return FlowObjective(
        from_bus=_integer(line[0], f"{path}.line[0]"),
        to_bus=_integer(line[1], f"{path}.line[1]"),
        threshold=_number(_require(raw, "threshold", path), f"{path}.threshold"),
        weight=_number(raw.get("weight"), f"{path}.weight", 1.0),
    )


def _parse_weights(raw: Mapping, net: NetworkModel) -> ObjectiveWeights:
    path = "weights"
    with _section(path):
        return ObjectiveWeights(
            inertia=_bus_map(raw.get("inertia"), f"{path}.inertia", net.storage_ids),
            desired_inertia=_bus_map(raw.get("desired_inertia"), f"{path}.desired_inertia", net.storage_ids),
            frequency=_bus_map(raw.get("frequency"), f"{path}.frequency", net.omega_ids),
            angle=_bus_map(raw.get("angle"), f"{path}.angle", net.delta_ids),
            power_upper=_bus_map(raw.get("power_upper"), f"{path}.power_upper", net.storage_ids),
            power_lower=_bus_map(raw.get("power_lower"), f"{path}.power_lower", net.storage_ids),
            energy=_number(raw.get("energy"), f"{path}.energy", 0.0),
            my_inf=_number(raw.get("my_inf"), f"{path}.my_inf", 1.0),
            terminal_charge=_number(raw.get("terminal_charge"), f"{path}.terminal_charge", 0.0),
            flow=_parse_flow(raw.get("flow"), f"{path}.flow"),
        )


def _parse_limits(raw: Mapping, net: NetworkModel) -> FrequencyLimits:
    path = "limits"
    window = raw.get("terminal_omega")
    if window is None:
        terminal_omega = (-math.inf, math.inf)
    else:
        if not isinstance(window, list) or len(window) != 2:
            raise ScenarioError(f"{path}.terminal_omega", "expected [lo, hi]")
        terminal_omega = (_number(window[0], f"{path}.terminal_omega[0]", -math.inf),
                          _number(window[1], f"{path}.terminal_omega[1]", math.inf))
    terminal_delta = {}
    for key, bounds in _object(raw.get("terminal_delta") or {}, f"{path}.terminal_delta").items():
        item = f"{path}.terminal_delta.{key}"
        if not isinstance(bounds, list) or len(bounds) != 2:
            raise ScenarioError(item, "expected [lo, hi]")
        terminal_delta[_bus_id(key, item)] = (_number(bounds[0], f"{item}[0]", -math.inf),
                                              _number(bounds[1], f"{item}[1]", math.inf))
    with _section(path):
        return FrequencyLimits(
            omega_max=_bus_map(raw.get("omega_max"), f"{path}.omega_max", net.omega_ids),
            terminal_omega=terminal_omega,
            terminal_delta=terminal_delta,
            penalty_mode=_enum(PenaltyMode, raw.get("penalty_mode", "indicator"), f"{path}.penalty_mode"),
        )


def _parse_storage(raw: Any) -> Tuple[StorageLimits, ...]:
    if not isinstance(raw, list):
        raise ScenarioError("storage", "expected a list")
    limits = []
    for i, item in enumerate(raw):
        path = f"storage[{i}]"
        with _section(path):
            limits.append(StorageLimits(
                bus=_integer(_require(item, "bus", path), f"{path}.bus"),
                m_min=_number(_require(item, "m_min", path), f"{path}.m_min"),
                m_max=_number(_require(item, "m_max", path), f"{path}.m_max"),
                p_e=_number(item.get("p_e"), f"{path}.p_e", 0.0),
                p_min=_number(item.get("p_min"), f"{path}.p_min", -math.inf),
                p_max=_number(item.get("p_max"), f"{path}.p_max", math.inf),
                e_min=_number(item.get("e_min"), f"{path}.e_min", -math.inf),
                e_max=_number(item.get("e_max"), f"{path}.e_max", math.inf),
            ))
    return tuple(limits)


def _parse_grid(raw: Any) -> Optional[GridSettings]:
    if raw is None:
        return None
    axes = {}
    for name, axis in _object(_require(raw, "state_axes", "dp"), "dp.state_axes").items():
        path = f"dp.state_axes.{name}"
        with _section(path):
            axes[name] = AxisGrid(
                lo=_number(_require(axis, "lo", path), f"{path}.lo"),
                hi=_number(_require(axis, "hi", path), f"{path}.hi"),
                n=_integer(_require(axis, "n", path), f"{path}.n"),
            )
    points = _integer(_require(raw, "control_points", "dp"), "dp.control_points")
    if points < 2:
        raise ScenarioError("dp.control_points", "need at least 2 control points")
    return GridSettings(axes, points)


def _parse_optimizer(raw: Optional[Mapping]) -> OptimizerConfig:
    raw = dict(raw or {})
    known = set(OptimizerConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ScenarioError(f"optimizer.{unknown[0]}", "unknown setting")
    if "integrator" in raw:
        raw["integrator"] = _enum(Integrator, raw["integrator"], "optimizer.integrator")
    with _section("optimizer"):
        return OptimizerConfig(**raw)


def _parse_initial(raw: Optional[Mapping]) -> InitialCondition:
    raw = _object(raw or {}, "initial_state")
    source = _enum(InitialSource, raw.get("source", "equilibrium"), "initial_state.source")
    if source is not InitialSource.EXPLICIT:
        return InitialCondition(source)
    return InitialCondition(
        source,
        _bus_map(raw.get("delta"), "initial_state.delta"),
        _bus_map(raw.get("omega"), "initial_state.omega"),
    )


def _check_consistency(scenario: Scenario) -> None:
    """Cross-reference checks that need the whole scenario."""
    net = scenario.network
    if scenario.disturbance.bus not in net.bus_ids:
        raise ScenarioError("disturbance.bus", f"unknown bus {scenario.disturbance.bus}")

    storage_buses = [s.bus for s in scenario.storage_limits]
    for i, bus_id in enumerate(storage_buses):
        if bus_id not in net.storage_ids:
            raise ScenarioError(f"storage[{i}].bus", f"bus {bus_id} is not a storage bus")
    missing = [b for b in net.storage_ids if b not in storage_buses]
    if missing or len(set(storage_buses)) != len(storage_buses):
        raise ScenarioError("storage", f"need exactly one entry per storage bus {list(net.storage_ids)}")

    horizon = scenario.horizon
    with _section("horizon"):
        stage_count(horizon.t0, horizon.t1, horizon.ts)

    for bus_id, value in scenario.initial_inertia.items():
        limits = {s.bus: s for s in scenario.storage_limits}.get(bus_id)
        if limits is None:
            raise ScenarioError(f"initial_inertia.{bus_id}", "not a storage bus")
        if not limits.m_min <= value <= limits.m_max:
            raise ScenarioError(f"initial_inertia.{bus_id}", "outside [m_min, m_max]")

    for i, line in enumerate(scenario.report_lines):
        with _section(f"report_lines[{i}]"):
            net.line(*line)

    if scenario.initial.source is InitialSource.EXPLICIT:
        with _section("initial_state"):
            SystemState.from_mapping(net, scenario.initial.delta, scenario.initial.omega)

    with _section("weights"):
        scenario.cost_model()

    if scenario.solver.uses_grid:
        if scenario.grid is None:
            raise ScenarioError("dp", f"required for solver {scenario.solver.value}")
        for name in net.state_names:
            if name not in scenario.grid.state_axes:
                raise ScenarioError(f"dp.state_axes.{name}", "required field missing")
        for name in scenario.grid.state_axes:
            if name not in net.state_names:
                raise ScenarioError(f"dp.state_axes.{name}", "no such state")


class ScenarioLoader:
    """Reads scenario documents and resolves their network references."""

    def __init__(self, tracker: Optional[RunTracker] = None):
        self.tracker = tracker or RunTracker.silent()

    def load(self, path: Union[str, Path]) -> Scenario:
        """
        Load and validate a scenario document.

        Raises:
            ScenarioError: schema violation, with the offending field path.
        """
        path = Path(path)
        data = self._read_json(path, "")
        scenario = self.from_dict(data, base_dir=path.parent)
        self.tracker.log_info(f"Loaded scenario '{scenario.name}' ({scenario_hash(scenario)}) from {path}")
        return scenario

    def _read_json(self, path: Path, field_path: str) -> Dict:
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError:
            raise ScenarioError(field_path or str(path), f"file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ScenarioError(field_path or str(path), f"invalid JSON: {e}") from e

    def from_dict(self, data: Mapping, base_dir: Optional[Path] = None) -> Scenario:
        """Build a scenario from an already parsed document."""
        if not isinstance(data, Mapping):
            raise ScenarioError("", "scenario document must be an object")
        base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

        raw_network = _require(data, "network", "")
        network_path = None
        if isinstance(raw_network, str):
            network_path = (base_dir / raw_network).resolve()
            raw_network = self._read_json(network_path, "network")
        net, angles, calibrate = parse_network(raw_network)

        raw_disturbance = _object(_require(data, "disturbance", ""), "disturbance")
        if "delta_p_mw" in raw_disturbance:
            delta_p = _number(raw_disturbance["delta_p_mw"], "disturbance.delta_p_mw") / net.base_mva
        else:
            delta_p = _number(_require(raw_disturbance, "delta_p", "disturbance"), "disturbance.delta_p")
        disturbance = Disturbance(
            bus=_integer(_require(raw_disturbance, "bus", "disturbance"), "disturbance.bus"),
            delta_p=delta_p,
        )

        raw_horizon = _object(_require(data, "horizon", ""), "horizon")
        horizon = Horizon(
            t0=_number(raw_horizon.get("t0"), "horizon.t0", 0.0),
            t1=_number(_require(raw_horizon, "t1", "horizon"), "horizon.t1"),
            ts=_number(_require(raw_horizon, "ts", "horizon"), "horizon.ts"),
        )
        if not horizon.ts > 0:
            raise ScenarioError("horizon.ts", "must be > 0")

        report_lines = []
        for i, line in enumerate(data.get("report_lines") or []):
            if not isinstance(line, list) or len(line) != 2:
                raise ScenarioError(f"report_lines[{i}]", "expected [from_bus, to_bus]")
            report_lines.append((_integer(line[0], f"report_lines[{i}][0]"),
                                 _integer(line[1], f"report_lines[{i}][1]")))

        scenario = Scenario(
            name=str(data.get("name", "scenario")),
            description=str(data.get("description", "")),
            network=net,
            disturbance=disturbance,
            horizon=horizon,
            initial=_parse_initial(data.get("initial_state")),
            weights=_parse_weights(_object(data.get("weights") or {}, "weights"), net),
            frequency_limits=_parse_limits(_object(data.get("limits") or {}, "limits"), net),
            storage_limits=_parse_storage(_require(data, "storage", "")),
            solver=_enum(SolverKind, data.get("solver", "simulate-only"), "solver"),
            grid=_parse_grid(data.get("dp")),
            optimizer=_parse_optimizer(data.get("optimizer")),
            initial_inertia=_bus_map(data.get("initial_inertia"), "initial_inertia", net.storage_ids),
            report_lines=tuple(report_lines),
            network_angles=angles,
            network_path=network_path,
            calibrate=calibrate,
        )
        _check_consistency(scenario)
        return scenario


def load_scenario(path: Union[str, Path], tracker: Optional[RunTracker] = None) -> Scenario:
    """Load a scenario document (see ScenarioLoader.load)."""
    return ScenarioLoader(tracker).load(path)


def write_scenario(scenario: Scenario, path: Union[str, Path]) -> Path:
    """Write a scenario document; a file-backed network stays a relative reference."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario.to_dict(base_dir=path.parent.resolve()), f, indent=2)
    return path


def validate_scenario(scenario: Scenario) -> Dict:
    """
    Pre-run checks reported by the `validate` command.

    Raises:
        ValidationError: the initial state is off the DP grid.
        ConvergenceError: the equilibrium cannot be solved.
    """
    x0 = scenario.initial_state()
    summary = {
        "name": scenario.name,
        "scenario_hash": scenario_hash(scenario),
        "case_hash": case_hash(scenario),
        "solver": scenario.solver.value,
        "buses": len(scenario.network.buses),
        "lines": len(scenario.network.lines),
        "storage_buses": list(scenario.network.storage_ids),
        "stages": scenario.horizon.n_steps,
        "injection_imbalance": scenario.network.injection_imbalance(),
        "initial_residual": equilibrium_residual(scenario.network, x0),
        "balanced": abs(scenario.network.injection_imbalance()) <= config.balance_tolerance,
    }
    if scenario.solver.uses_grid:
        dp_config = discretize(scenario)
        summary["grid_points"] = int(np.prod(dp_config.grid_shape))
        summary["controls"] = int(np.prod([axis.n for axis in dp_config.control_axes]))
    return summary


def bundled_scenarios() -> List[Path]:
    """Scenario documents shipped with the package."""
    return sorted(Path(config.scenario_directory).glob("*.json"))
