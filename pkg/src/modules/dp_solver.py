"""
Dynamic Programming Solver Module
Grid-based backward dynamic programming (basic and level-set variants) and
the forward rollout that extracts the optimal virtual inertia trajectory.
"""

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Protocol, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from src.config import config as settings
from src.modules.limits import CostModel
from src.modules.trajectory import (
    ObjectiveBreakdown,
    Trajectory,
    build_trajectory,
    objective_breakdown,
)
from src.utils.errors import GridError, IntegrationError, RolloutError
from src.utils.tracker import RunTracker

if TYPE_CHECKING:
    from src.modules.scenario import Scenario


class DPVariant(Enum):
    """Backward sweep variants."""
    BASIC = "basic"
    LEVELSET = "levelset"


@dataclass(frozen=True)
class AxisGrid:
    """Uniform grid on [lo, hi] with n points."""
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise GridError(f"axis needs at least 2 points, got {self.n}")
        if not self.lo < self.hi:
            raise GridError(f"axis needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    def contains(self, value: float, tolerance: float = 0.0) -> bool:
        slack = tolerance * (self.hi - self.lo)
        return self.lo - slack <= value <= self.hi + slack

    def to_dict(self) -> Dict:
        return {"lo": self.lo, "hi": self.hi, "n": self.n}


@dataclass(frozen=True)
class DPConfig:
    """Time discretization, state/control grids and the out-of-grid penalty."""
    ts: float
    t0: float
    t1: float
    state_axes: Tuple[AxisGrid, ...]
    control_axes: Tuple[AxisGrid, ...]
    my_inf: float
    variant: DPVariant = DPVariant.LEVELSET
    state_names: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.ts > 0:
            raise GridError("time step must be > 0")
        if not self.my_inf > 0:
            raise GridError("my_inf must be > 0")
        stage_count(self.t0, self.t1, self.ts)

    @property
    def n_stages(self) -> int:
        return stage_count(self.t0, self.t1, self.ts)

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        return tuple(axis.n for axis in self.state_axes)

    @property
    def lower(self) -> np.ndarray:
        return np.array([axis.lo for axis in self.state_axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([axis.hi for axis in self.state_axes])

    def grid_points(self) -> np.ndarray:
        """Cartesian state grid, row-major, shape (P, n_x)."""
        mesh = np.meshgrid(*[axis.points for axis in self.state_axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def control_grid(self) -> np.ndarray:
        """Cartesian control grid, row-major, shape (C, n_u)."""
        mesh = np.meshgrid(*[axis.points for axis in self.control_axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def covers(self, x: np.ndarray) -> bool:
        return all(axis.contains(v, settings.grid_tolerance) for axis, v in zip(self.state_axes, x))

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "ts": self.ts,
            "t0": self.t0,
            "t1": self.t1,
            "n_stages": self.n_stages,
            "variant": self.variant.value,
            "my_inf": self.my_inf,
            "state_axes": [dict(axis.to_dict(), name=name)
                           for axis, name in zip(self.state_axes, self._names())],
            "control_axes": [axis.to_dict() for axis in self.control_axes],
        }

    def _names(self) -> Tuple[str, ...]:
        return self.state_names or tuple(f"x{i}" for i in range(len(self.state_axes)))


def stage_count(t0: float, t1: float, ts: float) -> int:
    """
    Number of stages (t1 - t0) / ts.

    Raises:
        GridError: the horizon is not a positive integer multiple of ts.
    """
    ratio = (t1 - t0) / ts
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise GridError(f"horizon [{t0}, {t1}] is not a positive integer multiple of Ts={ts}")
    return n


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Cost-to-go J_k per stage (and level-set I_k for the level-set sweep)."""
    cost_to_go: np.ndarray
    level: Optional[np.ndarray] = None

    def penalized(self, my_inf: float) -> np.ndarray:
        """J_k with the my_inf owed by a positive level added back (all stages)."""
        if self.level is None:
            return self.cost_to_go
        return self.cost_to_go + my_inf * (self.level > 0)


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Minimizing flat control index per stage and grid point."""
    indices: np.ndarray
    controls: np.ndarray
    control_shape: Tuple[int, ...]

    def per_bus(self) -> np.ndarray:
        """Index along each control axis, shape (N, *grid_shape, n_u)."""
        return np.stack(np.unravel_index(self.indices, self.control_shape), axis=-1)


class GridProblem(Protocol):
    """
    A discrete-time problem the sweep can solve.

    `transition` maps states (..., n_x) and controls (..., n_u) to successor
    states and stage costs already multiplied by the step length. When
    `stationary` is true the transition is the same at every stage and is
    evaluated once.
    """
    stationary: bool

    def transition(self, stage: int, x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ...

    def terminal_charge(self, x: np.ndarray) -> np.ndarray:
        ...

    def terminal_penalty(self, x: np.ndarray) -> np.ndarray:
        ...

    def terminal_level(self, x: np.ndarray) -> np.ndarray:
        ...


@dataclass(frozen=True, eq=False)
class PowerGridProblem:
    """The virtual inertia problem with an Euler transition over one step."""
    model: CostModel
    ts: float
    stationary: bool = True

    def _split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n = self.model.network.n_delta
        return x[..., :n], x[..., n:]

    def transition(self, stage: int, x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        delta, omega = self._split(x)
        d_delta, d_omega = self.model.network.derivatives(delta, omega, u)
        delta_next = delta + self.ts * d_delta
        omega_next = omega + self.ts * d_omega
        p_r = self.model.terminal_power(omega, omega_next, u, self.ts)
        cost = (self.ts * self.model.stage_rate(delta, omega, u)
                + self.ts * self.model.penalty_rate(omega, p_r))
        return np.concatenate([delta_next, omega_next], axis=-1), cost

    def terminal_charge(self, x: np.ndarray) -> np.ndarray:
        return np.full(x.shape[:-1], self.model.terminal_charge)

    def terminal_penalty(self, x: np.ndarray) -> np.ndarray:
        return self.model.terminal_penalty(*self._split(x))

    def terminal_level(self, x: np.ndarray) -> np.ndarray:
        return self.model.terminal_level(*self._split(x))


@dataclass
class RolloutPath:
    """Raw forward pass: grid-space states and chosen controls."""
    states: np.ndarray
    controls: np.ndarray
    control_indices: np.ndarray
    stage_costs: np.ndarray


@dataclass
class DPResult:
    """Everything a DP solve produced."""
    config: DPConfig
    values: ValueTable
    policy: PolicyTable
    trajectory: Trajectory
    breakdown: ObjectiveBreakdown
    start_value: float
    timings: Dict[str, float] = field(default_factory=dict)


def discretize(scenario: "Scenario") -> DPConfig:
    """
    Build the DP discretization of a scenario.

    Raises:
        GridError: missing grid settings, a non-integer stage count, or an
            initial state the grid does not cover.
    """
    if scenario.grid is None:
        raise GridError("scenario has no dp grid section")
    horizon = scenario.horizon
    net = scenario.network
    missing = [name for name in net.state_names if name not in scenario.grid.state_axes]
    if missing:
        raise GridError(f"no grid axis for state(s) {missing}")
    unknown = [name for name in scenario.grid.state_axes if name not in net.state_names]
    if unknown:
        raise GridError(f"grid axis for unknown state(s) {unknown}")

    variant = DPVariant.BASIC if scenario.solver.value == "dp-basic" else DPVariant.LEVELSET
    dp_config = DPConfig(
        ts=horizon.ts,
        t0=horizon.t0,
        t1=horizon.t1,
        state_axes=tuple(scenario.grid.state_axes[name] for name in net.state_names),
        control_axes=tuple(
            AxisGrid(limits.m_min, limits.m_max, scenario.grid.control_points)
            for limits in scenario.storage_limits_ordered()
        ),
        my_inf=scenario.weights.my_inf,
        variant=variant,
        state_names=net.state_names,
    )

    x0 = scenario.initial_state().as_vector()
    if not dp_config.covers(x0):
        raise GridError(f"initial state {x0.tolist()} lies outside the state grid")
    return dp_config


class DPSolver:
    """Backward sweep and forward rollout on a Cartesian state grid."""

    def __init__(self, tracker: Optional[RunTracker] = None):
        """
        Initialize the solver.

        Args:
            tracker: Run tracker for progress and timings.
        """
        self.tracker = tracker or RunTracker.silent()

    def discretize(self, scenario: "Scenario") -> DPConfig:
        return discretize(scenario)

    def _interpolator(self, dp_config: DPConfig, values: np.ndarray) -> RegularGridInterpolator:
        return RegularGridInterpolator(
            tuple(axis.points for axis in dp_config.state_axes),
            values,
            method="linear",
            bounds_error=False,
            fill_value=None,
        )

    def _successors(
        self,
        dp_config: DPConfig,
        problem: GridProblem,
        stage: int,
        x: np.ndarray,
        controls: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Successors of states `x` (P, n_x) under every control.

        Returns:
            (successors, clamped successors, outside distance, stage cost),
            batch shape (P, C).
        """
        succ, cost = problem.transition(stage, x[:, None, :], controls[None, :, :])
        succ = np.broadcast_to(succ, (x.shape[0], controls.shape[0], x.shape[1]))
        cost = np.broadcast_to(cost, succ.shape[:-1])

        bad = np.argwhere(~(np.all(np.isfinite(succ), axis=-1) & np.isfinite(cost)))
        if bad.size:
            point, control = bad[0]
            raise IntegrationError(
                f"non-finite transition at stage {stage}, state {x[point].tolist()}, "
                f"control {controls[control].tolist()}")

        clamped = np.clip(succ, dp_config.lower, dp_config.upper)
        outside = np.linalg.norm(succ - clamped, axis=-1)
        span = dp_config.upper - dp_config.lower
        slack = settings.grid_tolerance * span
        beyond = np.any((succ < dp_config.lower - slack) | (succ > dp_config.upper + slack), axis=-1)
        outside = np.where(beyond, outside, 0.0)
        return succ, clamped, outside, cost

    def _choose(
        self,
        dp_config: DPConfig,
        cost: np.ndarray,
        clamped: np.ndarray,
        outside: np.ndarray,
        value_next: RegularGridInterpolator,
        level_next: Optional[RegularGridInterpolator]
    ) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """
        Pick the minimizing control for every row of a (P, C) candidate set.

        Returns:
            (control index, cost-to-go, level) per row; level is None for
            the basic variant. The level-set cost-to-go excludes the my_inf
            owed by a positive level.
        """
        q = cost + value_next(clamped) + dp_config.my_inf * (outside > 0)
        rows = np.arange(q.shape[0])

        if level_next is None:
            choice = np.argmin(q, axis=1)
            return choice, q[rows, choice], None

        # the terminal penalty travels in the level function, not in J
        level_at = level_next(clamped)
        q = q + dp_config.my_inf * (level_at > 0)
        choice = np.argmin(q, axis=1)
        level = np.where(outside > 0, np.maximum(level_at, 0.0) + outside, level_at).min(axis=1)
        return choice, q[rows, choice] - dp_config.my_inf * (level > 0), level

    def backward_sweep(
        self,
        dp_config: DPConfig,
        problem: GridProblem
    ) -> Tuple[ValueTable, PolicyTable]:
        """
        Backward recursion J_k(x) = min_u [cost_k(x, u) + J_{k+1}(f_k(x, u))].

        J_{k+1} is interpolated multilinearly. The basic variant charges
        my_inf for successors outside the grid and sets J_N = g_N + phi_N.
        The level-set variant sets J_N = g_N and carries the terminal
        window as I_N, propagated by I_k = min_u I_{k+1}(f_k(x, u)) (plus
        the distance for successors off the grid). Each control is charged
        my_inf when the interpolated I_{k+1} at its successor is positive,
        and J_k stores the result less the my_inf already implied by
        I_k > 0, so J_k + my_inf [I_k > 0] obeys the basic recursion while
        the window boundary is interpolated from I instead of from J.
        """
        n_stages = dp_config.n_stages
        shape = dp_config.grid_shape
        points = dp_config.grid_points()
        controls = dp_config.control_grid()
        levelset = dp_config.variant is DPVariant.LEVELSET

        values = np.empty((n_stages + 1,) + shape)
        levels = np.empty((n_stages + 1,) + shape) if levelset else None
        indices = np.empty((n_stages,) + shape, dtype=np.int64)

        if levelset:
            values[n_stages] = problem.terminal_charge(points).reshape(shape)
            levels[n_stages] = problem.terminal_level(points).reshape(shape)
        else:
            values[n_stages] = (problem.terminal_charge(points)
                                + problem.terminal_penalty(points)).reshape(shape)

        self.tracker.log_info(
            f"Backward sweep ({dp_config.variant.value}): {n_stages} stages, "
            f"{points.shape[0]} grid points, {controls.shape[0]} controls")

        cached = None
        with self.tracker.timed("sweep"):
            for k in range(n_stages - 1, -1, -1):
                if cached is None or not problem.stationary:
                    cached = self._successors(dp_config, problem, k, points, controls)
                _, clamped, outside, cost = cached

                choice, best, level = self._choose(
                    dp_config, cost, clamped, outside,
                    self._interpolator(dp_config, values[k + 1]),
                    self._interpolator(dp_config, levels[k + 1]) if levelset else None,
                )
                values[k] = best.reshape(shape)
                indices[k] = choice.reshape(shape)
                if levelset:
                    levels[k] = level.reshape(shape)

                self.tracker.progress("backward sweep", n_stages - k, n_stages, settings.dp_progress_every)

        control_shape = tuple(axis.n for axis in dp_config.control_axes)
        return ValueTable(values, levels), PolicyTable(indices, controls, control_shape)

    def rollout(
        self,
        tables: Tuple[ValueTable, PolicyTable],
        x0: np.ndarray,
        dp_config: DPConfig,
        problem: GridProblem
    ) -> RolloutPath:
        """
        Forward pass from x0, re-optimizing over the full control grid at
        every stage against the interpolated cost-to-go.

        Raises:
            GridError: x0 lies outside the grid.
            RolloutError: the path leaves the grid.
        """
        values, _ = tables
        x = np.asarray(x0, dtype=float)
        if not dp_config.covers(x):
            raise GridError(f"initial state {x.tolist()} lies outside the state grid")

        controls = dp_config.control_grid()
        levelset = dp_config.variant is DPVariant.LEVELSET
        n_stages = dp_config.n_stages
        states = [x]
        chosen = []
        costs = []

        with self.tracker.timed("rollout"):
            for k in range(n_stages):
                succ, clamped, outside, cost = self._successors(dp_config, problem, k, x[None, :], controls)
                choice, _, _ = self._choose(
                    dp_config, cost, clamped, outside,
                    self._interpolator(dp_config, values.cost_to_go[k + 1]),
                    self._interpolator(dp_config, values.level[k + 1]) if levelset else None,
                )
                c = int(choice[0])
                if outside[0, c] > 0:
                    raise RolloutError("trajectory leaves the state grid", k, succ[0, c])
                x = succ[0, c]
                states.append(x)
                chosen.append(c)
                costs.append(float(cost[0, c]))

        self.tracker.log_debug(f"Rollout finished after {n_stages} stages")
        return RolloutPath(
            states=np.array(states),
            controls=controls[np.array(chosen, dtype=int)] if chosen else np.empty((0, controls.shape[1])),
            control_indices=np.array(chosen, dtype=int),
            stage_costs=np.array(costs),
        )

    def start_value(self, values: ValueTable, dp_config: DPConfig, x0: np.ndarray) -> float:
        """Interpolated J_0 at x0, plus my_inf where the interpolated I_0 is positive."""
        x0 = np.asarray(x0, dtype=float)[None, :]
        value = float(self._interpolator(dp_config, values.cost_to_go[0])(x0)[0])
        if values.level is not None and self._interpolator(dp_config, values.level[0])(x0)[0] > 0:
            value += dp_config.my_inf
        return value

    def solve(self, scenario: "Scenario") -> DPResult:
        """Discretize, sweep and roll out a scenario."""
        with self.tracker.timed("discretize"):
            dp_config = self.discretize(scenario)
            model = scenario.cost_model()
            problem = PowerGridProblem(model, dp_config.ts)
            x0 = scenario.initial_state().as_vector()
            if model.weights.energy > 0:
                self.tracker.log_warning(
                    "energy weight is only charged on the rolled-out trajectory; the DP does not track energy")

        timings_before = dict(self.tracker.timings)
        tables = self.backward_sweep(dp_config, problem)
        path = self.rollout(tables, x0, dp_config, problem)

        n = model.network.n_delta
        times = dp_config.t0 + dp_config.ts * np.arange(dp_config.n_stages + 1)
        trajectory = build_trajectory(model, times, path.states[:, :n], path.states[:, n:], path.controls)
        breakdown = objective_breakdown(trajectory, model)
        start = self.start_value(tables[0], dp_config, x0)

        self.tracker.log_info(
            f"DP {dp_config.variant.value}: total {breakdown.total:.6f} "
            f"(stage {breakdown.stage_integral:.6f}, terminal {breakdown.terminal_penalty:.6f}, "
            f"constraints {breakdown.constraint_penalty:.6f}), J0(x0) {start:.6f}")

        timings = {key: self.tracker.timings[key] - timings_before.get(key, 0.0)
                   for key in ("sweep", "rollout") if key in self.tracker.timings}
        return DPResult(
            config=dp_config,
            values=tables[0],
            policy=tables[1],
            trajectory=trajectory,
            breakdown=breakdown,
            start_value=start,
            timings=timings,
        )


def export_tables(result: DPResult, directory: Path) -> List[Path]:
    """
    Write J_k (and I_k) per stage as CSV, row-major over the state grid,
    plus a manifest describing axes and variant.

    Returns:
        Paths of every file written, manifest last.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dp_config = result.config
    names = list(dp_config._names())
    points = dp_config.grid_points()
    written = []

    for k in range(dp_config.n_stages + 1):
        path = directory / f"stage_{k:04d}.csv"
        columns = names + ["J"] + (["I"] if result.values.level is not None else [])
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(columns)
            flat_j = result.values.cost_to_go[k].ravel()
            flat_i = result.values.level[k].ravel() if result.values.level is not None else None
            for p in range(points.shape[0]):
                row = [repr(float(v)) for v in points[p]] + [repr(float(flat_j[p]))]
                if flat_i is not None:
                    row.append(repr(float(flat_i[p])))
                writer.writerow(row)
        written.append(path)

    manifest = directory / settings.tables_manifest_filename
    with open(manifest, "w", encoding="utf-8") as f:
        json.dump(dict(dp_config.to_dict(), files=[p.name for p in written]), f, indent=2)
    written.append(manifest)
    return written
