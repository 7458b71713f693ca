"""
Trajectory Optimizer Module
Single-shooting trajectory optimization over piecewise-constant virtual
inertia schedules: batched rollouts, central finite-difference gradients
and a projected gradient loop with backtracking.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np

from src.config import config
from src.modules.limits import CostModel
from src.modules.network import Integrator, SystemState, step
from src.modules.trajectory import (
    ObjectiveBreakdown,
    Trajectory,
    build_trajectory,
    objective_terms,
)
from src.utils.errors import InertiaControlError, OptimizationError, ValidationError
from src.utils.tracker import RunTracker

if TYPE_CHECKING:
    from src.modules.scenario import Scenario


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """
    Piecewise-constant virtual inertia: one value per stage and storage bus,
    held over [k Ts, (k+1) Ts).
    """
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, ndmin=2)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if values.shape[-1] != lower.shape[-1] or lower.shape != upper.shape:
            raise ValidationError("schedule values and bounds cover different storage buses")
        if np.any(values < lower) or np.any(values > upper):
            raise ValidationError("schedule values must lie within their bounds")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def constant(cls, n_stages: int, lower: np.ndarray, upper: np.ndarray, value) -> "ControlSchedule":
        """Schedule holding `value` (scalar or per bus) at every stage."""
        lower = np.asarray(lower, dtype=float)
        row = np.broadcast_to(np.asarray(value, dtype=float), lower.shape)
        return cls(np.tile(row, (n_stages, 1)), lower, np.asarray(upper, dtype=float))

    @property
    def n_stages(self) -> int:
        return self.values.shape[0]

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def project(self, values: np.ndarray) -> "ControlSchedule":
        """Clip `values` onto the bounds of this schedule."""
        return ControlSchedule(np.clip(values, self.lower, self.upper), self.lower, self.upper)

    def to_dict(self) -> Dict:
        return {
            "values": self.values.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }


@dataclass(frozen=True)
class OptimizerConfig:
    """Projected gradient settings; defaults come from the global config."""
    max_iterations: int = config.max_iterations
    initial_step: float = config.initial_step
    step_shrink: float = config.step_shrink
    step_growth: float = config.step_growth
    max_backtracks: int = config.max_backtracks
    fd_relative_step: float = config.fd_relative_step
    tolerance: float = config.convergence_tolerance
    integrator: Integrator = Integrator(config.integrator)
    substeps: int = config.substeps
    seed: int = 0
    multi_start: bool = False
    jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "integrator", Integrator(self.integrator))
        if self.max_iterations < 0 or self.max_backtracks < 1 or self.substeps < 1:
            raise ValidationError("iteration, backtrack and substep counts must be positive")
        if not self.fd_relative_step > 0 or not self.tolerance > 0:
            raise ValidationError("finite-difference step and tolerance must be > 0")
        if not 0 < self.step_shrink < 1 or self.step_growth < 1 or not self.initial_step > 0:
            raise ValidationError("need 0 < step_shrink < 1, step_growth >= 1, initial_step > 0")
        if self.jitter < 0:
            raise ValidationError("jitter must be >= 0")

    def to_dict(self) -> Dict:
        return {
            "max_iterations": self.max_iterations,
            "initial_step": self.initial_step,
            "step_shrink": self.step_shrink,
            "step_growth": self.step_growth,
            "max_backtracks": self.max_backtracks,
            "fd_relative_step": self.fd_relative_step,
            "tolerance": self.tolerance,
            "integrator": self.integrator.value,
            "substeps": self.substeps,
            "seed": self.seed,
            "multi_start": self.multi_start,
            "jitter": self.jitter,
        }


@dataclass
class Evaluation:
    """Objective of one schedule and the trajectory it produced."""
    objective: float
    breakdown: ObjectiveBreakdown
    trajectory: Trajectory


@dataclass
class HistoryRow:
    """One accepted iterate."""
    iteration: int
    objective: float
    step: float
    gradient_norm: float
    start: str = "initial"

    def to_dict(self) -> Dict:
        return {
            "start": self.start,
            "iteration": self.iteration,
            "objective": self.objective,
            "step": self.step,
            "gradient_norm": self.gradient_norm,
        }


@dataclass
class OptimizationResult:
    """Best schedule over all starts, its evaluation and the full history."""
    best: ControlSchedule
    evaluation: Evaluation
    history: List[HistoryRow] = field(default_factory=list)
    start_label: str = "initial"
    initial_objective: float = float("nan")


class TrajectoryOptimizer:
    """Rolls out schedules and improves them by projected gradient descent."""

    def __init__(
        self,
        model: CostModel,
        x0: SystemState,
        t0: float,
        ts: float,
        cfg: Optional[OptimizerConfig] = None,
        tracker: Optional[RunTracker] = None
    ):
        """
        Initialize the optimizer.

        Args:
            model: Cost model on the disturbed network.
            x0: Initial state.
            t0: Start time (s).
            ts: Stage length (s).
            cfg: Optimizer settings.
            tracker: Run tracker for iteration logs.
        """
        self.model = model
        self.x0 = x0
        self.t0 = t0
        self.ts = ts
        self.cfg = cfg or OptimizerConfig()
        self.tracker = tracker or RunTracker.silent()

    @classmethod
    def from_scenario(
        cls,
        scenario: "Scenario",
        cfg: Optional[OptimizerConfig] = None,
        tracker: Optional[RunTracker] = None
    ) -> "TrajectoryOptimizer":
        return cls(
            scenario.cost_model(),
            scenario.initial_state(),
            scenario.horizon.t0,
            scenario.horizon.ts,
            cfg or scenario.optimizer,
            tracker,
        )

    # ---- rollouts ----------------------------------------------------------

    def rollout(self, controls: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Integrate a batch of schedules.

        Args:
            controls: Shape (B, N, n_storage).

        Returns:
            (delta, omega) sampled at the stage boundaries, shapes
            (B, N+1, n_delta) and (B, N+1, n_omega).
        """
        net = self.model.network
        batch, n_stages, _ = controls.shape
        dt = self.ts / self.cfg.substeps
        state = SystemState(
            np.broadcast_to(self.x0.delta, (batch, net.n_delta)),
            np.broadcast_to(self.x0.omega, (batch, net.n_omega)),
        )
        deltas = [state.delta]
        omegas = [state.omega]
        for k in range(n_stages):
            for _ in range(self.cfg.substeps):
                state = step(state, controls[:, k, :], dt, net, self.cfg.integrator)
            deltas.append(state.delta)
            omegas.append(state.omega)
        return np.stack(deltas, axis=1), np.stack(omegas, axis=1)

    def objectives(self, controls: np.ndarray) -> np.ndarray:
        """Objective of every schedule in a (B, N, n_storage) batch."""
        delta, omega = self.rollout(controls)
        power = self.model.terminal_power(omega[:, :-1], omega[:, 1:], controls, self.ts)
        stage, terminal, penalty = objective_terms(self.model, delta, omega, controls, power, self.ts)
        return stage + terminal + penalty

    def evaluate(self, schedule: ControlSchedule) -> Evaluation:
        """Roll out one schedule and evaluate its objective."""
        controls = schedule.values[None, :, :]
        delta, omega = self.rollout(controls)
        times = self.t0 + self.ts * np.arange(schedule.n_stages + 1)
        trajectory = build_trajectory(self.model, times, delta[0], omega[0], schedule.values)
        stage, terminal, penalty = objective_terms(
            self.model, trajectory.delta, trajectory.omega,
            trajectory.controls, trajectory.power, self.ts)
        breakdown = ObjectiveBreakdown.from_parts(float(stage), float(terminal), float(penalty))
        return Evaluation(breakdown.total, breakdown, trajectory)

    # ---- gradient ------------------------------------------------------------

    def gradient(
        self,
        schedule: ControlSchedule,
        h: Optional[np.ndarray] = None
    ) -> np.ndarray:
        """
        Central finite-difference gradient, one-sided where a bound is
        closer than h. All perturbed schedules run as one batch.

        Args:
            schedule: Point of evaluation.
            h: Step per storage bus (defaults to fd_relative_step x range).

        Returns:
            Sensitivities, same shape as `schedule.values`.
        """
        h = self.cfg.fd_relative_step * schedule.span if h is None else np.broadcast_to(h, schedule.span.shape)
        values = schedule.values
        n = values.size
        flat = values.ravel()
        steps = np.tile(h, values.shape[0])

        can_up = flat + steps <= np.tile(schedule.upper, values.shape[0])
        can_down = flat - steps >= np.tile(schedule.lower, values.shape[0])
        plus = np.repeat(flat[None, :], n, axis=0)
        minus = plus.copy()
        index = np.arange(n)
        plus[index, index] += np.where(can_up, steps, 0.0)
        minus[index, index] -= np.where(can_down, steps, 0.0)

        f = self.objectives(np.concatenate([plus, minus]).reshape((2 * n,) + values.shape))
        f_plus, f_minus = f[:n], f[n:]
        denominator = np.where(can_up, steps, 0.0) + np.where(can_down, steps, 0.0)
        # pinned entries (zero range) have no sensitivity
        grad = np.divide(f_plus - f_minus, denominator,
                         out=np.zeros(n), where=denominator > 0)
        return grad.reshape(values.shape)

    # ---- optimization --------------------------------------------------------

    def _descend(self, initial: ControlSchedule, label: str) -> Tuple[ControlSchedule, float, List[HistoryRow]]:
        """Projected gradient descent from one start."""
        cfg = self.cfg
        current = initial
        iteration = 0
        try:
            objective = float(self.objectives(current.values[None])[0])
        except InertiaControlError as e:
            raise OptimizationError(f"evaluation of start '{label}' failed: {e}", iteration) from e

        history = [HistoryRow(0, objective, 0.0, 0.0, label)]
        step_size = cfg.initial_step

        for iteration in range(1, cfg.max_iterations + 1):
            try:
                grad = self.gradient(current)
            except InertiaControlError as e:
                raise OptimizationError(f"gradient evaluation failed: {e}", iteration) from e

            scaled = grad * current.span
            norm = float(np.max(np.abs(scaled)))
            if not norm > 0:
                break
            direction = -scaled / norm * current.span

            accepted = None
            for _ in range(cfg.max_backtracks):
                candidate = current.project(current.values + step_size * direction)
                try:
                    value = float(self.objectives(candidate.values[None])[0])
                except InertiaControlError as e:
                    raise OptimizationError(f"evaluation failed: {e}", iteration) from e
                if value < objective:
                    accepted = (candidate, value)
                    break
                step_size *= cfg.step_shrink

            if accepted is None:
                self.tracker.log_debug(f"[{label}] no decrease found at iteration {iteration}")
                break

            decrease = objective - accepted[1]
            current, objective = accepted
            history.append(HistoryRow(iteration, objective, step_size, norm, label))
            self.tracker.log_debug(
                f"[{label}] iteration {iteration}: objective {objective:.9f}, step {step_size:.4g}, "
                f"gradient {norm:.4g}")
            if decrease < cfg.tolerance:
                break
            step_size = min(step_size * cfg.step_growth, 1.0)

        return current, objective, history

    def starts(self, initial: ControlSchedule) -> List[Tuple[str, ControlSchedule]]:
        """Initial schedule, then constant and jittered starts when enabled."""
        starts = [("initial", initial)]
        if self.cfg.multi_start:
            n = initial.n_stages
            starts.append(("m_min", ControlSchedule.constant(n, initial.lower, initial.upper, initial.lower)))
            weighted = self.model.a > 0
            if np.any(weighted):
                desired = np.where(weighted, self.model.m_desired, 0.5 * (initial.lower + initial.upper))
                starts.append(("m_desired", initial.project(np.tile(desired, (n, 1)))))
            starts.append(("m_max", ControlSchedule.constant(n, initial.lower, initial.upper, initial.upper)))
        if self.cfg.jitter > 0:
            rng = np.random.default_rng(self.cfg.seed)
            noise = rng.uniform(-1.0, 1.0, initial.values.shape) * self.cfg.jitter * initial.span
            starts.append(("jitter", initial.project(initial.values + noise)))
        return starts

    def optimize(self, initial: ControlSchedule) -> OptimizationResult:
        """
        Run projected gradient descent from every start and keep the best
        (earliest start wins ties). The result never has a higher objective
        than `initial`.
        """
        self.tracker.log_info(
            f"Optimizing {initial.values.size} schedule entries "
            f"({initial.n_stages} stages x {initial.values.shape[1]} storage)")
        history: List[HistoryRow] = []
        best = None
        initial_objective = float("nan")

        with self.tracker.timed("optimize"):
            for label, start in self.starts(initial):
                schedule, objective, rows = self._descend(start, label)
                history.extend(rows)
                if label == "initial":
                    initial_objective = rows[0].objective
                self.tracker.log_info(
                    f"Start '{label}': {rows[0].objective:.6f} -> {objective:.6f} after {rows[-1].iteration} iterations")
                if best is None or objective < best[1]:
                    best = (schedule, objective, label)

        schedule, _, label = best
        evaluation = self.evaluate(schedule)
        self.tracker.log_info(f"Best start '{label}' with objective {evaluation.objective:.6f}")
        return OptimizationResult(
            best=schedule,
            evaluation=evaluation,
            history=history,
            start_label=label,
            initial_objective=initial_objective,
        )


def simulate(schedule: ControlSchedule, scenario: "Scenario", tracker: Optional[RunTracker] = None) -> Evaluation:
    """Evaluate a fixed schedule without optimizing it."""
    return TrajectoryOptimizer.from_scenario(scenario, tracker=tracker).evaluate(schedule)


def write_history(history: List[HistoryRow], path: Path) -> Path:
    """Write optimizer history as CSV (start, iteration, objective, step, gradient_norm)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["start", "iteration", "objective", "step", "gradient_norm"])
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.to_dict().items()})
    return path
