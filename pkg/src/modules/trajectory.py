"""
Trajectory Module
Sampled state/control trajectories and the objective breakdown shared by
both solvers and the reports.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from src.modules.limits import CostModel, energy_series
from src.modules.network import NetworkModel, SystemState


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    States at the N+1 sample times and the N piecewise-constant controls.

    Attributes:
        network: Network the trajectory was produced on (disturbance applied).
        times: Sample times, shape (N+1,).
        delta: Angles, shape (N+1, n_delta).
        omega: Frequency deviations, shape (N+1, n_omega).
        controls: Virtual inertia per step, shape (N, n_storage).
        power: Storage terminal power P^r per step, shape (N, n_storage).
    """
    network: NetworkModel
    times: np.ndarray
    delta: np.ndarray
    omega: np.ndarray
    controls: np.ndarray
    power: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.n_steps else 0.0

    @property
    def energy(self) -> np.ndarray:
        """Cumulative storage energy after each step, shape (N, n_storage)."""
        return energy_series(self.power, self.dt)

    @property
    def energy_final(self) -> np.ndarray:
        if self.n_steps == 0:
            return np.zeros(self.network.n_storage)
        return self.energy[-1]

    def state(self, k: int) -> SystemState:
        return SystemState(self.delta[k], self.omega[k])

    @property
    def final_state(self) -> SystemState:
        return self.state(self.n_steps)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Objective split into its parts; `total` is their sum."""
    stage_integral: float
    terminal_penalty: float
    constraint_penalty: float
    total: float

    @classmethod
    def from_parts(cls, stage_integral: float, terminal_penalty: float,
                   constraint_penalty: float) -> "ObjectiveBreakdown":
        return cls(
            stage_integral=stage_integral,
            terminal_penalty=terminal_penalty,
            constraint_penalty=constraint_penalty,
            total=stage_integral + terminal_penalty + constraint_penalty,
        )

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "stage_integral": self.stage_integral,
            "terminal_penalty": self.terminal_penalty,
            "constraint_penalty": self.constraint_penalty,
            "total": self.total,
        }


def build_trajectory(
    model: CostModel,
    times: np.ndarray,
    delta: np.ndarray,
    omega: np.ndarray,
    controls: np.ndarray
) -> Trajectory:
    """Assemble a trajectory and derive its storage power series."""
    times = np.asarray(times, dtype=float)
    controls = np.asarray(controls, dtype=float)
    dt = float(times[1] - times[0]) if len(times) > 1 else 1.0
    power = model.terminal_power(omega[:-1], omega[1:], controls, dt)
    return Trajectory(
        network=model.network,
        times=times,
        delta=np.asarray(delta, dtype=float),
        omega=np.asarray(omega, dtype=float),
        controls=controls,
        power=np.asarray(power, dtype=float).reshape(controls.shape),
    )


def objective_terms(
    model: CostModel,
    delta: np.ndarray,
    omega: np.ndarray,
    controls: np.ndarray,
    power: np.ndarray,
    dt: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Stage integral, terminal part and constraint penalty of sampled
    trajectories with time on axis -2 (leading axes are batch axes).
    Stage terms use the left end of each step.
    """
    stage = dt * np.sum(model.stage_rate(delta[..., :-1, :], omega[..., :-1, :], controls), axis=-1)
    penalty = dt * np.sum(model.penalty_rate(omega[..., :-1, :], power), axis=-1)
    if power.shape[-2]:
        penalty = penalty + model.energy_penalty(np.cumsum(power * dt, axis=-2)[..., -1, :])
    terminal = model.terminal_charge + model.terminal_penalty(delta[..., -1, :], omega[..., -1, :])
    return stage, terminal, penalty


def objective_breakdown(traj: Trajectory, model: CostModel) -> ObjectiveBreakdown:
    """Evaluate the objective of a stored trajectory."""
    stage, terminal, penalty = objective_terms(
        model, traj.delta, traj.omega, traj.controls, traj.power, traj.dt)
    return ObjectiveBreakdown.from_parts(float(stage), float(terminal), float(penalty))
