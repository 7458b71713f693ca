"""
Limits and Metrics Module
Constraint definitions, their penalty encodings, and trajectory metrics
shared by the DP solver, the trajectory optimizer and the reports.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.modules.network import (
    ControlLike,
    NetworkModel,
    SystemState,
    storage_terminal_power,
)
from src.utils.errors import StructuralError

if TYPE_CHECKING:
    from src.modules.trajectory import Trajectory


class PenaltyMode(Enum):
    """How a violated frequency bound is charged."""
    INDICATOR = "indicator"  # MyInf once, if any bus is out of bounds
    HINGE = "hinge"          # MyInf per unit of excess, summed over buses


@dataclass(frozen=True)
class FrequencyLimits:
    """
    Frequency deviation bounds and the terminal windows checked at t_1.

    Buses missing from `omega_max` are unbounded; `terminal_delta` holds an
    optional final angle range per bus.
    """
    omega_max: Mapping[int, float] = field(default_factory=dict)
    terminal_omega: Tuple[float, float] = (-math.inf, math.inf)
    terminal_delta: Mapping[int, Tuple[float, float]] = field(default_factory=dict)
    penalty_mode: PenaltyMode = PenaltyMode.INDICATOR

    def __post_init__(self):
        for bus_id, bound in self.omega_max.items():
            if not bound > 0:
                raise StructuralError(f"omega_max of bus {bus_id} must be > 0")
        lo, hi = self.terminal_omega
        if not lo < hi:
            raise StructuralError("terminal frequency window needs lo < hi")
        for bus_id, (lo, hi) in self.terminal_delta.items():
            if not lo < hi:
                raise StructuralError(f"terminal angle window of bus {bus_id} needs lo < hi")

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "omega_max": {str(k): v for k, v in self.omega_max.items()},
            "terminal_omega": list(self.terminal_omega),
            "terminal_delta": {str(k): list(v) for k, v in self.terminal_delta.items()},
            "penalty_mode": self.penalty_mode.value,
        }


@dataclass(frozen=True)
class StorageLimits:
    """Control range, power and energy limits of one storage unit."""
    bus: int
    m_min: float
    m_max: float
    p_e: float = 0.0
    p_min: float = -math.inf
    p_max: float = math.inf
    e_min: float = -math.inf
    e_max: float = math.inf

    def __post_init__(self):
        if not 0 < self.m_min < self.m_max:
            raise StructuralError(f"storage {self.bus}: need 0 < m_min < m_max")
        if not self.p_min < self.p_max:
            raise StructuralError(f"storage {self.bus}: need p_min < p_max")
        if not self.e_min < self.e_max:
            raise StructuralError(f"storage {self.bus}: need e_min < e_max")

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "bus": self.bus,
            "m_min": self.m_min,
            "m_max": self.m_max,
            "p_e": self.p_e,
            "p_min": self.p_min,
            "p_max": self.p_max,
            "e_min": self.e_min,
            "e_max": self.e_max,
        }


@dataclass(frozen=True)
class FlowObjective:
    """Hinge on the flow from `from_bus` to `to_bus` above `threshold`."""
    from_bus: int
    to_bus: int
    threshold: float
    weight: float = 1.0

    def to_dict(self) -> Dict:
        return {
            "line": [self.from_bus, self.to_bus],
            "threshold": self.threshold,
            "weight": self.weight,
        }


@dataclass(frozen=True)
class ObjectiveWeights:
    """
    Objective and penalty weights.

    Attributes:
        inertia: a_s per storage bus.
        desired_inertia: M_d per storage bus (needed where a_s > 0).
        frequency: b_i per bus with a frequency state.
        angle: c_i per non-reference bus.
        power_upper: weight on P^r above p_max per storage bus.
        power_lower: weight on P^r below p_min per storage bus.
        energy: weight on final energy outside [e_min, e_max].
        my_inf: penalty for a violated frequency bound or terminal window.
        terminal_charge: constant cost g_N charged at the final stage.
        flow: optional line-flow hinge.
    """
    inertia: Mapping[int, float] = field(default_factory=dict)
    desired_inertia: Mapping[int, float] = field(default_factory=dict)
    frequency: Mapping[int, float] = field(default_factory=dict)
    angle: Mapping[int, float] = field(default_factory=dict)
    power_upper: Mapping[int, float] = field(default_factory=dict)
    power_lower: Mapping[int, float] = field(default_factory=dict)
    energy: float = 0.0
    my_inf: float = 1.0
    terminal_charge: float = 0.0
    flow: Optional[FlowObjective] = None

    def __post_init__(self):
        for name in ("inertia", "frequency", "angle", "power_upper", "power_lower"):
            for bus_id, value in getattr(self, name).items():
                if value < 0:
                    raise StructuralError(f"{name} weight of bus {bus_id} must be >= 0")
        if self.energy < 0 or self.terminal_charge < 0:
            raise StructuralError("energy weight and terminal charge must be >= 0")
        if not self.my_inf > 0:
            raise StructuralError("my_inf must be > 0")
        if self.flow is not None and self.flow.weight < 0:
            raise StructuralError("flow weight must be >= 0")

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        def keyed(mapping):
            return {str(k): v for k, v in mapping.items()}

        return {
            "inertia": keyed(self.inertia),
            "desired_inertia": keyed(self.desired_inertia),
            "frequency": keyed(self.frequency),
            "angle": keyed(self.angle),
            "power_upper": keyed(self.power_upper),
            "power_lower": keyed(self.power_lower),
            "energy": self.energy,
            "my_inf": self.my_inf,
            "terminal_charge": self.terminal_charge,
            "flow": self.flow.to_dict() if self.flow else None,
        }


def _resolve(
    mapping: Mapping[int, float],
    ids: Sequence[int],
    net: NetworkModel,
    name: str,
    default: float = 0.0
) -> np.ndarray:
    """Turn a per-bus mapping into an array aligned with `ids`."""
    for bus_id in mapping:
        net.bus(bus_id)
        if bus_id not in ids:
            raise StructuralError(f"{name}: bus {bus_id} has no matching state or control")
    return np.array([float(mapping.get(b, default)) for b in ids], dtype=float)


@dataclass(frozen=True, eq=False)
class CostModel:
    """
    Weights and limits resolved against one network into aligned arrays.

    All methods broadcast over leading batch dimensions. Build it with
    `CostModel.build`.
    """
    network: NetworkModel
    weights: ObjectiveWeights
    frequency_limits: FrequencyLimits
    storage_limits: Tuple[StorageLimits, ...]
    a: np.ndarray
    m_desired: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d_upper: np.ndarray
    d_lower: np.ndarray
    m_min: np.ndarray
    m_max: np.ndarray
    p_e: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray
    e_min: np.ndarray
    e_max: np.ndarray
    storage_damping: np.ndarray
    omega_max: np.ndarray
    delta_lo: np.ndarray
    delta_hi: np.ndarray

    @classmethod
    def build(
        cls,
        net: NetworkModel,
        weights: ObjectiveWeights,
        frequency_limits: FrequencyLimits,
        storage_limits: Sequence[StorageLimits]
    ) -> "CostModel":
        """
        Resolve weights and limits against `net`.

        Raises:
            StructuralError: unknown bus ids, weights on buses without the
                matching state, missing storage limits, or a flow objective
                on a line that does not exist.
        """
        by_bus = {s.bus: s for s in storage_limits}
        if len(by_bus) != len(storage_limits):
            raise StructuralError("storage limits listed twice for one bus")
        for bus_id in by_bus:
            if bus_id not in net.storage_ids:
                raise StructuralError(f"storage limits given for non-storage bus {bus_id}")
        missing = [b for b in net.storage_ids if b not in by_bus]
        if missing:
            raise StructuralError(f"no control bounds for storage bus(es) {missing}")
        ordered = tuple(by_bus[b] for b in net.storage_ids)

        a = _resolve(weights.inertia, net.storage_ids, net, "inertia")
        m_desired = _resolve(weights.desired_inertia, net.storage_ids, net, "desired_inertia")
        lacking = [b for b, w in zip(net.storage_ids, a) if w > 0 and b not in weights.desired_inertia]
        if lacking:
            raise StructuralError(f"desired_inertia missing for weighted storage bus(es) {lacking}")

        if weights.flow is not None:
            net.line_index(weights.flow.from_bus, weights.flow.to_bus)

        delta_windows = frequency_limits.terminal_delta
        for bus_id in delta_windows:
            net.delta_index(bus_id)
        delta_lo = np.array([delta_windows.get(b, (-math.inf, math.inf))[0] for b in net.delta_ids])
        delta_hi = np.array([delta_windows.get(b, (-math.inf, math.inf))[1] for b in net.delta_ids])

        def storage_field(name: str) -> np.ndarray:
            return np.array([getattr(s, name) for s in ordered], dtype=float)

        return cls(
            network=net,
            weights=weights,
            frequency_limits=frequency_limits,
            storage_limits=ordered,
            a=a,
            m_desired=m_desired,
            b=_resolve(weights.frequency, net.omega_ids, net, "frequency"),
            c=_resolve(weights.angle, net.delta_ids, net, "angle"),
            d_upper=_resolve(weights.power_upper, net.storage_ids, net, "power_upper"),
            d_lower=_resolve(weights.power_lower, net.storage_ids, net, "power_lower"),
            m_min=storage_field("m_min"),
            m_max=storage_field("m_max"),
            p_e=storage_field("p_e"),
            p_min=storage_field("p_min"),
            p_max=storage_field("p_max"),
            e_min=storage_field("e_min"),
            e_max=storage_field("e_max"),
            storage_damping=np.array([net.bus(b).damping for b in net.storage_ids], dtype=float),
            omega_max=_resolve(frequency_limits.omega_max, net.omega_ids, net, "omega_max", math.inf),
            delta_lo=delta_lo,
            delta_hi=delta_hi,
        )

    @property
    def my_inf(self) -> float:
        return self.weights.my_inf

    @property
    def terminal_charge(self) -> float:
        return self.weights.terminal_charge

    def with_network(self, net: NetworkModel) -> "CostModel":
        """Same weights and limits resolved against another network."""
        return CostModel.build(net, self.weights, self.frequency_limits, self.storage_limits)

    def flow(self, delta: np.ndarray) -> np.ndarray:
        """Flow on the objective line, in its configured direction."""
        target = self.weights.flow
        return self.network.flow_between(delta, target.from_bus, target.to_bus)

    def stage_rate(self, delta: np.ndarray, omega: np.ndarray, m_e: np.ndarray) -> np.ndarray:
        """Running cost g_k before multiplication by the step length."""
        rate = (np.sum(self.a * (m_e - self.m_desired) ** 2, axis=-1)
                + np.sum(self.b * np.abs(omega), axis=-1)
                + np.sum(self.c * delta ** 2, axis=-1))
        target = self.weights.flow
        if target is not None and target.weight > 0:
            rate = rate + target.weight * np.maximum(self.flow(delta) - target.threshold, 0.0)
        return rate

    def terminal_power(
        self,
        omega: np.ndarray,
        omega_next: np.ndarray,
        m_e: np.ndarray,
        dt: float
    ) -> np.ndarray:
        """P^r over one step for every storage unit."""
        slots = self.network.storage_slots
        return storage_terminal_power(
            omega[..., slots], omega_next[..., slots], m_e, dt, self.storage_damping, self.p_e)

    def penalty_rate(self, omega: np.ndarray, p_r: np.ndarray) -> np.ndarray:
        """Penalty phi_k before multiplication by the step length."""
        penalty = (np.sum(self.d_upper * np.maximum(p_r - self.p_max, 0.0), axis=-1)
                   + np.sum(self.d_lower * np.maximum(self.p_min - p_r, 0.0), axis=-1))
        excess = np.maximum(np.abs(omega) - self.omega_max, 0.0)
        if self.frequency_limits.penalty_mode is PenaltyMode.HINGE:
            penalty = penalty + self.my_inf * np.sum(excess, axis=-1)
        else:
            penalty = penalty + self.my_inf * np.any(excess > 0, axis=-1)
        return penalty

    def terminal_level(self, delta: np.ndarray, omega: np.ndarray) -> np.ndarray:
        """
        Signed box distance to the terminal windows, <= 0 exactly inside.
        Returns -1 when no terminal window is bounded.
        """
        lo, hi = self.frequency_limits.terminal_omega
        distances = np.concatenate([
            np.maximum(lo - omega, omega - hi),
            np.maximum(self.delta_lo - delta, delta - self.delta_hi),
        ], axis=-1)
        level = np.max(distances, axis=-1, initial=-math.inf)
        return np.where(np.isfinite(level), level, -1.0)

    def terminal_penalty(self, delta: np.ndarray, omega: np.ndarray) -> np.ndarray:
        """phi_N: MyInf outside the terminal windows, 0 inside."""
        return self.my_inf * (self.terminal_level(delta, omega) > 0)

    def energy_penalty(self, energy_final: np.ndarray) -> np.ndarray:
        """Hinge on the final cumulative energy of every storage unit."""
        if self.weights.energy == 0:
            return np.zeros(np.shape(energy_final)[:-1])
        excess = (np.maximum(energy_final - self.e_max, 0.0)
                  + np.maximum(self.e_min - energy_final, 0.0))
        return self.weights.energy * np.sum(excess, axis=-1)

    def energy_violations(self, energy_final: np.ndarray) -> Dict[int, float]:
        """Storage buses whose final energy lies outside [e_min, e_max]."""
        excess = (np.maximum(energy_final - self.e_max, 0.0)
                  + np.maximum(self.e_min - energy_final, 0.0))
        return {b: float(v) for b, v in zip(self.network.storage_ids, excess) if v > 0}


def stage_cost(state: SystemState, u: ControlLike, model: CostModel, dt: float) -> Union[float, np.ndarray]:
    """dt * [inertia deviation + weighted |omega| + weighted delta^2 + flow hinge]."""
    rate = model.stage_rate(state.delta, state.omega, model.network.control_array(u))
    return _scalar(dt * rate)


def stage_penalty(
    state: SystemState,
    u: ControlLike,
    p_r: np.ndarray,
    model: CostModel
) -> Union[float, np.ndarray]:
    """
    Penalty rate for power limits and frequency bounds; zero exactly when
    every encoded constraint holds. Multiply by the step length to charge it.
    """
    model.network.control_array(u)
    return _scalar(model.penalty_rate(state.omega, np.asarray(p_r, dtype=float)))


def terminal_cost(state: SystemState, model: CostModel) -> Union[float, np.ndarray]:
    """MyInf if the final state misses a terminal window, else 0."""
    return _scalar(model.terminal_penalty(state.delta, state.omega))


def terminal_level(state: SystemState, model: CostModel) -> Union[float, np.ndarray]:
    return _scalar(model.terminal_level(state.delta, state.omega))


def freq_abs_integral(traj: "Trajectory", weights: Optional[np.ndarray] = None) -> float:
    """
    Sum over steps k < N and frequency buses of b_i |omega_i(k)| dt.
    Unit weights when `weights` is omitted.

    Raises:
        ValueError: the trajectory has no steps.
    """
    if traj.n_steps == 0:
        raise ValueError("trajectory has no steps")
    b = np.ones(traj.omega.shape[-1]) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(b * np.abs(traj.omega[:-1])) * traj.dt)


def energy_series(p_r: np.ndarray, dt: float) -> np.ndarray:
    """Running sums of P^r dt along the time axis (axis 0)."""
    return np.cumsum(np.asarray(p_r, dtype=float) * dt, axis=0)


@dataclass(frozen=True)
class PowerPeak:
    """Largest sampled line flow and the earliest time it occurs."""
    value: float
    time: float

    def to_dict(self) -> Dict:
        return {"value": self.value, "time": self.time}


def power_peak(traj: "Trajectory", line: Tuple[int, int]) -> PowerPeak:
    """
    Peak flow from line[0] to line[1] over all samples.

    Raises:
        StructuralError: the line is not in the trajectory's network.
    """
    flows = traj.network.flow_between(traj.delta, line[0], line[1])
    k = int(np.argmax(flows))
    return PowerPeak(value=float(flows[k]), time=float(traj.times[k]))


def _scalar(value: np.ndarray) -> Union[float, np.ndarray]:
    return float(value) if np.ndim(value) == 0 else value
