"""
Network Model Module
Lossless structure-preserving network with storage-emulated virtual inertia.

Buses with inertia (generators, motor loads, storage) follow the swing
equation; loads without inertia follow the first-order angle equation. The
reference bus is an infinite bus: it carries no state and contributes a zero
angle to every line flow.

Every array-level routine broadcasts over leading batch dimensions, so a
single call can evaluate many (state, control) pairs at once.
"""

from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from src.config import config
from src.utils.errors import (
    ConvergenceError,
    DynamicsError,
    IntegrationError,
    StructuralError,
    ValidationError,
)


class BusKind(Enum):
    """Role of a bus in the network."""
    GENERATOR = "generator"
    LOAD = "load"
    STORAGE = "storage"
    REFERENCE = "reference"


class Integrator(Enum):
    """Fixed-step integration methods."""
    EULER = "euler"
    RK4 = "rk4"


@dataclass(frozen=True)
class Bus:
    """
    A network bus.

    `inertia` is M in seconds for generators and motor loads; storage inertia
    is a control input and is never stored here. `injection` is P0 in p.u.
    """
    id: int
    kind: BusKind
    inertia: float = 0.0
    damping: float = 0.0
    injection: float = 0.0

    def __post_init__(self):
        if self.inertia < 0 or self.damping < 0:
            raise StructuralError(f"bus {self.id}: inertia and damping must be non-negative")
        if self.kind is BusKind.GENERATOR and not self.inertia > 0:
            raise StructuralError(f"bus {self.id}: generator needs inertia M > 0")
        if self.kind is BusKind.LOAD and not self.damping > 0:
            raise StructuralError(f"bus {self.id}: load needs damping D > 0")
        if self.kind is BusKind.STORAGE and self.inertia:
            raise StructuralError(f"bus {self.id}: storage inertia is a control input, not a parameter")

    @property
    def second_order(self) -> bool:
        """True when the bus carries a frequency state (swing dynamics)."""
        if self.kind is BusKind.LOAD:
            return self.inertia > 0
        return self.kind in (BusKind.GENERATOR, BusKind.STORAGE)

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "id": self.id,
            "kind": self.kind.value,
            "M": self.inertia,
            "D": self.damping,
            "P0": self.injection,
        }


@dataclass(frozen=True)
class Line:
    """A lossless line; flow(from -> to) = b * sin(delta_from - delta_to)."""
    from_bus: int
    to_bus: int
    susceptance: float
    length_km: Optional[float] = None
    transformer: bool = False

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise StructuralError(f"line {self.from_bus}-{self.to_bus}: self-loop")
        if not self.susceptance > 0:
            raise StructuralError(f"line {self.from_bus}-{self.to_bus}: susceptance must be > 0")

    @property
    def key(self) -> frozenset:
        """Unordered endpoint pair."""
        return frozenset((self.from_bus, self.to_bus))

    def nominal_susceptance(self) -> float:
        """Susceptance implied by length and transformer data (current b if none given)."""
        if self.length_km is None and not self.transformer:
            return self.susceptance
        reactance = (self.length_km or 0.0) * config.line_reactance_per_km
        if self.transformer:
            reactance += config.transformer_reactance
        return 1.0 / reactance

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        data = {"from": self.from_bus, "to": self.to_bus, "b": self.susceptance}
        if self.length_km is not None:
            data["length_km"] = self.length_km
        if self.transformer:
            data["transformer"] = True
        return data


@dataclass(frozen=True, eq=False)
class SystemState:
    """
    Reduced system state: angles of every non-reference bus and frequency
    deviations of every bus with swing dynamics, in bus-id order.
    """
    delta: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))

    @classmethod
    def from_vector(cls, x: np.ndarray, n_delta: int) -> "SystemState":
        """Split a stacked [delta, omega] vector."""
        x = np.asarray(x, dtype=float)
        return cls(x[..., :n_delta], x[..., n_delta:])

    @classmethod
    def from_mapping(
        cls,
        net: "NetworkModel",
        delta: Mapping[int, float],
        omega: Optional[Mapping[int, float]] = None
    ) -> "SystemState":
        """Build a state from per-bus values; missing buses default to zero."""
        omega = omega or {}
        for bus_id in list(delta) + list(omega):
            net.bus(bus_id)
        return cls(
            [float(delta.get(b, 0.0)) for b in net.delta_ids],
            [float(omega.get(b, 0.0)) for b in net.omega_ids],
        )

    def as_vector(self) -> np.ndarray:
        """Stack into [delta, omega] along the last axis."""
        batch = np.broadcast_shapes(self.delta.shape[:-1], self.omega.shape[:-1])
        return np.concatenate([
            np.broadcast_to(self.delta, batch + self.delta.shape[-1:]),
            np.broadcast_to(self.omega, batch + self.omega.shape[-1:]),
        ], axis=-1)

    def is_close(self, other: "SystemState", atol: float) -> bool:
        """Componentwise comparison."""
        return (np.allclose(self.delta, other.delta, rtol=0.0, atol=atol)
                and np.allclose(self.omega, other.omega, rtol=0.0, atol=atol))


@dataclass(frozen=True)
class ControlInput:
    """Virtual inertia M_e (seconds) per storage bus."""
    m_e: Mapping[int, float]

    @classmethod
    def uniform(cls, net: "NetworkModel", value: float) -> "ControlInput":
        return cls({bus_id: float(value) for bus_id in net.storage_ids})

    def as_array(self, net: "NetworkModel") -> np.ndarray:
        missing = [b for b in net.storage_ids if b not in self.m_e]
        if missing:
            raise DynamicsError(f"no virtual inertia given for storage bus(es) {missing}")
        return np.array([float(self.m_e[b]) for b in net.storage_ids])


ControlLike = Union[ControlInput, np.ndarray, Sequence[float], float]


@dataclass(frozen=True)
class NetworkModel:
    """Buses, lossless lines and the reference (infinite) bus."""
    buses: Tuple[Bus, ...]
    lines: Tuple[Line, ...]
    reference_bus: int
    base_mva: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(sorted(self.buses, key=lambda b: b.id)))
        object.__setattr__(self, "lines", tuple(self.lines))
        self._validate()

    def _validate(self) -> None:
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise StructuralError("duplicate bus ids")
        references = [b.id for b in self.buses if b.kind is BusKind.REFERENCE]
        if len(references) != 1:
            raise StructuralError(f"exactly one reference bus required, found {len(references)}")
        if references[0] != self.reference_bus:
            raise StructuralError(
                f"reference_bus {self.reference_bus} does not match reference bus {references[0]}")
        if not self.base_mva > 0:
            raise StructuralError("base_mva must be > 0")

        known = set(ids)
        seen = set()
        for line in self.lines:
            for end in (line.from_bus, line.to_bus):
                if end not in known:
                    raise StructuralError(f"line {line.from_bus}-{line.to_bus}: unknown bus {end}")
            if line.key in seen:
                raise StructuralError(f"more than one line between {line.from_bus} and {line.to_bus}")
            seen.add(line.key)

        neighbours: Dict[int, List[int]] = {b: [] for b in ids}
        for line in self.lines:
            neighbours[line.from_bus].append(line.to_bus)
            neighbours[line.to_bus].append(line.from_bus)
        reached = {ids[0]}
        frontier = [ids[0]]
        while frontier:
            for nxt in neighbours[frontier.pop()]:
                if nxt not in reached:
                    reached.add(nxt)
                    frontier.append(nxt)
        if reached != known:
            raise StructuralError(f"network is not connected; unreachable buses {sorted(known - reached)}")

    # ---- lookups -------------------------------------------------------

    def bus(self, bus_id: int) -> Bus:
        """Get a bus by id."""
        try:
            return self.buses[self._position[bus_id]]
        except KeyError:
            raise StructuralError(f"unknown bus id {bus_id}") from None

    def line(self, a: int, b: int) -> Line:
        """Get the line joining two buses (either orientation)."""
        return self.lines[self.line_index(a, b)[0]]

    def line_index(self, a: int, b: int) -> Tuple[int, float]:
        """
        Position of the line joining `a` and `b`, and the sign that turns its
        stored flow into the a -> b direction.
        """
        for i, line in enumerate(self.lines):
            if line.key == frozenset((a, b)):
                return i, (1.0 if line.from_bus == a else -1.0)
        raise StructuralError(f"no line between buses {a} and {b}")

    def flow_between(self, delta: np.ndarray, a: int, b: int) -> np.ndarray:
        """Flow from bus `a` to bus `b` for (batched) angles."""
        index, sign = self.line_index(a, b)
        return sign * self.line_flows(delta)[..., index]

    @cached_property
    def _position(self) -> Dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def bus_ids(self) -> Tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def delta_ids(self) -> Tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind is not BusKind.REFERENCE)

    @cached_property
    def omega_ids(self) -> Tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind is not BusKind.REFERENCE and b.second_order)

    @cached_property
    def storage_ids(self) -> Tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind is BusKind.STORAGE)

    @property
    def n_delta(self) -> int:
        return len(self.delta_ids)

    @property
    def n_omega(self) -> int:
        return len(self.omega_ids)

    @property
    def n_storage(self) -> int:
        return len(self.storage_ids)

    @cached_property
    def state_names(self) -> Tuple[str, ...]:
        """Names of the stacked state variables, e.g. ("delta_1", "omega_1")."""
        return (tuple(f"delta_{b}" for b in self.delta_ids)
                + tuple(f"omega_{b}" for b in self.omega_ids))

    def delta_index(self, bus_id: int) -> int:
        """Position of a bus in the angle vector."""
        try:
            return self.delta_ids.index(bus_id)
        except ValueError:
            raise StructuralError(f"bus {bus_id} has no angle state") from None

    def omega_index(self, bus_id: int) -> int:
        """Position of a bus in the frequency vector."""
        try:
            return self.omega_ids.index(bus_id)
        except ValueError:
            raise StructuralError(f"bus {bus_id} has no frequency state") from None

    # ---- cached index arrays ---------------------------------------------

    @cached_property
    def _delta_pos(self) -> np.ndarray:
        return np.array([self._position[b] for b in self.delta_ids], dtype=int)

    @cached_property
    def _omega_pos(self) -> np.ndarray:
        return np.array([self._position[b] for b in self.omega_ids], dtype=int)

    @cached_property
    def _omega_slots(self) -> np.ndarray:
        """Positions of swing buses inside the angle vector."""
        return np.array([self.delta_ids.index(b) for b in self.omega_ids], dtype=int)

    @cached_property
    def _first_order_slots(self) -> np.ndarray:
        """Positions of first-order loads inside the angle vector."""
        omega = set(self.omega_ids)
        return np.array([i for i, b in enumerate(self.delta_ids) if b not in omega], dtype=int)

    @cached_property
    def storage_slots(self) -> np.ndarray:
        return np.array([self.omega_ids.index(b) for b in self.storage_ids], dtype=int)

    @cached_property
    def _from_pos(self) -> np.ndarray:
        return np.array([self._position[l.from_bus] for l in self.lines], dtype=int)

    @cached_property
    def _to_pos(self) -> np.ndarray:
        return np.array([self._position[l.to_bus] for l in self.lines], dtype=int)

    @cached_property
    def _susceptance(self) -> np.ndarray:
        return np.array([l.susceptance for l in self.lines], dtype=float)

    @cached_property
    def incidence(self) -> np.ndarray:
        """Line-by-bus incidence: +1 at the sending end, -1 at the receiving end."""
        matrix = np.zeros((len(self.lines), len(self.buses)))
        rows = np.arange(len(self.lines))
        matrix[rows, self._from_pos] = 1.0
        matrix[rows, self._to_pos] = -1.0
        return matrix

    @cached_property
    def injections(self) -> np.ndarray:
        """P0 for every bus, bus-id order."""
        return np.array([b.injection for b in self.buses], dtype=float)

    @cached_property
    def _omega_inertia(self) -> np.ndarray:
        return np.array([self.bus(b).inertia for b in self.omega_ids], dtype=float)

    @cached_property
    def _omega_damping(self) -> np.ndarray:
        return np.array([self.bus(b).damping for b in self.omega_ids], dtype=float)

    @cached_property
    def _first_order_damping(self) -> np.ndarray:
        ids = [self.delta_ids[i] for i in self._first_order_slots]
        return np.array([self.bus(b).damping for b in ids], dtype=float)

    # ---- array-level physics ---------------------------------------------

    def full_angles(self, delta: np.ndarray) -> np.ndarray:
        """Expand reduced angles to all buses (reference angle 0)."""
        delta = np.asarray(delta, dtype=float)
        theta = np.zeros(delta.shape[:-1] + (len(self.buses),))
        theta[..., self._delta_pos] = delta
        return theta

    def line_flows(self, delta: np.ndarray) -> np.ndarray:
        """Flow on every line in its from->to direction."""
        theta = self.full_angles(delta)
        return self._susceptance * np.sin(theta[..., self._from_pos] - theta[..., self._to_pos])

    def bus_power(self, delta: np.ndarray) -> np.ndarray:
        """Net electrical power leaving every bus."""
        return self.line_flows(delta) @ self.incidence

    def control_array(self, u: ControlLike) -> np.ndarray:
        """Normalize a control to an array with the storage buses on the last axis."""
        if isinstance(u, ControlInput):
            return u.as_array(self)
        m_e = np.asarray(u, dtype=float)
        if m_e.ndim == 0:
            m_e = np.full(self.n_storage, float(m_e))
        if m_e.shape[-1] != self.n_storage:
            raise DynamicsError(
                f"control covers {m_e.shape[-1]} storage bus(es), network has {self.n_storage}")
        return m_e

    def inertia_vector(self, m_e: np.ndarray) -> np.ndarray:
        """Inertia of every swing bus, with storage slots taken from the control."""
        shape = m_e.shape[:-1] + (self.n_omega,)
        inertia = np.broadcast_to(self._omega_inertia, shape).copy()
        inertia[..., self.storage_slots] = m_e
        return inertia

    def derivatives(
        self,
        delta: np.ndarray,
        omega: np.ndarray,
        m_e: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Evaluate the dynamics on arrays.

        Args:
            delta: Angles, shape (..., n_delta).
            omega: Frequency deviations, shape (..., n_omega).
            m_e: Virtual inertia, shape (..., n_storage).

        Returns:
            (d_delta, d_omega) broadcast to the common batch shape.
        """
        delta = np.asarray(delta, dtype=float)
        omega = np.asarray(omega, dtype=float)
        inertia = self.inertia_vector(np.asarray(m_e, dtype=float))
        if np.any(inertia <= 0):
            raise DynamicsError("inertia M must be > 0 on every swing bus")

        accelerating = self.injections - self.bus_power(delta)
        d_omega = (accelerating[..., self._omega_pos] - self._omega_damping * omega) / inertia
        d_first = accelerating[..., self._first_order_slots_pos] / self._first_order_damping

        batch = np.broadcast_shapes(delta.shape[:-1], omega.shape[:-1], inertia.shape[:-1])
        d_delta = np.empty(batch + (self.n_delta,))
        d_delta[..., self._omega_slots] = omega
        d_delta[..., self._first_order_slots] = d_first
        return d_delta, np.broadcast_to(d_omega, batch + (self.n_omega,))

    @cached_property
    def _first_order_slots_pos(self) -> np.ndarray:
        """Bus positions of the first-order loads."""
        return self._delta_pos[self._first_order_slots]

    # ---- derived networks ------------------------------------------------

    def with_injection_change(self, bus_id: int, delta_p: float) -> "NetworkModel":
        """Copy of the network with P0 of one bus stepped by delta_p."""
        target = self.bus(bus_id)
        buses = tuple(
            replace(b, injection=b.injection + delta_p) if b.id == target.id else b
            for b in self.buses
        )
        return replace(self, buses=buses)

    def with_susceptances(self, susceptances: Sequence[float]) -> "NetworkModel":
        """Copy of the network with new line susceptances (line order)."""
        lines = tuple(replace(l, susceptance=float(b)) for l, b in zip(self.lines, susceptances))
        return replace(self, lines=lines)

    def injection_imbalance(self) -> float:
        """Sum of P0 over all buses (zero at a lossless equilibrium)."""
        return float(np.sum(self.injections))

    def zero_state(self) -> SystemState:
        return SystemState(np.zeros(self.n_delta), np.zeros(self.n_omega))

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "buses": [b.to_dict() for b in self.buses],
            "lines": [l.to_dict() for l in self.lines],
            "reference_bus": self.reference_bus,
            "base_mva": self.base_mva,
        }


def line_flow(state: SystemState, line: Line, net: NetworkModel) -> Union[float, np.ndarray]:
    """
    Active power on a line from its `from` bus to its `to` bus.

    Raises:
        StructuralError: an endpoint is not a bus of `net`.
    """
    theta = net.full_angles(state.delta)
    i = net._position.get(line.from_bus)
    j = net._position.get(line.to_bus)
    if i is None or j is None:
        raise StructuralError(f"line {line.from_bus}-{line.to_bus} references an unknown bus")
    flow = line.susceptance * np.sin(theta[..., i] - theta[..., j])
    return float(flow) if np.ndim(flow) == 0 else flow


def rhs(state: SystemState, u: ControlLike, net: NetworkModel) -> SystemState:
    """Time derivative of the state under virtual inertia `u`."""
    d_delta, d_omega = net.derivatives(state.delta, state.omega, net.control_array(u))
    return SystemState(d_delta, d_omega)


def step(
    state: SystemState,
    u: ControlLike,
    dt: float,
    net: NetworkModel,
    method: Union[Integrator, str] = Integrator.EULER
) -> SystemState:
    """
    Advance the state by one fixed step with the control held constant.

    Euler is exactly x + dt * rhs(x, u); the DP transition relies on it.

    Raises:
        ValidationError: dt is not positive.
        IntegrationError: the new state is not finite.
    """
    if not dt > 0:
        raise ValidationError(f"time step must be > 0, got {dt}")
    method = Integrator(method)
    m_e = net.control_array(u)

    if method is Integrator.EULER:
        d_delta, d_omega = net.derivatives(state.delta, state.omega, m_e)
        new = SystemState(state.delta + dt * d_delta, state.omega + dt * d_omega)
    else:
        k1 = net.derivatives(state.delta, state.omega, m_e)
        k2 = net.derivatives(state.delta + 0.5 * dt * k1[0], state.omega + 0.5 * dt * k1[1], m_e)
        k3 = net.derivatives(state.delta + 0.5 * dt * k2[0], state.omega + 0.5 * dt * k2[1], m_e)
        k4 = net.derivatives(state.delta + dt * k3[0], state.omega + dt * k3[1], m_e)
        new = SystemState(
            state.delta + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            state.omega + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        )

    check_finite(new, net)
    return new


def check_finite(state: SystemState, net: NetworkModel) -> None:
    """Raise IntegrationError naming the first bus with a non-finite value."""
    for values, ids in ((state.delta, net.delta_ids), (state.omega, net.omega_ids)):
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            raise IntegrationError("non-finite state produced", bus_id=ids[int(bad[0][-1])])


def storage_terminal_power(
    omega_k: Union[float, np.ndarray],
    omega_k1: Union[float, np.ndarray],
    m_e: Union[float, np.ndarray],
    dt: float,
    damping: Union[float, np.ndarray],
    p_e: Union[float, np.ndarray] = 0.0
) -> Union[float, np.ndarray]:
    """
    Net terminal power of a storage unit over one step:
    P^r(k) = P^e - M_e (omega(k+1) - omega(k)) / dt - D_e omega(k).

    Args:
        omega_k: Frequency deviation of the storage bus at step k.
        omega_k1: Frequency deviation at step k+1.
        m_e: Virtual inertia held over the step (s).
        dt: Step length (s).
        damping: Storage damping D_e (p.u.).
        p_e: Baseline exchange P^e (p.u.).

    Raises:
        ValidationError: dt is not positive.
    """
    if not dt > 0:
        raise ValidationError(f"time step must be > 0, got {dt}")
    return p_e - m_e * (np.subtract(omega_k1, omega_k)) / dt - damping * np.asarray(omega_k)


def equilibrium_residual(net: NetworkModel, state: SystemState) -> float:
    """Largest power mismatch or frequency deviation at a candidate equilibrium."""
    mismatch = net.injections[net._delta_pos] - net.bus_power(state.delta)[..., net._delta_pos]
    parts = [np.max(np.abs(mismatch), initial=0.0), np.max(np.abs(state.omega), initial=0.0)]
    return float(max(parts))


def _power_jacobian(net: NetworkModel, delta: np.ndarray) -> np.ndarray:
    """d(bus power)/d(delta) restricted to the non-reference buses."""
    theta = net.full_angles(delta)
    weights = net._susceptance * np.cos(theta[net._from_pos] - theta[net._to_pos])
    laplacian = net.incidence.T @ (weights[:, None] * net.incidence)
    return laplacian[np.ix_(net._delta_pos, net._delta_pos)]


def solve_equilibrium(
    net: NetworkModel,
    injections: Optional[Mapping[int, float]] = None,
    initial: Optional[SystemState] = None,
    max_iterations: Optional[int] = None,
    tolerance: Optional[float] = None
) -> SystemState:
    """
    Newton iteration on the lossless power-flow equations
    P0_i = sum_j b_ij sin(delta_i - delta_j) for every non-reference bus.

    Args:
        net: Network model.
        injections: Optional P0 overrides per bus id.
        initial: Starting angles (flat start if omitted).
        max_iterations: Newton iteration limit.
        tolerance: Mismatch tolerance (infinity norm).

    Returns:
        Equilibrium state with all omega = 0.

    Raises:
        ConvergenceError: no convergence within the iteration limit.
    """
    max_iterations = max_iterations or config.newton_max_iterations
    tolerance = tolerance or config.newton_tolerance

    if injections:
        for bus_id in injections:
            net.bus(bus_id)
        target_net = replace(net, buses=tuple(
            replace(b, injection=float(injections[b.id])) if b.id in injections else b
            for b in net.buses
        ))
    else:
        target_net = net

    target = target_net.injections[net._delta_pos]
    delta = np.zeros(net.n_delta) if initial is None else np.array(initial.delta, dtype=float)
    residual = np.inf

    for _ in range(max_iterations + 1):
        mismatch = target - target_net.bus_power(delta)[net._delta_pos]
        residual = float(np.max(np.abs(mismatch), initial=0.0))
        if not np.isfinite(residual):
            break
        if residual <= tolerance:
            return SystemState(delta, np.zeros(net.n_omega))
        try:
            delta = delta + linalg.solve(_power_jacobian(net, delta), mismatch)
        except (linalg.LinAlgError, ValueError) as e:
            raise ConvergenceError(f"singular power-flow Jacobian: {e}", residual) from e

    raise ConvergenceError(f"Newton did not converge in {max_iterations} iterations", residual)


def calibrate_susceptances(
    net: NetworkModel,
    target: SystemState
) -> NetworkModel:
    """
    Rescale line susceptances so `target` angles are an equilibrium.

    Starts from nominal flows b0 * sin(angle difference), applies the
    minimum-norm correction that restores the bus power balance, and sets
    b = corrected flow / sin(angle difference).

    Raises:
        StructuralError: a line has (almost) no angle difference at the
            target, or would need a non-positive susceptance.
    """
    theta = net.full_angles(target.delta)
    sines = np.sin(theta[net._from_pos] - theta[net._to_pos])
    flat = [f"{l.from_bus}-{l.to_bus}" for l, s in zip(net.lines, sines) if abs(s) < 1e-9]
    if flat:
        raise StructuralError(f"cannot calibrate lines with zero angle difference: {flat}")

    nominal = np.array([l.nominal_susceptance() for l in net.lines])
    flows = nominal * sines
    balance = net.incidence.T[net._delta_pos, :]
    correction, *_ = linalg.lstsq(balance, net.injections[net._delta_pos] - balance @ flows)
    susceptances = (flows + correction) / sines

    negative = [f"{l.from_bus}-{l.to_bus}" for l, b in zip(net.lines, susceptances) if b <= 0]
    if negative:
        raise StructuralError(f"calibration needs non-positive susceptance on lines {negative}")
    return net.with_susceptances(susceptances)
