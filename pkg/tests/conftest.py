"""Shared fixtures: a two-bus case, a small lattice DP problem and output dirs."""

import copy
from dataclasses import dataclass

import numpy as np
import pytest

from src.modules.dp_solver import AxisGrid, DPConfig, DPVariant
from src.modules.network import Bus, BusKind, Line, NetworkModel
from src.modules.scenario import ScenarioLoader

TWOBUS_NETWORK = {
    "base_mva": 100.0,
    "reference_bus": 2,
    "buses": [
        {"id": 1, "kind": "storage", "D": 1.0, "P0": 0.0, "angle": 0.0},
        {"id": 2, "kind": "reference", "P0": 0.0, "angle": 0.0},
    ],
    "lines": [{"from": 1, "to": 2, "b": 1.0}],
}

TWOBUS_DOCUMENT = {
    "name": "twobus_small",
    "network": TWOBUS_NETWORK,
    "disturbance": {"bus": 1, "delta_p": 0.3},
    "horizon": {"t0": 0.0, "t1": 5.0, "ts": 0.5},
    "storage": [{"bus": 1, "m_min": 4.0, "m_max": 10.0}],
    "weights": {"frequency": 1.0, "my_inf": 2.0, "terminal_charge": 2.0},
    "limits": {"terminal_omega": [-0.5, 0.5], "terminal_delta": {"1": [0.0, 0.6]}},
    "solver": "simulate-only",
    "dp": {
        "state_axes": {
            "delta_1": {"lo": 0.0, "hi": 0.6, "n": 13},
            "omega_1": {"lo": -0.5, "hi": 0.5, "n": 11},
        },
        "control_points": 4,
    },
    "optimizer": {"max_iterations": 5, "substeps": 2},
}


def twobus_document(**overrides):
    """Deep copy of the small two-bus document with top-level overrides."""
    document = copy.deepcopy(TWOBUS_DOCUMENT)
    document.update(copy.deepcopy(overrides))
    return document


@pytest.fixture
def twobus_network():
    return NetworkModel(
        buses=(
            Bus(1, BusKind.STORAGE, damping=1.0),
            Bus(2, BusKind.REFERENCE),
        ),
        lines=(Line(1, 2, 1.0),),
        reference_bus=2,
    )


@pytest.fixture
def twobus_scenario():
    return ScenarioLoader().from_dict(twobus_document())


@pytest.fixture
def output_dir(tmp_path):
    directory = tmp_path / "out"
    directory.mkdir()
    return directory


@dataclass(eq=False)
class LatticeProblem:
    """
    Integer states 0..n-1 moved by controls {-1, 0, 1}; stage costs and
    terminal values come from random tables.
    """
    costs: np.ndarray            # (N, n, 3)
    terminal: np.ndarray         # (n,)
    level: np.ndarray            # (n,)
    stationary: bool = False

    def transition(self, stage, x, u):
        ix = np.rint(x[..., 0]).astype(int)
        iu = np.rint(u[..., 0]).astype(int) + 1
        return x + u, self.costs[stage][ix, iu]

    def terminal_charge(self, x):
        return np.zeros(x.shape[:-1])

    def terminal_penalty(self, x):
        return self.terminal[np.rint(x[..., 0]).astype(int)]

    def terminal_level(self, x):
        return self.level[np.rint(x[..., 0]).astype(int)]


def lattice_case(n_states, n_stages, seed, variant, my_inf=10.0):
    """A random lattice problem and its DP configuration."""
    rng = np.random.default_rng(seed)
    problem = LatticeProblem(
        costs=rng.uniform(0.0, 1.0, (n_stages, n_states, 3)),
        terminal=rng.uniform(0.0, 1.0, n_states),
        level=rng.uniform(-1.0, 1.0, n_states),
    )
    dp_config = DPConfig(
        ts=1.0,
        t0=0.0,
        t1=float(n_stages),
        state_axes=(AxisGrid(0.0, float(n_states - 1), n_states),),
        control_axes=(AxisGrid(-1.0, 1.0, 3),),
        my_inf=my_inf,
        variant=variant,
    )
    return problem, dp_config


@pytest.fixture
def lattice():
    return lattice_case(6, 3, seed=7, variant=DPVariant.BASIC)
