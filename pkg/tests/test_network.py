"""Network model: structure checks, dynamics, integration and equilibria."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.config import config
from src.modules.network import (
    Bus,
    BusKind,
    ControlInput,
    Integrator,
    Line,
    NetworkModel,
    SystemState,
    calibrate_susceptances,
    equilibrium_residual,
    line_flow,
    rhs,
    solve_equilibrium,
    step,
    storage_terminal_power,
)
from src.modules.scenario import parse_network
from src.utils.errors import (
    ConvergenceError,
    DynamicsError,
    IntegrationError,
    StructuralError,
    ValidationError,
)


def three_bus(load_inertia=0.0):
    """Generator 1, load 2, storage 3 around the reference bus 4."""
    return NetworkModel(
        buses=(
            Bus(1, BusKind.GENERATOR, inertia=5.0, damping=1.0, injection=0.5),
            Bus(2, BusKind.LOAD, inertia=load_inertia, damping=0.5, injection=-0.8),
            Bus(3, BusKind.STORAGE, damping=0.2, injection=0.0),
            Bus(4, BusKind.REFERENCE),
        ),
        lines=(Line(1, 2, 4.0), Line(2, 3, 3.0), Line(3, 4, 5.0), Line(1, 4, 2.0)),
        reference_bus=4,
    )


class TestStructure:
    def test_state_layout(self):
        net = three_bus()
        assert net.delta_ids == (1, 2, 3)
        assert net.omega_ids == (1, 3)
        assert net.storage_ids == (3,)
        assert net.state_names == ("delta_1", "delta_2", "delta_3", "omega_1", "omega_3")

    def test_motor_load_has_frequency_state(self):
        assert three_bus(load_inertia=1.0).omega_ids == (1, 2, 3)

    def test_buses_are_sorted(self):
        net = NetworkModel(
            buses=(Bus(2, BusKind.REFERENCE), Bus(1, BusKind.STORAGE, damping=1.0)),
            lines=(Line(1, 2, 1.0),),
            reference_bus=2,
        )
        assert net.bus_ids == (1, 2)

    @pytest.mark.parametrize("buses, lines, reference", [
        ((Bus(1, BusKind.STORAGE, damping=1.0), Bus(1, BusKind.REFERENCE)), (), 1),
        ((Bus(1, BusKind.REFERENCE), Bus(2, BusKind.REFERENCE)), (Line(1, 2, 1.0),), 1),
        ((Bus(1, BusKind.STORAGE, damping=1.0), Bus(2, BusKind.REFERENCE)), (Line(1, 2, 1.0),), 1),
        ((Bus(1, BusKind.STORAGE, damping=1.0), Bus(2, BusKind.REFERENCE)), (Line(1, 3, 1.0),), 2),
        ((Bus(1, BusKind.STORAGE, damping=1.0), Bus(2, BusKind.REFERENCE),
          Bus(3, BusKind.LOAD, damping=1.0)), (Line(1, 2, 1.0),), 2),
        ((Bus(1, BusKind.STORAGE, damping=1.0), Bus(2, BusKind.REFERENCE)),
         (Line(1, 2, 1.0), Line(2, 1, 2.0)), 2),
    ], ids=["duplicate-id", "two-references", "wrong-reference", "unknown-end",
            "disconnected", "parallel-lines"])
    def test_invalid_networks(self, buses, lines, reference):
        with pytest.raises(StructuralError):
            NetworkModel(buses=buses, lines=lines, reference_bus=reference)

    @pytest.mark.parametrize("kwargs", [
        dict(id=1, kind=BusKind.GENERATOR, inertia=0.0, damping=1.0),
        dict(id=1, kind=BusKind.LOAD, damping=0.0),
        dict(id=1, kind=BusKind.STORAGE, inertia=4.0, damping=1.0),
        dict(id=1, kind=BusKind.GENERATOR, inertia=1.0, damping=-1.0),
    ])
    def test_invalid_buses(self, kwargs):
        with pytest.raises(StructuralError):
            Bus(**kwargs)

    def test_invalid_lines(self):
        with pytest.raises(StructuralError):
            Line(1, 1, 1.0)
        with pytest.raises(StructuralError):
            Line(1, 2, 0.0)

    def test_structural_error_is_value_error_with_exit_code(self):
        with pytest.raises(ValueError) as info:
            Line(1, 2, -1.0)
        assert isinstance(info.value, ValidationError)
        assert info.value.exit_code == 2

    def test_line_lookup_either_orientation(self):
        net = three_bus()
        assert net.line(2, 1) is net.line(1, 2)
        with pytest.raises(StructuralError):
            net.line(1, 3)
        with pytest.raises(StructuralError):
            net.bus(99)


class TestDynamics:
    def test_twobus_derivatives(self, twobus_network):
        net = twobus_network.with_injection_change(1, 0.3)
        state = SystemState([0.2], [0.1])
        d = rhs(state, ControlInput({1: 4.0}), net)
        assert d.delta[0] == pytest.approx(0.1)
        assert d.omega[0] == pytest.approx((0.3 - math.sin(0.2) - 0.1) / 4.0)

    def test_first_order_load(self):
        net = three_bus()
        state = SystemState([0.1, -0.05, 0.02], [0.0, 0.0])
        d = rhs(state, 6.0, net)
        flows_out = 4.0 * math.sin(-0.05 - 0.1) + 3.0 * math.sin(-0.05 - 0.02)
        assert d.delta[1] == pytest.approx((-0.8 - flows_out) / 0.5)

    def test_missing_control(self):
        net = three_bus()
        with pytest.raises(DynamicsError):
            rhs(net.zero_state(), ControlInput({}), net)

    def test_non_positive_inertia(self):
        net = three_bus()
        with pytest.raises(DynamicsError):
            rhs(net.zero_state(), 0.0, net)

    def test_batched_evaluation_matches_single(self):
        net = three_bus(load_inertia=1.0)
        rng = np.random.default_rng(3)
        delta = rng.normal(0, 0.2, (4, 5, 3))
        omega = rng.normal(0, 0.1, (4, 5, 3))
        m_e = rng.uniform(1, 5, (1, 5, 1))
        d_delta, d_omega = net.derivatives(delta, omega, m_e)
        assert d_delta.shape == (4, 5, 3)
        single = rhs(SystemState(delta[2, 3], omega[2, 3]), m_e[0, 3], net)
        np.testing.assert_allclose(d_delta[2, 3], single.delta)
        np.testing.assert_allclose(d_omega[2, 3], single.omega)

    def test_line_flow_direction(self):
        net = three_bus()
        state = SystemState([0.3, 0.1, 0.0], [0.0, 0.0])
        assert line_flow(state, net.line(1, 2), net) == pytest.approx(4.0 * math.sin(0.2))
        np.testing.assert_allclose(net.flow_between(state.delta, 2, 1), -4.0 * math.sin(0.2))


class TestIntegration:
    def test_euler_is_one_explicit_step(self, twobus_network):
        net = twobus_network.with_injection_change(1, 0.3)
        state = SystemState([0.1], [0.05])
        d = rhs(state, 5.0, net)
        new = step(state, 5.0, 0.5, net)
        np.testing.assert_allclose(new.delta, state.delta + 0.5 * d.delta)
        np.testing.assert_allclose(new.omega, state.omega + 0.5 * d.omega)

    def test_euler_storage_power_identity(self, twobus_network):
        # one Euler step makes P^r = sin(delta) - 0.3 whatever M and omega are
        net = twobus_network.with_injection_change(1, 0.3)
        for delta, omega, m_e in [(0.1, 0.0, 4.0), (0.4, -0.2, 7.5), (0.25, 0.3, 10.0)]:
            state = SystemState([delta], [omega])
            new = step(state, m_e, 0.5, net)
            p_r = storage_terminal_power(omega, new.omega[0], m_e, 0.5, 1.0)
            assert p_r == pytest.approx(math.sin(delta) - 0.3)

    @pytest.mark.parametrize("method", list(Integrator))
    def test_equilibrium_is_fixed_point(self, method):
        net = three_bus(load_inertia=1.0)
        x0 = solve_equilibrium(net)
        new = step(x0, 4.0, 0.1, net, method)
        assert new.is_close(x0, 1e-9)

    def test_rk4_is_more_accurate_than_euler(self, twobus_network):
        net = twobus_network.with_injection_change(1, 0.3)
        reference = SystemState([0.0], [0.0])
        for _ in range(1000):
            reference = step(reference, 4.0, 0.001, net, Integrator.RK4)
        euler = step(SystemState([0.0], [0.0]), 4.0, 1.0, net, Integrator.EULER)
        rk4 = step(SystemState([0.0], [0.0]), 4.0, 1.0, net, Integrator.RK4)
        assert abs(rk4.delta[0] - reference.delta[0]) < abs(euler.delta[0] - reference.delta[0])

    def test_non_finite_state_names_bus(self):
        net = three_bus()
        with pytest.raises(IntegrationError) as info:
            step(SystemState([0.0, np.nan, 0.0], [0.0, 0.0]), 4.0, 0.1, net)
        assert info.value.bus_id == 2
        assert info.value.exit_code == 3

    @pytest.mark.parametrize("dt", [0.0, -0.5])
    def test_non_positive_dt_is_a_validation_error(self, twobus_network, dt):
        with pytest.raises(ValidationError) as info:
            step(twobus_network.zero_state(), 4.0, dt, twobus_network)
        assert info.value.exit_code == 2
        with pytest.raises(ValidationError):
            storage_terminal_power(0.0, 0.1, 4.0, dt, 0.1)


class TestEquilibrium:
    def test_newton_solves_power_flow(self):
        net = three_bus()
        x0 = solve_equilibrium(net)
        assert equilibrium_residual(net, x0) < 1e-9
        d = rhs(x0, 4.0, net)
        assert np.max(np.abs(d.as_vector())) < 1e-9

    def test_injection_overrides(self):
        net = three_bus()
        x0 = solve_equilibrium(net, injections={1: 0.2})
        assert equilibrium_residual(net.with_injection_change(1, -0.3), x0) < 1e-9

    def test_infeasible_power_flow(self, twobus_network):
        with pytest.raises(ConvergenceError) as info:
            solve_equilibrium(twobus_network.with_injection_change(1, 1.5))
        assert info.value.residual > 0

    def test_calibration_reproduces_target_angles(self):
        base = three_bus(load_inertia=1.0)
        net = NetworkModel(base.buses, base.lines[:3], base.reference_bus)
        target = SystemState([0.05, -0.1, -0.04], [0.0, 0.0, 0.0])
        calibrated = calibrate_susceptances(net, target)
        assert equilibrium_residual(calibrated, target) < 1e-9
        assert calibrated.line(1, 2).susceptance == pytest.approx(0.5 / math.sin(0.15))

    def test_calibration_keeps_balanced_susceptances(self):
        net = three_bus()
        target = solve_equilibrium(net)
        calibrated = calibrate_susceptances(net, target)
        np.testing.assert_allclose(
            [l.susceptance for l in calibrated.lines], [l.susceptance for l in net.lines], rtol=1e-8)

    def test_calibration_rejects_flat_lines(self):
        net = three_bus()
        with pytest.raises(StructuralError):
            calibrate_susceptances(net, SystemState([0.0, 0.0, 0.0], [0.0, 0.0]))

    def test_bundled_twelvebus_is_calibrated(self):
        import json
        path = config.bundled_scenario("networks/twelvebus")
        with open(path, encoding="utf-8") as f:
            net, angles, calibrate = parse_network(json.load(f))
        assert calibrate
        state = SystemState.from_mapping(net, angles)
        assert equilibrium_residual(net, state) < 1e-6
        # radial generator link: b = P / sin(angle difference)
        b57 = net.line(5, 7).susceptance
        assert b57 * math.sin(-0.1146 + 0.4381) == pytest.approx(7.19, rel=1e-9)


@st.composite
def random_networks(draw):
    """Connected networks: a random spanning tree plus a few extra lines."""
    n = draw(st.integers(min_value=2, max_value=7))
    reference = draw(st.integers(min_value=1, max_value=n))
    kinds = draw(st.lists(st.sampled_from(["generator", "load", "motor", "storage"]),
                          min_size=n, max_size=n))
    buses = []
    for bus_id, kind in zip(range(1, n + 1), kinds):
        injection = draw(st.floats(-0.5, 0.5))
        if bus_id == reference:
            buses.append(Bus(bus_id, BusKind.REFERENCE))
        elif kind == "generator":
            buses.append(Bus(bus_id, BusKind.GENERATOR, draw(st.floats(1, 20)), draw(st.floats(0.1, 5)), injection))
        elif kind == "motor":
            buses.append(Bus(bus_id, BusKind.LOAD, draw(st.floats(0.5, 2)), draw(st.floats(0.1, 2)), injection))
        elif kind == "load":
            buses.append(Bus(bus_id, BusKind.LOAD, 0.0, draw(st.floats(0.1, 2)), injection))
        else:
            buses.append(Bus(bus_id, BusKind.STORAGE, 0.0, draw(st.floats(0.1, 2)), injection))
    lines = {}
    for bus_id in range(2, n + 1):
        parent = draw(st.integers(min_value=1, max_value=bus_id - 1))
        lines[frozenset((parent, bus_id))] = Line(parent, bus_id, draw(st.floats(1, 50)))
    for _ in range(draw(st.integers(0, 3))):
        a, b = draw(st.integers(1, n)), draw(st.integers(1, n))
        if a != b and frozenset((a, b)) not in lines:
            lines[frozenset((a, b))] = Line(a, b, draw(st.floats(1, 50)))
    return NetworkModel(tuple(buses), tuple(lines.values()), reference)


@settings(deadline=None, max_examples=100)
@given(net=random_networks(), data=st.data())
def test_random_networks(net, data):
    delta = np.array(data.draw(st.lists(st.floats(-1.0, 1.0), min_size=net.n_delta, max_size=net.n_delta)))
    omega = np.array(data.draw(st.lists(st.floats(-0.5, 0.5), min_size=net.n_omega, max_size=net.n_omega)))

    # lossless: power leaving all buses sums to zero
    assert abs(np.sum(net.bus_power(delta))) < 1e-12

    m_e = np.full(net.n_storage, 5.0)
    d = rhs(SystemState(delta, omega), m_e, net)
    assert d.delta.shape == (net.n_delta,)
    assert d.omega.shape == (net.n_omega,)
    np.testing.assert_allclose(d.delta[[net.delta_index(b) for b in net.omega_ids]], omega)

    # the reference angle never enters the state
    assert net.reference_bus not in net.delta_ids

    # a solved equilibrium is a fixed point of both integrators
    target = np.array(data.draw(st.lists(st.floats(-0.2, 0.2), min_size=net.n_delta, max_size=net.n_delta)))
    power = dict(zip(net.bus_ids, net.bus_power(target)))
    balanced = net
    for bus_id in net.delta_ids:
        balanced = balanced.with_injection_change(bus_id, power[bus_id] - balanced.bus(bus_id).injection)
    x0 = solve_equilibrium(balanced)
    for method in Integrator:
        assert step(x0, m_e, 0.1, balanced, method).is_close(x0, atol=1e-8)
