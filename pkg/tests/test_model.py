import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optiloop.errors import CyclicLogicalGraph, ModelError
from optiloop.model import (
    EnergyModel,
    LinkSpec,
    LogicalGraph,
    PhysicalGraph,
    Solution,
    derive_logical_flows,
    energy_breakdown,
    total_energy,
)
from optiloop.scenario import HSS, MME, PSGW, ENB, SWITCH_J_PER_BIT, vepc_fixture


# oracle: hand application of the conservation law to the vEPC example
def test_vepc_example_flows():
    flows = derive_logical_flows(vepc_fixture(enb_to_mme=0.3, psgw_to_mme=0.2))
    assert flows[("RRH", ENB, PSGW)] == pytest.approx(1.0)
    assert flows[("RRH", ENB, MME)] == pytest.approx(0.3)
    assert flows[("RRH", PSGW, MME)] == pytest.approx(0.2)
    assert flows[("RRH", MME, HSS)] == pytest.approx(0.5)


def test_operator_gateway_signalling_fraction():
    flows = derive_logical_flows(vepc_fixture())
    assert flows[("RRH", PSGW, MME)] == pytest.approx(0.32 * 1.0)


def test_sink_vnf_has_no_derived_flows():
    lg = LogicalGraph(("e",), ("v",), {("e", "v"): 3.0}, {})
    assert derive_logical_flows(lg) == {}


def test_zero_chi_gives_zero_flows():
    lg = LogicalGraph(("e",), ("a", "b"), {("e", "a"): 3.0}, {("e", "a", "b"): 0.0})
    assert all(v == 0 for v in derive_logical_flows(lg).values())


def test_cycle_with_gain_rejected():
    chi = {("e", "a", "b"): 1.0, ("a", "b", "a"): 0.5, ("b", "a", "b"): 0.5}
    lg = LogicalGraph(("e",), ("a", "b"), {("e", "a"): 1.0}, chi)
    with pytest.raises(CyclicLogicalGraph):
        derive_logical_flows(lg)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(injected_flows={("e", "v"): -1.0}, chi={}),
        dict(injected_flows={("x", "v"): 1.0}, chi={}),
        dict(injected_flows={}, chi={("e", "v", "w"): 1.0}),
        dict(injected_flows={}, chi={("e", "v", "v"): math.inf}),
    ],
)
def test_invalid_logical_graph(kwargs):
    with pytest.raises(ModelError):
        LogicalGraph(("e",), ("v",), **kwargs)


def test_physical_graph_validation():
    with pytest.raises(ModelError):
        PhysicalGraph(("e",), ("c",), {"c": -1.0}, {("e", "c"): LinkSpec(1.0)})
    with pytest.raises(ModelError):
        PhysicalGraph(("e",), ("c",), {"c": 1.0}, {("c", "c"): LinkSpec(1.0)})
    with pytest.raises(ModelError):
        PhysicalGraph(("e",), ("c",), {"c": 1.0}, {("e", "c"): LinkSpec(0.0)})


def test_energy_of_empty_solution_is_zero(minimal):
    lg, pg, em = minimal
    assert total_energy(Solution(), em, pg, lg) == 0.0


def test_single_active_node_costs_idle_only(minimal):
    lg, pg, em = minimal
    assert total_energy(Solution(y={"c": 1.0}), em, pg, lg) == pytest.approx(14.0)


def test_switch_calibration_half_watt_per_gigabyte():
    lg = LogicalGraph(("e",), ("v",), {}, {})
    pg = PhysicalGraph(("e",), ("a", "b"), {"a": 1e11, "b": 1e11}, {("a", "b"): LinkSpec(1e11)})
    em = EnergyModel({"a": 14.0}, 0.0, SWITCH_J_PER_BIT)
    base = total_energy(Solution(y={"a": 1.0}), em, pg, lg)
    busy = total_energy(Solution(y={"a": 1.0}, tau={("a", "b", "e", "v", "v"): 8e9}), em, pg, lg)
    assert busy - base == pytest.approx(0.5)


def test_breakdown_sums_to_total(minimal):
    lg, pg, em = minimal
    sol = Solution(
        y={"c": 1.0}, x={("e", "c"): 1.0}, delta={("c", "v"): 1.0},
        tau={("e", "c", "e", "v", "v"): 1.0}, processed={("c", "e", "v", "v"): 1.0},
    )
    parts = energy_breakdown(sol, em, pg, lg)
    assert set(parts) == {"idle", "overhead", "proc", "sw", "link"}
    assert sum(parts.values()) == pytest.approx(total_energy(sol, em, pg, lg))
    assert total_energy(sol, em, pg, lg) == pytest.approx(14.0 + 1.0 + 0.5)


rates = st.floats(0.01, 100.0, allow_nan=False)
ratios = st.floats(0.0, 2.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(rates, ratios, ratios, st.floats(1.5, 4.0))
def test_derived_flows_are_linear(rate, a, b, factor):
    lg = vepc_fixture({"e": rate}, enb_to_mme=a, psgw_to_mme=b)
    base = derive_logical_flows(lg)
    scaled = derive_logical_flows(lg.scaled(factor))
    assert set(base) == set(scaled)
    for key, val in base.items():
        assert scaled[key] == pytest.approx(val * factor, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 5), st.floats(0, 5), st.floats(0, 0.5))
def test_energy_is_monotone(y, d, tau, p, bump):
    lg = LogicalGraph(("e",), ("v",), {("e", "v"): 1.0}, {})
    pg = PhysicalGraph(("e",), ("c", "d"), {"c": 10.0, "d": 10.0}, {("e", "c"): LinkSpec(10.0), ("c", "d"): LinkSpec(10.0)})
    em = EnergyModel({"c": 3.0}, 1.0, 0.2, 0.1, {("c", "v"): 0.5})

    def sol(extra):
        return Solution(
            y={"c": y + extra}, delta={("c", "v"): d + extra},
            tau={("c", "d", "e", "v", "v"): tau + extra}, processed={("c", "e", "v", "v"): p + extra},
        )

    assert total_energy(sol(bump), em, pg, lg) >= total_energy(sol(0.0), em, pg, lg) - 1e-12
