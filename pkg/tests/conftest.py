"""Small hand-checkable instances shared by the test modules."""

import pytest

from optiloop.model import EnergyModel, LinkSpec, LogicalGraph, PhysicalGraph


def single_node(demand=1.0, bandwidth=10.0, capacity=10.0, idle=14.0, proc=1.0, link=0.5, switch=0.0):
    """e -> c, one VNF v. Energy with c on: idle + proc*demand + link*demand."""
    lg = LogicalGraph(("e",), ("v",), {("e", "v"): demand}, {})
    pg = PhysicalGraph(("e",), ("c",), {"c": capacity}, {("e", "c"): LinkSpec(bandwidth)})
    em = EnergyModel({"c": idle}, proc, switch, link)
    return lg, pg, em


def two_nodes(demand=2.0, cap_a=10.0, cap_b=10.0):
    """e attached to a; a <-> b. Serving at a avoids the a->b hop."""
    lg = LogicalGraph(("e",), ("v",), {("e", "v"): demand}, {})
    links = {("e", "a"): LinkSpec(10.0), ("a", "b"): LinkSpec(10.0), ("b", "a"): LinkSpec(10.0)}
    pg = PhysicalGraph(("e",), ("a", "b"), {"a": cap_a, "b": cap_b}, links)
    em = EnergyModel({"a": 10.0, "b": 10.0}, 1.0, 0.5, 0.2)
    return lg, pg, em


def dumbbell_with_appendix():
    """e -> a <-> b, and an idle appendix node z hanging off b."""
    lg = LogicalGraph(("e",), ("v",), {("e", "v"): 1.0}, {})
    links = {("e", "a"): LinkSpec(10.0)}
    for i, j in (("a", "b"), ("b", "z")):
        links[(i, j)] = LinkSpec(10.0)
        links[(j, i)] = LinkSpec(10.0)
    pg = PhysicalGraph(("e",), ("a", "b", "z"), {"a": 10.0, "b": 10.0, "z": 10.0}, links)
    em = EnergyModel({"a": 5.0, "b": 5.0, "z": 5.0}, 1.0, 0.1, 0.1)
    return lg, pg, em


@pytest.fixture
def minimal():
    return single_node()


@pytest.fixture
def pair():
    return two_nodes()


@pytest.fixture
def appendix():
    return dumbbell_with_appendix()
