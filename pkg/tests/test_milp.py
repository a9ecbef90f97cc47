import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optiloop.errors import InconsistentPolicy
from optiloop.milp import (
    CAPACITY_C,
    CAPACITY_L,
    DELAY,
    MATCH,
    TAGS,
    VariablePolicy,
    build,
    to_lp_format,
    variable_pruning,
)
from optiloop.model import EnergyModel, LinkSpec, LogicalGraph, PhysicalGraph, derive_logical_flows
from optiloop.scenario import ENB, HSS, PSGW, MME, random_tiny_scenario, vepc_fixture
from optiloop.solver import solve_exact, solve_lp
from optiloop.validate import validate


def kinds(p):
    out = {}
    for col in p.columns:
        out.setdefault(col.key[0], []).append(col)
    return out


def test_minimal_instance_layout(minimal):
    lg, pg, em = minimal
    p = build(lg, pg, em, VariablePolicy.all_binary())
    k = kinds(p)
    assert len(k["x"]) == len(k["y"]) == len(k["delta"]) == 1
    assert all(c.binary for name in ("x", "y", "delta") for c in k[name])
    assert not any(c.binary for name in ("tau", "t", "p") for c in k[name])
    assert p.integral.sum() == 3
    (match,) = p.rows_with_tag(MATCH)
    tau = p.column_index[("tau", "e", "c", "e", "v", "v")]
    row = p.A.getrow(match).toarray().ravel()
    assert row[tau] == 1.0 and np.count_nonzero(row) == 1
    assert p.rhs[match] == pytest.approx(1.0)


def test_every_row_tagged_and_coefficients_finite():
    scn = random_tiny_scenario(5)
    p = build(scn.logical, scn.physical, scn.energy, VariablePolicy.all_binary())
    assert all(r.tag in TAGS for r in p.rows)
    assert np.isfinite(p.A.data).all() and np.isfinite(p.cost).all()
    bins = p.binary_columns()
    assert (p.lower[bins] >= 0).all() and (p.upper[bins] <= 1).all()


def test_fixing_every_binary_clears_integrality(minimal):
    lg, pg, em = minimal
    p = build(lg, pg, em, VariablePolicy.fix_all(1))
    assert not p.integral.any()
    bins = p.binary_columns()
    assert (p.lower[bins] == 1).all() and (p.upper[bins] == 1).all()


def test_policy_with_unknown_variable(minimal):
    lg, pg, em = minimal
    with pytest.raises(InconsistentPolicy):
        build(lg, pg, em, VariablePolicy({("x", "c", "nowhere"): 1}))


def test_policy_fix_value_must_be_binary():
    with pytest.raises(InconsistentPolicy):
        VariablePolicy({("y", "c"): 0.5})


def test_delay_rows_only_with_a_bound(minimal):
    lg, pg, em = minimal
    assert not build(lg, pg, em).rows_with_tag(DELAY)
    links = {("e", "c"): LinkSpec(10.0, delay=0.1)}
    bounded = PhysicalGraph(pg.endpoints, pg.nodes, pg.node_capacity, links, max_delay={"e": 1.0})
    assert len(build(lg, bounded, em).rows_with_tag(DELAY)) == 1


def test_pruning_vepc_has_no_reverse_flow():
    lg = vepc_fixture()
    pg = PhysicalGraph(("RRH",), ("c",), {"c": 10.0}, {("RRH", "c"): LinkSpec(10.0)})
    pruned = variable_pruning(lg, pg)
    assert ("p", "c", "RRH", HSS, ENB) in pruned
    assert ("tau", "RRH", "c", "RRH", HSS, ENB) in pruned
    assert ("p", "c", "RRH", ENB, PSGW) not in pruned


def test_pruning_without_chi_keeps_only_injection():
    lg = LogicalGraph(("e",), ("a", "b"), {("e", "a"): 1.0}, {})
    pg = PhysicalGraph(("e",), ("c",), {"c": 10.0}, {("e", "c"): LinkSpec(10.0)})
    p = build(lg, pg, _em(pg))
    traffic = [c.key for c in p.columns if c.key[0] == "tau"]
    assert traffic == [("tau", "e", "c", "e", "a", "a")]


def test_full_mesh_chi_prunes_nothing_but_foreign_links():
    vnfs = ("a", "b", "c")
    chi = {("e", "a", "b"): 1.0, ("e", "a", "c"): 1.0, ("a", "b", "c"): 1.0}
    lg = LogicalGraph(("e",), vnfs, {("e", "a"): 1.0, ("e", "b"): 1.0, ("e", "c"): 1.0}, chi)
    flows = derive_logical_flows(lg)
    assert {(v1, v2) for (_, v1, v2) in flows} == {("a", "b"), ("a", "c"), ("b", "c")}
    pg = PhysicalGraph(("e",), ("n", "m"), {"n": 10.0, "m": 10.0},
                       {("e", "n"): LinkSpec(10.0), ("n", "m"): LinkSpec(10.0), ("m", "n"): LinkSpec(10.0)})
    pruned = variable_pruning(lg, pg)
    for v1, v2 in [("a", "b"), ("a", "c"), ("b", "c"), ("a", "a"), ("b", "b"), ("c", "c")]:
        for c in ("n", "m"):
            assert ("p", c, "e", v1, v2) not in pruned
        assert ("tau", "n", "m", "e", v1, v2) not in pruned


def _em(pg):
    return EnergyModel({c: 1.0 for c in pg.nodes}, 1.0)


def test_two_node_vepc_splits_processing():
    # neither node can host the whole chain, so the optimum spreads the VNFs
    # over both, as in the two-node illustration of the service graph
    lg = vepc_fixture(enb_to_mme=0.3, psgw_to_mme=0.2)
    links = {("RRH", "a"): LinkSpec(10.0), ("a", "b"): LinkSpec(10.0), ("b", "a"): LinkSpec(10.0)}
    pg = PhysicalGraph(("RRH",), ("a", "b"), {"a": 1.6, "b": 1.6}, links)
    em = EnergyModel({"a": 5.0, "b": 5.0}, 1.0, 0.1, 0.1)
    rep = solve_exact(build(lg, pg, em, VariablePolicy.all_binary()))
    assert rep.optimal
    sol = rep.solution
    assert validate(sol, lg, pg, em).ok
    used = {c for (c, _, _, _), val in sol.processed.items() if val > 1e-9}
    assert used == {"a", "b"}
    done = {}
    for (_, _, v1, v2), val in sol.processed.items():
        done[(v1, v2)] = done.get((v1, v2), 0.0) + val
    assert done[(ENB, ENB)] == pytest.approx(1.0)
    assert done[(ENB, PSGW)] == pytest.approx(1.0)
    assert done[(ENB, MME)] + done[(PSGW, MME)] == pytest.approx(0.5)
    assert done[(MME, HSS)] == pytest.approx(0.5)


def test_build_is_deterministic():
    scn = random_tiny_scenario(11)
    a = build(scn.logical, scn.physical, scn.energy)
    b = build(scn.logical, scn.physical, scn.energy)
    assert [c.key for c in a.columns] == [c.key for c in b.columns]
    assert [r.id for r in a.rows] == [r.id for r in b.rows]
    assert (a.A != b.A).nnz == 0
    assert to_lp_format(a) == to_lp_format(b)


def test_lp_export_tags_every_row(minimal):
    lg, pg, em = minimal
    p = build(lg, pg, em)
    text = to_lp_format(p)
    assert text.splitlines()[1] == "Minimize"
    for tag in (CAPACITY_L, CAPACITY_C, MATCH):
        assert f"\\ {tag}" in text
    assert text.rstrip().endswith("End")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_lp_solutions_pass_the_model_check(seed):
    # builder soundness: whatever satisfies the rows satisfies the model
    scn = random_tiny_scenario(seed)
    p = build(scn.logical, scn.physical, scn.energy, VariablePolicy.fix_all(1))
    rep = solve_lp(p)
    assert rep.optimal
    assert validate(rep.solution, scn.logical, scn.physical, scn.energy).ok


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.0, 4.0))
def test_more_capacity_never_hurts(seed, alpha):
    scn = random_tiny_scenario(seed)
    pg = scn.physical
    bigger = PhysicalGraph(
        pg.endpoints, pg.nodes, {c: k * alpha for c, k in pg.node_capacity.items()},
        {l: LinkSpec(s.bandwidth * alpha, s.delay) for l, s in pg.links.items()},
    )
    lo = solve_lp(build(scn.logical, pg, scn.energy, VariablePolicy.fix_all(1)))
    hi = solve_lp(build(scn.logical, bigger, scn.energy, VariablePolicy.fix_all(1)))
    assert lo.optimal and hi.optimal
    assert hi.objective <= lo.objective + 1e-6 * max(1.0, lo.objective)
