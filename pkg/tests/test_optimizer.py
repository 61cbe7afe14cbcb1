from fractions import Fraction

import numpy as np
import pytest

from sliceprov.demand import slice_catalog
from sliceprov.milp import (
    LinearConstraint,
    MilpModel,
    MilpVariable,
    accept_var,
    build_joint,
    build_sequential_step,
    cost_floor_row,
    effective_capacities,
    flow_constraints,
    link_var,
    make_constraint,
    node_var,
    used_var,
    variable_upper_bounds,
)
from sliceprov.probability import DemandBox, targets_for_gamma
from sliceprov.topology import ResourceVector, build_fat_tree

from _helpers import chain_spec, micro_spec

CAPS = {
    "central": ResourceVector(16.0, 32.0, 0.0),
    "regional": ResourceVector(8.0, 16.0, 0.0),
    "edge": ResourceVector(4.0, 12.0, 0.0),
    "rrh": ResourceVector(1.0, 2.0, 2.1),
}
BWS = {"central-regional": 10.0, "regional-edge": 5.0, "edge-rrh": 2.5}


def default_graph():
    return build_fat_tree(2, CAPS, bandwidths=BWS)


def test_variable_and_constraint_validation():
    with pytest.raises(ValueError):
        MilpVariable("x", "continuous", 0.0, 1.0)
    with pytest.raises(ValueError):
        MilpVariable("x", "nonneg_integer", 0.0, float("inf"))
    with pytest.raises(ValueError):
        MilpVariable("x", "binary", 0.0, 2.0)
    with pytest.raises(ValueError):
        LinearConstraint("r", (), "<=", Fraction(0))
    with pytest.raises(ValueError):
        make_constraint("r", [(1, "x")], "<>", 0)
    model = MilpModel()
    model.add_variable(MilpVariable("x", "binary", 0.0, 1.0))
    with pytest.raises(ValueError):
        model.add_variable(MilpVariable("x", "binary", 0.0, 1.0))
    with pytest.raises(ValueError):
        model.add_constraint(make_constraint("r", [(1, "ghost")], "<=", 0))
    with pytest.raises(ValueError):
        model.set_objective({"ghost": 1.0})


def test_variable_name_sanitization():
    assert node_var("type1_0", "rrh-0-0-1", "vBBU") == "kN_type1_0_rrh_0_0_1_vBBU"
    assert accept_var("a b") == "d_a_b"
    assert used_var("s", "n.1") == "ku_s_n_1"
    assert "__" in link_var("s", "a", "b", "v", "w")


def test_effective_capacities_subtract_reserves_and_consumption():
    graph = default_graph()
    node_res = {i: ResourceVector(0.5, 0.5, 0.0) for i in graph.nodes}
    link_res = {k: 1.0 for k in graph.links}
    consumed = {("central", "c"): 2.0}
    warnings = []
    node_cap, link_cap = effective_capacities(
        graph, node_res, link_res, consumed, None, warnings
    )
    assert node_cap[("central", "c")] == pytest.approx(16.0 - 0.5 - 2.0)
    assert link_cap[("central", "regional-0")] == pytest.approx(9.0)
    # Wireless reserve of 0 on non-rrh layers leaves capacity 0 without noise.
    assert node_cap[("central", "w")] == 0.0
    assert warnings == []


def test_effective_capacities_clamp_and_warn():
    graph = default_graph()
    node_res = {i: ResourceVector(100.0, 0.0, 0.0) for i in graph.nodes}
    link_res = {k: 0.0 for k in graph.links}
    warnings = []
    node_cap, _ = effective_capacities(graph, node_res, link_res, warnings=warnings)
    assert all(node_cap[(i, "c")] == 0.0 for i in graph.nodes)
    assert any("clamped" in w for w in warnings)


def test_variable_upper_bounds_audit():
    graph = default_graph()
    spec = micro_spec(req_c=0.5)  # single VNF, requirement 0.5 compute
    box = DemandBox(np.array([1.3, 0.0, 0.0]))
    node_cap, link_cap = effective_capacities(graph, None, None)
    node_bounds, link_bounds, need_by_vnf, need_by_vlink = variable_upper_bounds(
        spec, graph, box, node_cap, link_cap
    )
    # Requirement side: ceil(1.3 / 0.5) = 3 instances cover every component.
    assert need_by_vnf["vA"] == 3
    assert node_bounds[("central", "vA")] == 3
    # Capacity side: an RRH with 1 CPU hosts at most floor(1 / 0.5) = 2.
    assert node_bounds[("rrh-0-0-0", "vA")] == 2
    assert need_by_vlink == {}
    assert link_bounds == {}


def test_single_slice_model_dimensions():
    graph = default_graph()
    spec = slice_catalog()[0]
    box = targets_for_gamma(spec, 3538.678)
    model = build_sequential_step(spec, graph, box)
    # 15 nodes x 3 VNFs + 43 links x 2 vlinks + 15 usage binaries + 1 accept.
    assert len(model.variables) == 45 + 86 + 15 + 1 == 147
    kinds = {v.kind for v in model.variables.values()}
    assert kinds == {"nonneg_integer", "binary"}
    assert all(np.isfinite(v.upper) for v in model.variables.values())
    # Objective: income on the accept binary, costs negative elsewhere.
    assert model.objective[accept_var(spec.id)] == spec.income
    assert model.objective[used_var(spec.id, "central")] == -65.0
    names = {c.name for c in model.constraints}
    assert any(n.startswith("dem_") for n in names)
    assert any(n.startswith("demcount_") for n in names)
    assert any(n.startswith("flow_") for n in names)
    assert any(n.startswith("use_") for n in names)
    assert any(n.startswith("cap_") for n in names)


def test_joint_model_shares_capacity_rows():
    graph = default_graph()
    a = micro_spec(slice_id="a")
    b = micro_spec(slice_id="b")
    targets = {
        "a": DemandBox(np.array([0.4, 0.0, 0.0])),
        "b": DemandBox(np.array([0.4, 0.0, 0.0])),
    }
    model = build_joint([a, b], graph, targets)
    cap_rows = [c for c in model.constraints if c.name == "cap_central_c"]
    assert len(cap_rows) == 1
    involved = {v for _, v in cap_rows[0].terms}
    assert node_var("a", "central", "vA") in involved
    assert node_var("b", "central", "vA") in involved
    with pytest.raises(ValueError):
        build_joint([a, a], graph, targets)


def test_cost_floor_row_structure():
    graph = default_graph()
    spec = micro_spec()
    row = cost_floor_row(spec, graph, 42.0)
    assert row.relation == ">="
    assert row.rhs == 0
    terms = dict((v, c) for c, v in row.terms)
    assert terms[accept_var(spec.id)] == -42
    assert terms[used_var(spec.id, "central")] == 65


def test_flow_constraints_chain_ratios_are_exact():
    graph = default_graph()
    spec = chain_spec()
    rows = flow_constraints(spec, graph)
    # One row per (vlink, node) after dropping empty rows; single-vlink chain
    # means every node coefficient is exactly +/-1.
    assert len(rows) == len(graph.nodes)
    for row in rows:
        assert row.relation == "="
        assert row.rhs == 0
        for coeff, _ in row.terms:
            assert isinstance(coeff, Fraction)
            assert coeff in (Fraction(1), Fraction(-1))


def test_flow_constraints_colocated_chain_balances():
    graph = default_graph()
    spec = chain_spec()
    node = "edge-0-0"
    # Both VNFs on one node, demand routed over the loopback only.
    values = {
        node_var(spec.id, node, "vA"): Fraction(2),
        node_var(spec.id, node, "vB"): Fraction(2),
        link_var(spec.id, node, node, "vA", "vB"): Fraction(5),
    }
    for row in flow_constraints(spec, graph):
        total = sum(c * values.get(v, Fraction(0)) for c, v in row.terms)
        assert total == row.rhs, row.name


def test_flow_constraints_split_placement_requires_transport():
    graph = default_graph()
    spec = chain_spec()
    # vA on the edge node, vB on a child RRH, no connecting link: unbalanced.
    values = {
        node_var(spec.id, "edge-0-0", "vA"): Fraction(1),
        node_var(spec.id, "rrh-0-0-0", "vB"): Fraction(1),
    }
    rows = flow_constraints(spec, graph)
    unbalanced = [
        r for r in rows
        if sum(c * values.get(v, Fraction(0)) for c, v in r.terms) != r.rhs
    ]
    assert unbalanced
    # Adding one unit of the virtual link on the physical edge->rrh link
    # restores balance everywhere.
    values[link_var(spec.id, "edge-0-0", "rrh-0-0-0", "vA", "vB")] = Fraction(1)
    for row in rows:
        total = sum(c * values.get(v, Fraction(0)) for c, v in row.terms)
        assert total == row.rhs, row.name


def test_sequential_step_tightens_with_consumption():
    graph = default_graph()
    spec = micro_spec(req_c=0.5)
    box = DemandBox(np.array([0.9, 0.0, 0.0]))
    free = build_sequential_step(spec, graph, box)
    congested = build_sequential_step(
        spec, graph, box, consumed_node={(i, "c"): 0.6 for i in graph.nodes}
    )
    cap_free = next(c for c in free.constraints if c.name == "cap_rrh_0_0_0_c")
    cap_tight = next(c for c in congested.constraints if c.name == "cap_rrh_0_0_0_c")
    assert float(cap_tight.rhs) == pytest.approx(float(cap_free.rhs) - 0.6)
    # Tighter capacity also shrinks the audited variable bounds.
    v_free = free.variables[node_var(spec.id, "rrh-0-0-0", "vA")]
    v_tight = congested.variables[node_var(spec.id, "rrh-0-0-0", "vA")]
    assert v_tight.upper <= v_free.upper
