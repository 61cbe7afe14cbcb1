import numpy as np
import pytest
from scipy.optimize import linprog

from sliceprov.milp import MilpModel, MilpVariable, make_constraint
from sliceprov.simplex import solve_lp
from sliceprov.solver import (
    SolverConfig,
    export_lp,
    import_solution,
    parse_lp,
    solve_model,
)

INF = np.inf


# ---------------------------------------------------------------------------
# Bounded-variable simplex
# ---------------------------------------------------------------------------


def test_simplex_small_known_optimum():
    # max 3x + 2y s.t. x + y <= 4, x + 3y <= 6, 0 <= x, y -> (4, 0), value 12.
    res = solve_lp(
        np.array([[1.0, 1.0], [1.0, 3.0]]),
        np.array([4.0, 6.0]),
        ["<=", "<="],
        np.array([-3.0, -2.0]),
        np.zeros(2),
        np.array([INF, INF]),
    )
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-12.0, abs=1e-9)
    assert res.x == pytest.approx([4.0, 0.0], abs=1e-9)


def test_simplex_bounded_variables_and_bound_flip():
    # min -x - y with x <= 2, y <= 3 and x + y >= 1: optimum at both uppers.
    res = solve_lp(
        np.array([[1.0, 1.0]]),
        np.array([1.0]),
        [">="],
        np.array([-1.0, -1.0]),
        np.zeros(2),
        np.array([2.0, 3.0]),
    )
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-5.0, abs=1e-9)


def test_simplex_equality_rows():
    # min x + y s.t. x + y = 2, x - y = 0 -> (1, 1), value 2.
    res = solve_lp(
        np.array([[1.0, 1.0], [1.0, -1.0]]),
        np.array([2.0, 0.0]),
        ["=", "="],
        np.array([1.0, 1.0]),
        np.zeros(2),
        np.array([INF, INF]),
    )
    assert res.status == "optimal"
    assert res.x == pytest.approx([1.0, 1.0], abs=1e-9)


def test_simplex_infeasible():
    res = solve_lp(
        np.array([[1.0], [1.0]]),
        np.array([1.0, 3.0]),
        ["<=", ">="],
        np.array([1.0]),
        np.zeros(1),
        np.array([INF]),
    )
    assert res.status == "infeasible"


def test_simplex_unbounded():
    res = solve_lp(
        np.array([[1.0]]),
        np.array([0.0]),
        [">="],
        np.array([-1.0]),
        np.zeros(1),
        np.array([INF]),
    )
    assert res.status == "unbounded"


def test_simplex_matches_reference_solver_on_random_lps():
    rng = np.random.default_rng(42)
    for trial in range(150):
        m = int(rng.integers(1, 6))
        n = int(rng.integers(1, 7))
        A = rng.integers(-3, 4, size=(m, n)).astype(float)
        c = rng.integers(-5, 6, size=n).astype(float)
        lower = np.zeros(n)
        upper = rng.uniform(0.5, 5.0, size=n)
        relations = [rng.choice(["<=", ">=", "="]) for _ in range(m)]
        x0 = rng.uniform(lower, upper)
        b = A @ x0 + rng.integers(-1, 2, size=m)

        ours = solve_lp(A, b, relations, c, lower, upper)
        A_ub, b_ub, A_eq, b_eq = [], [], [], []
        for row, rhs, rel in zip(A, b, relations):
            if rel == "<=":
                A_ub.append(row); b_ub.append(rhs)
            elif rel == ">=":
                A_ub.append(-row); b_ub.append(-rhs)
            else:
                A_eq.append(row); b_eq.append(rhs)
        ref = linprog(
            c,
            A_ub=np.array(A_ub) if A_ub else None,
            b_ub=np.array(b_ub) if b_ub else None,
            A_eq=np.array(A_eq) if A_eq else None,
            b_eq=np.array(b_eq) if b_eq else None,
            bounds=list(zip(lower, upper)),
            method="highs",
        )
        if ref.status == 2:
            assert ours.status == "infeasible", f"trial {trial}"
        else:
            assert ref.status == 0
            assert ours.status == "optimal", f"trial {trial}"
            assert ours.objective == pytest.approx(ref.fun, abs=1e-6), f"trial {trial}"
            # Returned point must actually be feasible.
            assert np.all(ours.x >= lower - 1e-7)
            assert np.all(ours.x <= upper + 1e-7)
            lhs = A @ ours.x
            for value, rhs, rel in zip(lhs, b, relations):
                if rel == "<=":
                    assert value <= rhs + 1e-6
                elif rel == ">=":
                    assert value >= rhs - 1e-6
                else:
                    assert value == pytest.approx(rhs, abs=1e-6)


# ---------------------------------------------------------------------------
# Branch and bound
# ---------------------------------------------------------------------------


def _knapsack_model():
    model = MilpModel()
    values = {"x1": 10.0, "x2": 6.0, "x3": 4.0}
    weights = {"x1": 5.0, "x2": 4.0, "x3": 3.0}
    for name in values:
        model.add_variable(MilpVariable(name, "binary", 0.0, 1.0))
    model.add_constraint(
        make_constraint("cap", [(w, n) for n, w in weights.items()], "<=", 10)
    )
    model.set_objective(values)
    return model


def test_bnb_knapsack():
    res = solve_model(_knapsack_model())
    assert res.status == "optimal"
    assert res.objective == pytest.approx(16.0)
    assert res.assignment == {"x1": 1, "x2": 1, "x3": 0}
    assert res.gap == 0.0


def test_bnb_integer_variables():
    # max 2x + 3y s.t. 4x + 5y <= 14, x, y integer in [0, 3] -> y = 2, x = 1.
    model = MilpModel()
    model.add_variable(MilpVariable("x", "nonneg_integer", 0.0, 3.0))
    model.add_variable(MilpVariable("y", "nonneg_integer", 0.0, 3.0))
    model.add_constraint(make_constraint("cap", [(4, "x"), (5, "y")], "<=", 14))
    model.set_objective({"x": 2.0, "y": 3.0})
    res = solve_model(model)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(8.0)


def test_bnb_infeasible_model():
    model = MilpModel()
    model.add_variable(MilpVariable("x", "nonneg_integer", 1.0, 2.0))
    model.add_constraint(make_constraint("no", [(1, "x")], "<=", 0))
    res = solve_model(model)
    assert res.status == "infeasible"
    assert res.assignment == {}


def test_bnb_warm_start_used_and_validated():
    model = _knapsack_model()
    good = {"x1": 1, "x2": 1, "x3": 0}
    res = solve_model(model, warm_start=good)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(16.0)
    # An infeasible warm start is ignored, not trusted.
    bad = {"x1": 1, "x2": 1, "x3": 1}
    res = solve_model(model, warm_start=bad)
    assert res.objective == pytest.approx(16.0)


def test_bnb_node_limit_reports_gap():
    model = _knapsack_model()
    res = solve_model(model, SolverConfig(node_limit=1))
    assert res.status in ("feasible_gap", "optimal")
    if res.status == "feasible_gap":
        assert res.gap > 0.0
    # The all-zero incumbent guarantees an assignment either way.
    assert res.assignment


# ---------------------------------------------------------------------------
# LP text format and external solutions
# ---------------------------------------------------------------------------


def _mixed_model():
    model = MilpModel()
    model.add_variable(MilpVariable("kN_a", "nonneg_integer", 0.0, 7.0))
    model.add_variable(MilpVariable("kN_b", "nonneg_integer", 0.0, 4.0))
    model.add_variable(MilpVariable("d_s", "binary", 0.0, 1.0))
    model.add_constraint(
        make_constraint("dem", [(0.5, "kN_a"), (0.25, "kN_b"), (-2, "d_s")], ">=", 0)
    )
    model.add_constraint(make_constraint("cap", [(1, "kN_a"), (1, "kN_b")], "<=", 9))
    model.add_constraint(make_constraint("tie", [(1, "kN_a"), (-1, "kN_b")], "=", 1))
    model.set_objective({"d_s": 10.0, "kN_a": -1.0, "kN_b": -0.5})
    return model


def test_lp_round_trip_preserves_solution():
    model = _mixed_model()
    text = export_lp(model)
    assert text.startswith("Maximize")
    assert "Subject To" in text and "Bounds" in text and "End" in text
    parsed = parse_lp(text)
    assert set(parsed.variables) == set(model.variables)
    for name, var in model.variables.items():
        assert parsed.variables[name].kind == var.kind
        assert parsed.variables[name].lower == var.lower
        assert parsed.variables[name].upper == var.upper
    assert len(parsed.constraints) == len(model.constraints)
    ours = solve_model(model)
    theirs = solve_model(parsed)
    assert ours.status == theirs.status == "optimal"
    assert ours.objective == pytest.approx(theirs.objective, abs=1e-9)


def test_lp_round_trip_is_idempotent():
    # One parse/export pass normalizes ordering; after that it is a fixpoint.
    normalized = export_lp(parse_lp(export_lp(_mixed_model())))
    assert export_lp(parse_lp(normalized)) == normalized


def test_parse_lp_rejects_garbage():
    with pytest.raises(ValueError):
        parse_lp("junk before any section\nMaximize\n obj: x\nEnd")
    with pytest.raises(ValueError):
        parse_lp("Maximize\n obj: x\nSubject To\n r1: x + y\nEnd")  # no relation


def test_import_solution_validates():
    model = _mixed_model()
    res = solve_model(model)
    score = import_solution(model, res.assignment)
    assert score == pytest.approx(res.objective, abs=1e-9)
    with pytest.raises(ValueError):
        import_solution(model, {**res.assignment, "kN_a": 99})  # bound violation
    with pytest.raises(ValueError):
        import_solution(model, {**res.assignment, "kN_a": 1.5})  # not integral
    missing = dict(res.assignment)
    missing.pop("d_s")
    with pytest.raises(ValueError):
        import_solution(model, missing)
    infeasible = {name: 0 for name in model.variables}
    infeasible["kN_a"] = 0
    with pytest.raises(ValueError):
        import_solution(model, infeasible)  # violates the equality row
