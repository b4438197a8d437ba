import os
import re
import tempfile

import pytest

from reliefroute.generators import small_instance, tiny_instance
from reliefroute.milp import (
    CascadeError,
    ModelTooLarge,
    add_cascade_step,
    build_model,
    count_report,
    emit_lp,
    format_solution,
    level_escalation,
    levels_used,
    parse_solution,
    solution_document,
    vehicle_durations,
    vtok,
)
from reliefroute.oracle import OracleInfeasible, brute_force_oracle
from reliefroute.validation import validate_solution

from conftest import line_instance
from milp_domain import domain_counts


def solve_lp(cs, time_limit=60.0):
    """Solve the emitted LP with HiGHS; returns (status, objective, values)."""
    highspy = pytest.importorskip("highspy")
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.lp")
        with open(path, "w") as f:
            f.write(emit_lp(cs))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("time_limit", time_limit)
        # big-M rows turn the default 1e-6 integrality slack into time slack
        h.setOptionValue("mip_feasibility_tolerance", 1e-9)
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        assert h.readModel(path) == highspy.HighsStatus.kOk
        h.run()
        status = h.modelStatusToString(h.getModelStatus())
        if status != "Optimal":
            return status, None, {}
        sol = h.getSolution().col_value
        names = [h.getColName(i)[1] for i in range(h.getNumCol())]
        return status, h.getInfo().objective_function_value, dict(zip(names, sol))


# counts ------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_counts_match_domain_enumerator(seed):
    inst = tiny_instance(seed)
    for lv in (1, 2):
        levels = {v: lv for v in inst.vehicles}
        cs = build_model(inst, levels, variable_budget=None)
        assert count_report(cs) == domain_counts(inst, levels)


@pytest.mark.parametrize("seed", range(5))
def test_counts_with_ports_and_optional_rows(seed):
    inst = small_instance(seed)
    levels = {v: 1 + n % 2 for n, v in enumerate(inst.vehicles)}
    cs = build_model(inst, levels, optional_constraints=True, eq625_all_cargo=True, variable_budget=None)
    assert count_report(cs) == domain_counts(inst, levels, optional=True, all_cargo=True)


def test_rows_reference_declared_variables():
    cs = build_model(small_instance(1), 2, optional_constraints=True, variable_budget=None)
    for r in cs.rows.values():
        assert set(r.terms) <= set(cs.variables)
        assert r.terms


def test_g_count_formula():
    inst = small_instance(2)
    cs = build_model(inst, 1, variable_budget=None)
    ports = inst.names_of_kind("transhipment_port")
    expect = 0
    for p in ports:
        tr = set(inst.vertex(p).transhippable)
        n = sum(1 for v in inst.vehicles if p in inst.accessible_set(v[1]) and tr & set(inst.vt(v[1]).compatible_cargos))
        expect += 4 * n * n
    assert count_report(cs)["variables"].get("g", 0) == expect


def test_no_ports_no_port_families():
    fams = count_report(build_model(tiny_instance(0), 1))["variables"]
    assert all(fams.get(f, 0) == 0 for f in "ogrnew")


def test_doubling_levels_grows_x():
    inst = tiny_instance(1)
    one = count_report(build_model(inst, 1))["variables"]["x"]
    v0 = inst.vehicles[0]
    two = count_report(build_model(inst, {v: (2 if v == v0 else 1) for v in inst.vehicles}))["variables"]["x"]
    assert two > one


def test_single_level_has_no_inter_level_variables():
    cs = build_model(tiny_instance(3), 1)
    # inter-level names carry the vertex before the two level indices
    inter = re.compile(r"^[xyt]\([^,]+,[^0-9][^,]*,\d+,\d+")
    assert not any(inter.match(n) for n in cs.variables)
    cs2 = build_model(tiny_instance(3), 2)
    assert any(inter.match(n) for n in cs2.variables)


def test_empty_transhippable_port():
    inst = line_instance(
        [
            {"name": "WH", "kind": "warehouse", "stock": {"1D": 5}},
            {"name": "TP", "kind": "transhipment_port", "transhippable": []},
            {"name": "N", "kind": "node_split", "demand": {"1D": 5}},
        ],
        {("VD", "WH"): 1, ("VD", "TP"): 1, ("VD", "N"): 1, ("WH", "TP"): 1, ("WH", "N"): 1, ("TP", "N"): 1},
    )
    cs = build_model(inst, 1)
    fams = count_report(cs)["variables"]
    assert all(fams.get(f, 0) == 0 for f in "rneog")
    assert any(r.group == "eq21a" for r in cs.rows.values())
    assert not any(r.group.startswith("eq20") for r in cs.rows.values())


def test_open_trip_objective_subtracts_return_leg():
    inst = line_instance(
        [{"name": "WH", "kind": "warehouse", "stock": {"1D": 5}}, {"name": "N", "kind": "node_split", "demand": {"1D": 5}}],
        {("VD", "WH"): 2, ("VD", "N"): 3, ("WH", "N"): 1},
        open_trip=True,
    )
    cs = build_model(inst, 1)
    rows = [r for r in cs.rows.values() if r.group == "eq65a"]
    assert len(rows) == 1
    v = vtok(inst.vehicles[0])
    assert rows[0].terms[f"x({v},1,N,VD)"] == pytest.approx(3)
    assert rows[0].terms[f"a({v},1,VD)"] == -1


def test_variable_budget_refusal():
    with pytest.raises(ModelTooLarge) as e:
        build_model(small_instance(0), 3, variable_budget=100)
    assert e.value.budget == 100
    assert sum(e.value.counts.values()) > 100
    assert "x=" in str(e.value)


def test_bad_levels():
    inst = tiny_instance(0)
    with pytest.raises(ValueError):
        build_model(inst, 0)
    with pytest.raises(ValueError):
        build_model(inst, {inst.vehicles[0]: 1})


def test_integrality_marks():
    inst = tiny_instance(0)
    kinds = {v.family: v.kind for v in build_model(inst, 1).variables.values()}
    assert kinds["x"] == "B" and kinds["y"] == "I" and kinds["b"] == "I"
    kinds = {v.family: v.kind for v in build_model(inst, 1, integrality="continuous").variables.values()}
    assert kinds["x"] == "B" and kinds["y"] == "C"


# emission ----------------------------------------------------------------------


def test_emit_is_deterministic():
    inst = small_instance(4)
    assert emit_lp(build_model(inst, 1)) == emit_lp(build_model(inst, 1))


def test_lp_parses_in_highs():
    highspy = pytest.importorskip("highspy")
    cs = build_model(small_instance(0), 1, optional_constraints=True)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.lp")
        with open(path, "w") as f:
            f.write(emit_lp(cs))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        assert h.readModel(path) == highspy.HighsStatus.kOk
        assert h.getNumCol() == len(cs.variables)
        assert h.getNumRow() == len(cs.rows)


def test_empty_demand_objective_zero():
    inst = line_instance(
        [{"name": "WH", "kind": "warehouse", "stock": {"1D": 5}}, {"name": "N", "kind": "node_split", "demand": {"1D": 0}}],
        {("VD", "WH"): 1, ("VD", "N"): 1, ("WH", "N"): 1},
    )
    status, obj, _ = solve_lp(build_model(inst, 1))
    assert status == "Optimal" and obj == pytest.approx(0, abs=1e-9)


def test_solution_round_trip():
    vals = {"x(a,1)": 1.0, "z_x": 12.5}
    assert parse_solution(format_solution(vals)) == vals
    assert parse_solution("# c\n\nz_x = 3\n") == {"z_x": 3.0}
    with pytest.raises(ValueError):
        parse_solution("z_x")
    with pytest.raises(ValueError):
        parse_solution("z_x abc")


# cascade -----------------------------------------------------------------------


def two_vehicle_model():
    inst = tiny_instance(0)
    assert len(inst.vehicles) == 2
    return inst, build_model(inst, 1)


def test_cascade_step_keeps_other_vehicle_linked():
    inst, cs = two_vehicle_model()
    a, b = inst.vehicles
    add_cascade_step(cs, 40.0, a)
    linked = {n.split("(", 1)[1].split(",")[0] for n, r in cs.rows.items() if r.group in ("eq65a", "eq65b")}
    assert linked == {vtok(b)}
    bounds = {n: r for n, r in cs.rows.items() if r.group == "cascade"}
    assert set(bounds) == {f"cascade_bound({vtok(a)},1)", f"cascade_bound({vtok(b)},1)"}
    assert all(r.rhs == 40.0 and r.sense == "<=" for r in bounds.values())
    add_cascade_step(cs, 30.0, b)
    assert cs.rows[f"cascade_bound({vtok(a)},1)"].rhs == 40.0
    assert cs.rows[f"cascade_bound({vtok(b)},1)"].rhs == 30.0
    assert cs.fixed == [a, b]
    with pytest.raises(CascadeError):
        add_cascade_step(cs, 20.0, b)


def test_cascade_rejects_unknown_vehicle():
    _, cs = two_vehicle_model()
    with pytest.raises(CascadeError):
        add_cascade_step(cs, 1.0, ("nope", "VT1", 1))


def test_level_escalation():
    vs = [("VD", "VT1", 1), ("VD", "VT1", 2)]
    first = level_escalation(vs)
    assert first == {vs[0]: 1, vs[1]: 1}
    assert level_escalation(first, "infeasible") == {vs[0]: 2, vs[1]: 2}
    assert level_escalation({vs[0]: 3, vs[1]: 0}, "solved") == {vs[0]: 4, vs[1]: 1}
    with pytest.raises(ValueError):
        level_escalation(first, "maybe")
    with pytest.raises(ValueError):
        level_escalation(vs, "solved")


@pytest.mark.parametrize("seed", range(3))
def test_exact_solve_matches_oracle_and_validates(seed):
    inst = tiny_instance(seed)
    try:
        want = brute_force_oracle(inst).vector[0]
    except OracleInfeasible:
        pytest.skip("oracle infeasible")
    cs = build_model(inst, 1)
    status, obj, vals = solve_lp(cs)
    if status == "Time limit reached":
        pytest.skip("solver time limit")
    assert status == "Optimal"
    assert obj == pytest.approx(want, abs=1e-6)
    assert max(vehicle_durations(cs, vals).values()) == pytest.approx(want, abs=1e-6)
    assert set(levels_used(cs, vals).values()) <= {0, 1}
    assert validate_solution(inst, solution_document(cs, vals)).violations == []
