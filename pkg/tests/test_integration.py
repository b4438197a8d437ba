import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reliefroute.integration as integration
from reliefroute.dts import Stocks, build_dts
from reliefroute.generators import small_instance
from reliefroute.instance import NODE_KINDS, NODE_SIMULTANEOUS, PORT
from reliefroute.integration import (
    IntegrationLogic,
    UNIVERSE_SIZE,
    allocate_vehicles,
    choose_roprs,
    compact_route6,
    enumerate_logics,
    integrate_sre,
    logic_universe,
    match_insert,
    order_sres,
    ropr_combos,
    ropr_count,
    shuffle_logics,
    similarity_score,
)
from reliefroute.routes import Route6, RouteCluster, Stop, TimeTuple, status_ok
from reliefroute.sre import SRE, CausalityLedger, Generator, Unsatisfiable

from conftest import hp, line_instance


def sre(i, set1=(), set2=("X", {}), set3=(), vt="VT1", depots=("VD",), tags=None):
    return SRE(i, vt, frozenset(depots), list(set1), set2, list(set3), dict(tags or {}))


def rng(n=0):
    return np.random.default_rng(n)


# ordering ----------------------------------------------------------------------


def test_order_superior_before_inferior():
    led = CausalityLedger()
    row = led.open_row("TP")
    row.superior.append(1)
    row.inferior.append(2)
    for seed in range(10):
        assert order_sres(led, [2, 1], rng(seed)) == [1, 2]


def test_order_chain():
    led = CausalityLedger()
    a = led.open_row("TP")
    a.superior.append(1)
    a.inferior.append(2)
    b = led.open_row("TP")
    b.superior.append(2)
    b.inferior.append(3)
    for seed in range(10):
        assert order_sres(led, [3, 2, 1], rng(seed)) == [1, 2, 3]


def test_order_free_sres_random():
    seen = {tuple(order_sres(CausalityLedger(), [1, 2], rng(s))) for s in range(30)}
    assert seen == {(1, 2), (2, 1)}


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 8), st.integers(1, 8)), max_size=10), st.integers(0, 1000))
def test_order_is_topological(edges, seed):
    edges = [(a, b) for a, b in edges if a < b]  # acyclic by construction
    led = CausalityLedger()
    for a, b in edges:
        r = led.open_row("TP")
        r.superior.append(a)
        r.inferior.append(b)
    out = order_sres(led, range(1, 9), rng(seed))
    assert sorted(out) == list(range(1, 9))
    pos = {x: n for n, x in enumerate(out)}
    assert all(pos[a] < pos[b] for a, b in edges)


# route portions ----------------------------------------------------------------


def test_sre5_combos():
    s = sre(5, [("TP1", {"1D": 2}), ("TP2", {"1D": 3})], ("TP3", {"1D": -5}), vt="VT2")
    combos = ropr_combos(s)
    assert [[x.vertex for x in c] for c in combos] == [["TP1", "TP2", "TP3"], ["TP2", "TP1", "TP3"]]
    assert all(c[-1].sre == (5, 2) for c in combos)


def test_combo_counts():
    assert ropr_count(sre(1, [], ("N", {"1P": 1}), [("R", {"1P": -1})])) == 1
    s = sre(1, [("A", {"1D": 1}), ("B", {"1D": 1})], ("N", {"1D": -2, "1P": 2}), [("R", {"1P": -1}), ("S", {"1P": -1})])
    assert ropr_count(s) == 4
    assert len(ropr_combos(s)) == 4


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 4), st.integers(0, 4))
def test_combo_count_formula(n1, n3):
    s = sre(1, [(f"W{i}", {"1D": 1}) for i in range(n1)], ("N", {}), [(f"R{i}", {"1P": -1}) for i in range(n3)])
    combos = ropr_combos(s)
    assert len(combos) == ropr_count(s) == max(1, math.factorial(n1) * math.factorial(n3))
    assert len({tuple(x.vertex for x in c) for c in combos}) == len(combos)


def _three_way():
    inst = line_instance(
        [
            {"name": "A", "kind": "warehouse", "stock": {"1D": 9}},
            {"name": "B", "kind": "warehouse", "stock": {"1D": 9}},
            {"name": "C", "kind": "warehouse", "stock": {"1D": 9}},
            {"name": "N", "kind": "node_split", "demand": {"1D": 3}},
        ],
        {
            ("VD", "A"): 1, ("VD", "B"): 1, ("VD", "C"): 1, ("VD", "N"): 1,
            ("A", "B"): 1, ("A", "C"): 5, ("B", "C"): 2, ("A", "N"): 1, ("B", "N"): 3, ("C", "N"): 1,
        },
    )
    return inst


def test_choose_roprs():
    inst = _three_way()
    s = sre(1, [("A", {"1D": 1}), ("B", {"1D": 1}), ("C", {"1D": 1})], ("N", {"1D": -3}))
    combos = ropr_combos(s, inst)
    assert choose_roprs(combos[:1], "MinTime", inst, "VT1", rng()) == combos[:1]
    assert choose_roprs(combos[:1], "Random", inst, "VT1", rng()) == combos[:1]
    dur = {tuple(x.vertex for x in c): integration.ropr_duration(inst, "VT1", c) for c in combos}
    best = choose_roprs(combos, "MinTime", inst, "VT1", rng())
    assert dur[tuple(x.vertex for x in best[0])] == min(dur.values())
    two = choose_roprs(combos[:3], "Min2Time", inst, "VT1", rng())
    d3 = sorted(integration.ropr_duration(inst, "VT1", c) for c in combos[:3])
    assert sorted(integration.ropr_duration(inst, "VT1", c) for c in two) == d3[:2]
    assert len(choose_roprs(combos, "All", inst, "VT1", rng())) == 6


def test_choose_min_time_between_10_and_12():
    inst = line_instance(
        [
            {"name": "A", "kind": "warehouse", "stock": {"1D": 9}},
            {"name": "B", "kind": "warehouse", "stock": {"1D": 9}},
            {"name": "N", "kind": "node_split", "demand": {"1D": 2}},
        ],
        {("VD", "A"): 1, ("VD", "B"): 1, ("VD", "N"): 1, ("A", "B"): 4, ("A", "N"): 6, ("B", "N"): 8},
        load=0,
    )
    s = sre(1, [("A", {"1D": 1}), ("B", {"1D": 1})], ("N", {"1D": -2}))
    combos = ropr_combos(s, inst)
    assert sorted(integration.ropr_duration(inst, "VT1", c) for c in combos) == [10, 12]
    chosen = choose_roprs(combos, "MinTime", inst, "VT1", rng())
    assert [x.vertex for x in chosen[0]] == ["B", "A", "N"]


def test_ropr_load_times_prefilled():
    inst = _three_way()
    s = sre(1, [("A", {"1D": 3})], ("N", {"1D": -3}))
    c = ropr_combos(s, inst)[0]
    assert [x.time.load for x in c] == pytest.approx([0.3, 0.3])
    assert all(x.time.arrive == 0 and x.time.depart == 0 for x in c)


# allocation --------------------------------------------------------------------


def test_similarity_scores():
    assert similarity_score(["A", "B", "C"], ["A", "B", "B"], 2) == 30003
    assert similarity_score(["A", "B", "C"], ["A", "B", "B"], 3) == 9
    assert similarity_score(["A", "B"], ["A", "B", "B"], 2) == 3


def test_allocate_all_and_errors():
    inst = line_instance(
        [{"name": "WH", "kind": "warehouse", "stock": {"1D": 9}}, {"name": "N", "kind": "node_split", "demand": {"1D": 2}}],
        {("VD", "WH"): 1, ("VD", "N"): 1, ("WH", "N"): 1},
        fleet=3,
    )
    cl = RouteCluster.empty(inst)
    s = sre(1, [("WH", {"1D": 2})], ("N", {"1D": -2}))
    assert allocate_vehicles(s, cl, "All", rng()) == inst.vehicles
    for logic in integration.ALLOCATION_LOGICS:
        got = allocate_vehicles(s, cl, logic, rng())
        assert 1 <= len(got) <= 3 and set(got) <= set(inst.vehicles)
    with pytest.raises(integration.IntegrationError):
        allocate_vehicles(sre(2, [("WH", {"1D": 2})], ("N", {"1D": -2}), vt="VT9"), cl, "Random", rng())


def test_allocate_vertex_similarity_prefers_shared_vertices():
    inst = line_instance(
        [{"name": "WH", "kind": "warehouse", "stock": {"1D": 9}}, {"name": "N", "kind": "node_split", "demand": {"1D": 2}}],
        {("VD", "WH"): 1, ("VD", "N"): 1, ("WH", "N"): 1},
        fleet=2,
    )
    cl = RouteCluster.empty(inst)
    v2 = inst.vehicles[1]
    cl.routes[v2].stops += [Stop("WH", vlc={"1D": 1}), Stop("N", vlc={"1D": -1})]
    s = sre(1, [("WH", {"1D": 1})], ("N", {"1D": -1}))
    for logic in ("VertexSimilarity_1", "VertexSimilarity_3"):
        assert allocate_vehicles(s, cl, logic, rng()) == [v2]
    # variant 2 rewards an early abort, so the empty route scores 10000
    assert allocate_vehicles(s, cl, "VertexSimilarity_2", rng()) == [inst.vehicles[0]]


# insertion ---------------------------------------------------------------------


def _stops(spec):
    out = []
    for item in spec:
        v, vlc = item[0], item[1]
        tag = item[2] if len(item) > 2 else None
        out.append(Stop(v, tag, dict(vlc), sre=(99, 2)))
    return out


def test_match_insert_off_and_on(study):
    veh = ("VD1", "VT4", 1)
    route = Route6(
        veh,
        [Stop("VD1")]
        + _stops([("WH1", {"1D": 5}), ("NP3", {"1D": -5}), ("NP3", {"2P": 3}), ("TP1", {"2P": -3}, "TP1_GA")]),
    )
    ropr = _stops([("WH1", {"1D": 4}), ("NP3", {"1D": -4, "2P": 2}), ("TP1", {"2P": -2}, "TP1_GP")])

    def show(r):
        return [s.vertex + (s.tag[3:] if s.tag else "") for s in r.stops]

    off = match_insert(study, ropr, route, None)
    assert show(off) == ["VD1", "WH1", "NP3", "NP3", "TP1_GA", "WH1", "NP3", "TP1_GP"]
    on = match_insert(study, ropr, route, (True, False, False))
    assert show(on) == ["VD1", "WH1", "WH1", "NP3", "NP3", "NP3", "TP1_GA", "TP1_GP"]
    assert show(route) == ["VD1", "WH1", "NP3", "NP3", "TP1_GA"]


def _breach_case():
    inst = line_instance(
        [
            {"name": "WH", "kind": "warehouse", "stock": {"1D": 50}},
            {"name": "N1", "kind": "node_split", "demand": {"1D": 7}},
            {"name": "N2", "kind": "node_split", "demand": {"1D": 8}},
        ],
        {("VD", "WH"): 1, ("VD", "N1"): 1, ("VD", "N2"): 1, ("WH", "N1"): 1, ("WH", "N2"): 1, ("N1", "N2"): 1},
        cap=10,
    )
    route = Route6(
        inst.vehicles[0],
        [Stop("VD")] + _stops([("WH", {"1D": 2}), ("N1", {"1D": -2}), ("WH", {"1D": 8}), ("N2", {"1D": -8})]),
    )
    ropr = _stops([("WH", {"1D": 5}), ("N1", {"1D": -5})])
    return inst, route, ropr


def test_match_insert_breach_moves_leftover_bound():
    inst, route, ropr = _breach_case()
    with_breach = match_insert(inst, ropr, route, (True, False, False))
    assert with_breach.list1 == ["VD", "WH", "N1", "WH", "N1", "WH", "N2"]
    without = match_insert(inst, ropr, route, (False, False, False))
    assert without.list1 == ["VD", "WH", "N1", "WH", "N2", "WH", "N1"]
    for r in (with_breach, without):
        assert status_ok(inst, r.vt, r.stops)


def test_match_insert_leftover_mobility_picks_shortest():
    inst, route, ropr = _breach_case()
    moved = match_insert(inst, ropr, route, (False, True, False))
    best = min(
        integration._plain_duration(inst, "VT1", route.stops[:p] + ropr + route.stops[p:])
        for p in range(1, len(route.stops) + 1)
        if status_ok(inst, "VT1", route.stops[:p] + ropr + route.stops[p:])
    )
    assert integration._plain_duration(inst, "VT1", moved.stops) == pytest.approx(best)


def test_match_insert_infeasible():
    inst, route, _ = _breach_case()
    big = _stops([("WH", {"1D": 11}), ("N1", {"1D": -11})])
    assert match_insert(inst, big, route, None) is None


def _is_subsequence(small, big):
    it = iter(big)
    return all(any(x is y for y in it) for x in small)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.sampled_from(["WH", "N1", "N2"]), st.integers(1, 4)), max_size=6),
    st.sampled_from([None, (True, True, True), (True, False, False), (False, True, False), (False, False, True)]),
)
def test_match_insert_keeps_portion_order(body, matching):
    inst, _, _ = _breach_case()
    stops = [Stop("VD")]
    for v, q in body:
        # balanced pairs keep the existing route feasible
        stops += [Stop("WH", vlc={"1D": q}, sre=(1, 1)), Stop(v if v != "WH" else "N1", vlc={"1D": -q}, sre=(1, 2))]
    route = Route6(inst.vehicles[0], stops)
    ropr = _stops([("WH", {"1D": 3}), ("N2", {"1D": -3})])
    out = match_insert(inst, ropr, route, matching)
    assert out is not None
    assert status_ok(inst, "VT1", out.stops)
    mine = [s for s in out.stops if s.sre == (99, 2)]
    assert [s.vertex for s in mine] == ["WH", "N2"]
    assert len(out.stops) == len(stops) + 2


# integration -------------------------------------------------------------------


def test_integrate_direct_insertion():
    inst, _, _ = _breach_case()
    cl = RouteCluster.empty(inst, IntegrationLogic("Random", "Random", None))
    s = sre(1, [("WH", {"1D": 7})], ("N1", {"1D": -7}))
    out = integrate_sre(inst, cl, s, rng())
    assert out.alive
    assert out.routes[inst.vehicles[0]].list1 == ["VD", "WH", "N1"]
    times = out.routes[inst.vehicles[0]].list5
    assert times[1].arrive == 1 and times[1].depart == pytest.approx(1.7)


def test_integrate_all_by_all_builds_four_twins(monkeypatch):
    inst = line_instance(
        [
            {"name": "A", "kind": "warehouse", "stock": {"1D": 9}},
            {"name": "B", "kind": "warehouse", "stock": {"1D": 9}},
            {"name": "N", "kind": "node_split", "demand": {"1D": 2}},
        ],
        {("VD", "A"): 1, ("VD", "B"): 1, ("VD", "N"): 1, ("A", "B"): 4, ("A", "N"): 6, ("B", "N"): 8},
        fleet=2,
    )
    calls = []
    real = integration.match_insert

    def counting(*a, **k):
        calls.append(a[2].vehicle)
        return real(*a, **k)

    monkeypatch.setattr(integration, "match_insert", counting)
    cl = RouteCluster.empty(inst, IntegrationLogic("All", "All", None))
    out = integrate_sre(inst, cl, sre(1, [("A", {"1D": 1}), ("B", {"1D": 1})], ("N", {"1D": -2})), rng())
    assert len(calls) == 4
    assert Counter(calls) == {inst.vehicles[0]: 2, inst.vehicles[1]: 2}
    assert out.alive
    # the best twin takes the 10-unit ordering
    used = [r for r in out.routes.values() if len(r.stops) > 1]
    assert [s.vertex for s in used[0].stops] == ["VD", "B", "A", "N"]


def test_integrate_waiting_failure_kills_cluster(study):
    cl = RouteCluster.empty(study, IntegrationLogic("Random", "Random", None))
    s = SRE(1, "VT3", frozenset({"VD4"}), [("TP3", {"1D": 5})], ("NP2", {"1D": -5}), [], {(1, 0): "TP3_A"})
    out = integrate_sre(study, cl, s, rng())
    assert not out.alive


def _pipeline(inst, seed, n_logics=6):
    h = hp()
    r = rng(seed)
    trees = {v.name: build_dts(inst, v.name, h, r) for v in inst.vertices if v.kind in NODE_KINDS or v.kind == PORT}
    gen = Generator(inst, h, r, trees, Stocks(inst), CausalityLedger())
    nodes = [v.name for v in inst.of_kind(*NODE_KINDS)]
    gen.generate_split([n for n in nodes if inst.vertex(n).kind != NODE_SIMULTANEOUS])
    gen.generate_simultaneous([n for n in nodes if inst.vertex(n).kind == NODE_SIMULTANEOUS])
    logics = enumerate_logics(max(2, n_logics), r)
    clusters = [RouteCluster.empty(inst, lg, i) for i, lg in enumerate(logics)]
    for sid in order_sres(gen.ledger, list(gen.sres), r):
        for n, c in enumerate(clusters):
            if c.alive:
                clusters[n] = integrate_sre(inst, c, gen.sres[sid], rng(seed + sid))
                if clusters[n].alive:
                    for route in clusters[n].routes.values():
                        assert route.stops[0].vertex == route.depot
                        assert status_ok(inst, route.vt, route.stops)
    return gen, clusters


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 5000))
def test_integration_keeps_routes_valid(seed):
    inst = small_instance(seed)
    try:
        _, clusters = _pipeline(inst, seed)
    except Unsatisfiable:
        return
    for c in clusters:
        if c.alive:
            for r in c.routes.values():
                assert [s.time.depart for s in r.stops] == pytest.approx(
                    [s.time.arrive + s.time.wait + s.time.load for s in r.stops]
                )


# logics ------------------------------------------------------------------------


def test_logic_universe():
    uni = logic_universe()
    assert len(uni) == UNIVERSE_SIZE == 554
    assert len(set(uni)) == 554
    trues = {(lg.ropr_logic, lg.allocation_logic, lg.matching) for lg in uni if lg.waiting_enabled}
    assert all((lg.ropr_logic, lg.allocation_logic, lg.matching) in trues for lg in uni if not lg.waiting_enabled)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 700), st.integers(0, 10_000))
def test_enumerate_logics_counts(max_logics, seed):
    got = enumerate_logics(max_logics, rng(seed))
    m = min(max_logics, 554)
    assert math.ceil(m / 2) <= len(got) <= m
    assert len(set(got)) == len(got)
    have = set(got)
    assert all(lg.twin() in have for lg in got if not lg.waiting_enabled)


def test_enumerate_logics_hundred():
    for seed in range(20):
        assert 50 <= len(enumerate_logics(100, rng(seed))) <= 100
    with pytest.raises(ValueError):
        enumerate_logics(1, rng())


def test_shuffle_logics_permutes_alive_labels():
    uni = logic_universe()
    clusters = [RouteCluster({}, uni[i], True, i) for i in range(3)] + [RouteCluster({}, uni[9], False, 3)]
    before = [c.logic for c in clusters[:3]]
    moved = False
    for seed in range(10):
        shuffle_logics(clusters, rng(seed))
        now = [c.logic for c in clusters[:3]]
        assert sorted(map(str, now)) == sorted(map(str, before))
        moved |= now != before
        assert clusters[3].logic == uni[9]
    assert moved


# compaction --------------------------------------------------------------------


def test_compact_route_merges_port_visits():
    vlcs = [{"1D": 9, "2D": 8}, {"1D": 3, "2D": 2}, {"1D": 5, "2D": 6}, {"1D": 4, "2D": 7}]
    loads = [6.45, 1.95, 4.05, 3.9]
    stops = [Stop("VD3")]
    t = 38.14
    for n, (v, ld) in enumerate(zip(vlcs, loads)):
        stops.append(Stop("TP3", "TP3_G", v, {}, TimeTuple(t, ld, 0.0, t + ld), (n + 1, 1)))
        t += ld
    stops.append(Stop("TP1", "TP1_A", {"1D": -21, "2D": -23}, {}, TimeTuple(t + 5, 4.4, 0.0, t + 9.4), (9, 2)))
    out = compact_route6(Route6(("VD3", "VT2", 1), stops))
    assert out.list1 == ["VD3", "TP3", "TP1"]
    assert out.stops[1].vlc == {"1D": 21, "2D": 23}
    assert out.stops[1].time.load == pytest.approx(16.35)
    assert out.stops[1].time.arrive == pytest.approx(38.14)
    assert out.stops[1].time.depart == pytest.approx(54.49)
    assert out.list6[1] == ((1, 1), (2, 1), (3, 1), (4, 1))
    assert out.stops[-1].time.depart == stops[-1].time.depart


def test_compact_route_without_repeats_unchanged():
    stops = [Stop("VD")] + _stops([("WH", {"1D": 2}), ("N1", {"1D": -2})])
    out = compact_route6(Route6(("VD", "VT1", 1), stops))
    assert out.list1 == ["VD", "WH", "N1"]
    assert out.list3 == [{}, {"1D": 2}, {"1D": -2}]
