import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reliefroute.oracle import waiting_oracle
from reliefroute.routes import Route6, RouteCluster, Stop, TimeTuple
from reliefroute.timing import (
    CausalityImpossible,
    Deadlock,
    cascaded_compare,
    cascaded_key,
    critical_start,
    deposit_envelope,
    propagate_times,
    route_duration,
    waiting_time,
)

from conftest import line_instance


# envelopes ---------------------------------------------------------------------


def test_single_ramp_envelope():
    env = deposit_envelope([(0, 10, 5)])
    for y in (0.5, 1, 2.5, 5):
        assert env.earliest(y) == pytest.approx(2 * y)
    assert env.level_at(4) == pytest.approx(2)
    assert env.total == 5


def test_two_ramps_stack_in_time():
    env = deposit_envelope([(0, 10, 5), (10, 10, 5)])
    for y in (1, 4, 5):
        assert env.earliest(y) == pytest.approx(2 * y)
    for y in (6, 8, 10):
        assert env.earliest(y) == pytest.approx(10 + 2 * (y - 5))
    assert env.earliest(10.5) == math.inf


def test_empty_envelope():
    env = deposit_envelope([])
    assert env.points == () and env.total == 0
    assert env.level_at(100) == 0
    assert deposit_envelope([(3, 1, 0)]).points == ()


def test_instant_deposit_is_a_jump():
    env = deposit_envelope([(4, 0, 3)])
    assert env.level_at(3.999) == 0
    assert env.level_at(4) == 3
    assert env.earliest(2) == 4


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 50), st.floats(0, 10), st.floats(0.1, 10)), min_size=1, max_size=5))
def test_envelope_monotone(ramps):
    env = deposit_envelope(ramps)
    ys = [env.total * k / 20 for k in range(1, 21)]
    es = [env.earliest(y) for y in ys]
    assert all(a <= b + 1e-9 for a, b in zip(es, es[1:]))
    assert env.earliest(1e-12) == pytest.approx(min(s for s, _, _ in ramps), abs=1e-6)
    ts = sorted({s for s, _, _ in ramps} | {s + d for s, d, _ in ramps})
    levels = [env.level_at(t) for t in ts]
    assert all(a <= b + 1e-9 for a, b in zip(levels, levels[1:]))
    assert env.total == pytest.approx(sum(q for _, _, q in ramps))


# waiting -----------------------------------------------------------------------


def test_wait_under_one_ramp():
    env = deposit_envelope([(0, 10, 5)])
    assert waiting_time({"1D": env}, {}, 0, 5, {"1D": 5}) == pytest.approx(5)
    assert waiting_oracle({"1D": [(0, 10, 5)]}, {}, 0, 5, {"1D": 5}) == pytest.approx(5, abs=2e-3)


def test_no_wait_after_deposits_complete():
    env = deposit_envelope([(0, 4, 5)])
    assert waiting_time({"1D": env}, {}, 10, 5, {"1D": 5}) == 0


def test_wait_is_max_over_cargos():
    # critical starts 3 and 7 with arrival at 2
    envs = {"a": deposit_envelope([(3, 0, 1)]), "b": deposit_envelope([(7, 0, 1)])}
    assert critical_start(envs["a"], 0, 1, 0) == 3
    assert critical_start(envs["b"], 0, 1, 0) == 7
    assert waiting_time(envs, {}, 2, 0, {"a": 1, "b": 1}) == pytest.approx(5)


def test_band_sits_above_earlier_withdrawals():
    env = deposit_envelope([(0, 10, 10)])
    assert critical_start(env, 5, 5, 5) == pytest.approx(5)
    assert critical_start(env, 0, 5, 5) == pytest.approx(0)


def test_short_deposits_raise():
    with pytest.raises(CausalityImpossible):
        waiting_time({"1D": deposit_envelope([(0, 1, 2)])}, {}, 0, 1, {"1D": 3})
    with pytest.raises(CausalityImpossible):
        waiting_time({}, {}, 0, 1, {"1D": 1})


ramp = st.tuples(
    st.integers(0, 40).map(float), st.integers(0, 12).map(lambda x: x / 2), st.integers(1, 8).map(float)
)


@settings(max_examples=150, deadline=None)
@given(st.lists(ramp, min_size=1, max_size=4), st.integers(0, 60), st.integers(0, 10), st.data())
def test_wait_matches_grid_oracle(ramps, arrive, load, data):
    total = sum(q for _, _, q in ramps)
    base = data.draw(st.integers(0, int(total) - 1).map(float))
    q = data.draw(st.integers(1, int(total - base)).map(float))
    got = waiting_time({"1D": deposit_envelope(ramps)}, {"1D": base}, arrive, load, {"1D": q})
    want = waiting_oracle({"1D": ramps}, {"1D": base}, arrive, load, {"1D": q}, 1e-3)
    assert got == pytest.approx(want, abs=2e-3)


# propagation -------------------------------------------------------------------


def port_instance(open_trip=False):
    return line_instance(
        [
            {"name": "WH", "kind": "warehouse", "stock": {"1D": 50}},
            {"name": "TP", "kind": "transhipment_port", "transhippable": ["1D"]},
            {"name": "N", "kind": "node_split", "demand": {"1D": 5}},
        ],
        {(a, b): 1 for a, b in itertools.combinations(["VD", "WH", "TP", "N"], 2)},
        fleet=2,
        load=1.0,
        open_trip=open_trip,
    )


def cluster_of(inst, *bodies):
    routes = {}
    for v, body in zip(inst.vehicles, bodies):
        routes[v] = Route6(v, [Stop(v[0])] + [Stop(x, tag, dict(vlc)) for x, vlc, tag in body])
    for v in inst.vehicles[len(bodies):]:
        routes[v] = Route6.empty(v)
    return RouteCluster(routes)


def test_transhipment_pauses_collector():
    inst = port_instance()
    cl = cluster_of(
        inst,
        [("WH", {"1D": 5}, None), ("TP", {"1D": -5}, "TP_A")],
        [("TP", {"1D": 5}, "TP_A"), ("N", {"1D": -5}, None)],
    )
    durs = propagate_times(inst, cl)
    a, b = (cl.routes[v] for v in inst.vehicles)
    assert (a.stops[2].time.arrive, a.stops[2].time.depart) == (7, 12)
    assert a.stops[2].time.wait == 0
    # unloading at rate 1 over [7, 12] lets the collector start at 7
    assert b.stops[1].time.arrive == 1
    assert b.stops[1].time.wait == pytest.approx(6)
    assert b.stops[1].time.depart == pytest.approx(12)
    assert durs == pytest.approx([13, 19])
    for r in (a, b):
        for s in r.stops:
            assert s.time.depart - s.time.arrive - s.time.wait == pytest.approx(s.time.load, abs=1e-9)


def test_waiting_disabled_gives_zero_waits():
    inst = port_instance()
    cl = cluster_of(
        inst,
        [("WH", {"1D": 5}, None), ("TP", {"1D": -5}, "TP_A")],
        [("TP", {"1D": 5}, "TP_A"), ("N", {"1D": -5}, None)],
    )
    propagate_times(inst, cl, waiting=False)
    assert all(s.time.wait == 0 for r in cl.routes.values() for s in r.stops)


def test_tp_free_cluster():
    inst = port_instance()
    cl = cluster_of(inst, [("WH", {"1D": 5}, None), ("N", {"1D": -5}, None)])
    assert propagate_times(inst, cl) == pytest.approx([13, 0])


def test_mutual_dependence_deadlocks():
    inst = port_instance()
    cl = cluster_of(
        inst,
        [("TP", {"1D": 5}, "TP_X"), ("WH", {"1D": 5}, None), ("TP", {"1D": -10}, "TP_Y")],
        [("TP", {"1D": 5}, "TP_Y"), ("WH", {"1D": 5}, None), ("TP", {"1D": -10}, "TP_X")],
    )
    with pytest.raises(Deadlock):
        propagate_times(inst, cl)


def test_withdrawal_without_deposit_is_impossible():
    inst = port_instance()
    cl = cluster_of(inst, [("TP", {"1D": 5}, "TP_A"), ("N", {"1D": -5}, None)])
    with pytest.raises(CausalityImpossible):
        propagate_times(inst, cl)


def test_route_durations():
    inst = port_instance()
    cl = cluster_of(inst, [("WH", {"1D": 5}, None), ("N", {"1D": -5}, None)])
    propagate_times(inst, cl)
    a, b = (cl.routes[v] for v in inst.vehicles)
    assert route_duration(inst, b) == 0
    assert route_duration(inst, a) == 13
    a.stops.append(Stop("VD", time=TimeTuple(13, 0, 0, 13)))
    assert route_duration(inst, a) == 13
    inst2 = port_instance(open_trip=True)
    cl2 = cluster_of(inst2, [("WH", {"1D": 5}, None), ("N", {"1D": -5}, None)])
    assert propagate_times(inst2, cl2) == pytest.approx([12, 0])


# cascaded comparison -----------------------------------------------------------


def test_cascaded_examples():
    assert cascaded_compare([7, 5, 3], [7, 4, 4]) == 1
    assert cascaded_compare([7, 4, 4], [7, 5, 3]) == -1
    assert cascaded_compare([3, 5, 7], [7, 5, 3]) == 0
    assert cascaded_compare([7], [7, 0]) == 0
    assert cascaded_key([1, 3, 2], 5) == [3, 2, 1, 0, 0]


vec = st.lists(st.integers(0, 5).map(float), max_size=4)


@settings(max_examples=300, deadline=None)
@given(vec, vec, vec)
def test_cascaded_compare_total_preorder(a, b, c):
    assert cascaded_compare(a, b) == -cascaded_compare(b, a)
    assert cascaded_compare(a, a) == 0
    if cascaded_compare(a, b) <= 0 and cascaded_compare(b, c) <= 0:
        assert cascaded_compare(a, c) <= 0
