"""Turning SREs into route portions and inserting them into route clusters."""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .instance import Instance, Vehicle
from .routes import EPS, Route6, RouteCluster, Stop, TimeTuple, status_ok
from .sre import SRE, CausalityLedger
from .timing import CausalityImpossible, Deadlock, cascaded_compare, propagate_times

ROPR_LOGICS = ("Random", "MinTime", "Min2Time", "All")
ALLOCATION_LOGICS = (
    "Random",
    "VertexSimilarity_1",
    "VertexSimilarity_2",
    "VertexSimilarity_3",
    "MinTime",
    "Min2Time",
    "All",
)
MATCHINGS: tuple[tuple[bool, bool, bool] | None, ...] = (None,) + tuple(itertools.product((True, False), repeat=3))
UNIVERSE_SIZE = 554
REPLICAS = UNIVERSE_SIZE - 2 * len(ROPR_LOGICS) * len(ALLOCATION_LOGICS) * len(MATCHINGS)
TWIN_CAP = 64

RoPr = list[Stop]


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegrationLogic:
    ropr_logic: str
    allocation_logic: str
    matching: tuple[bool, bool, bool] | None  # (breach, leftover mobility, port matching) or off
    waiting_enabled: bool = True
    replica: int = 0

    def label(self) -> str:
        m = "OFF" if self.matching is None else "(" + ",".join(str(x) for x in self.matching) + ")"
        r = f"#{self.replica}" if self.replica else ""
        return f"{self.ropr_logic}|{self.allocation_logic}|{m}|{self.waiting_enabled}{r}"

    def twin(self) -> "IntegrationLogic":
        return IntegrationLogic(self.ropr_logic, self.allocation_logic, self.matching, True, self.replica)


def logic_universe() -> list[IntegrationLogic]:
    """All 554 integration logics in a fixed order.

    The 4 x 7 x 9 x 2 product gives 504; the remaining 50 are replicas of
    the first waiting-enabled logics, carrying a replica index.
    """
    base = [
        IntegrationLogic(r, a, m, w)
        for r in ROPR_LOGICS
        for a in ALLOCATION_LOGICS
        for m in MATCHINGS
        for w in (True, False)
    ]
    trues = [lg for lg in base if lg.waiting_enabled]
    extra = [IntegrationLogic(lg.ropr_logic, lg.allocation_logic, lg.matching, True, 1) for lg in trues[:REPLICAS]]
    return base + extra


def enumerate_logics(max_logics: int, rng: np.random.Generator) -> list[IntegrationLogic]:
    """Distinct logics; count uniform in [ceil(max/2), max].  A logic with
    waiting disabled is only taken together with its waiting twin."""
    if max_logics < 2:
        raise ValueError("max_logics must be at least 2")
    max_logics = min(max_logics, UNIVERSE_SIZE)
    count = int(rng.integers(math.ceil(max_logics / 2), max_logics + 1))
    uni = logic_universe()
    chosen: list[IntegrationLogic] = []
    have: set[IntegrationLogic] = set()
    for i in rng.permutation(len(uni)):
        if len(chosen) >= count:
            break
        lg = uni[i]
        if lg in have:
            continue
        if not lg.waiting_enabled and lg.twin() not in have:
            if len(chosen) + 2 > count:
                continue
            chosen.append(lg.twin())
            have.add(lg.twin())
        chosen.append(lg)
        have.add(lg)
    return chosen


def shuffle_logics(clusters: Sequence[RouteCluster], rng: np.random.Generator) -> None:
    alive = [c for c in clusters if c.alive]
    labels = [c.logic for c in alive]
    for c, n in zip(alive, rng.permutation(len(alive))):
        c.logic = labels[n]


# ordering ----------------------------------------------------------------------


def order_sres(ledger: CausalityLedger, pool: Iterable[int], rng: np.random.Generator) -> list[int]:
    """Superior SREs of every row come before its inferior ones."""
    pool = list(pool)
    inpool = set(pool)
    succ: dict[int, set[int]] = defaultdict(set)
    indeg = {i: 0 for i in pool}
    in_ledger: set[int] = set()
    for row in ledger.rows:
        for s in row.superior:
            for t in row.inferior:
                if s in inpool and t in inpool and t not in succ[s]:
                    succ[s].add(t)
                    indeg[t] += 1
        in_ledger.update(x for x in row.superior + row.inferior if x in inpool)
    ready = sorted(i for i in in_ledger if indeg[i] == 0)
    out = []
    while ready:
        k = int(rng.integers(len(ready)))
        i = ready.pop(k)
        out.append(i)
        for j in sorted(succ[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    if len(out) != len(in_ledger):
        raise IntegrationError("causality ledger contains a cycle")
    rest = [i for i in pool if i not in in_ledger]
    out += [rest[n] for n in rng.permutation(len(rest))]
    return out


# route portions ----------------------------------------------------------------


def ropr_count(sre: SRE) -> int:
    return max(1, math.factorial(len(sre.set1)) * math.factorial(len(sre.set3)))


def _stop(inst: Instance | None, sre: SRE, seg: int, idx: int, vertex: str, vlc: dict) -> Stop:
    load = inst.load_time(sre.vehicle_type, vlc) if inst is not None else 0.0
    return Stop(vertex, sre.tag(seg, idx), dict(vlc), {}, TimeTuple(0.0, load, 0.0, 0.0), (sre.id, seg))


def ropr_combos(sre: SRE, inst: Instance | None = None) -> list[RoPr]:
    """Every ordering of set1 and of set3 around the set2 element."""
    mid = _stop(inst, sre, 2, 0, *sre.set2)
    out = []
    for p1 in itertools.permutations(range(len(sre.set1))):
        for p3 in itertools.permutations(range(len(sre.set3))):
            out.append(
                [_stop(inst, sre, 1, i, *sre.set1[i]) for i in p1]
                + [mid.copy()]
                + [_stop(inst, sre, 3, i, *sre.set3[i]) for i in p3]
            )
    return out


def ropr_duration(inst: Instance, vt: str, ropr: RoPr) -> float:
    """Duration starting at the first vertex at time 0 with no waiting."""
    t = 0.0
    for n, s in enumerate(ropr):
        if n:
            t += inst.T(vt, ropr[n - 1].vertex, s.vertex)
        t += inst.load_time(vt, s.vlc)
    return t


def choose_roprs(combos: list[RoPr], logic: str, inst: Instance, vt: str, rng: np.random.Generator) -> list[RoPr]:
    if not combos:
        raise IntegrationError("no route portion to choose from")
    if logic == "Random":
        return [combos[int(rng.integers(len(combos)))]]
    if logic == "All":
        return list(combos)
    keys = rng.random(len(combos))
    order = sorted(range(len(combos)), key=lambda n: (ropr_duration(inst, vt, combos[n]), keys[n]))
    if logic == "MinTime":
        return [combos[order[0]]]
    if logic == "Min2Time":
        return [combos[n] for n in order[:2]]
    raise ValueError(f"unknown route-portion logic {logic}")


# allocation --------------------------------------------------------------------


def similarity_score(portion: Sequence[str], route: Sequence[str], variant: int) -> float:
    """Ordered vertex-matching count used by the vertex-similarity logics.

    ``route`` excludes the depot.  For each portion vertex, matches are
    counted after every match of the previous vertex; when a vertex has no
    match, variant 2 returns ``counter + 10000*(i+1)`` and variant 3
    ``counter*(i+1)`` where ``i`` is the number of matched vertices.
    """
    counter = 0
    prev = [-1]
    for i, v in enumerate(portion):
        hits = [j for j, r in enumerate(route) if r == v]
        n = sum(1 for p in prev for j in hits if j > p)
        if n == 0:
            return counter + 10000 * (i + 1) if variant == 2 else counter * (i + 1)
        counter += n
        lo = min(prev)
        prev = [j for j in hits if j > lo]
    return counter


def _last_departure(route: Route6) -> float | None:
    if len(route.stops) <= 1:
        return None
    return route.stops[route.body_end() - 1].time.depart


def matching_fleet(sre: SRE, cluster: RouteCluster) -> list[Vehicle]:
    return [v for v in cluster.routes if v[1] == sre.vehicle_type and v[0] in sre.candidate_depots]


def allocate_vehicles(
    sre: SRE, cluster: RouteCluster, logic: str, rng: np.random.Generator, portion: Sequence[str] | None = None
) -> list[Vehicle]:
    fleet = matching_fleet(sre, cluster)
    if not fleet:
        raise IntegrationError(f"no vehicle of type {sre.vehicle_type} at {sorted(sre.candidate_depots)}")
    portion = list(portion) if portion is not None else sre.vertices()
    ties = rng.random(len(fleet))

    def pick_max(vals):
        best = max(range(len(fleet)), key=lambda n: (vals[n], ties[n]))
        return [fleet[best]]

    if logic == "Random":
        return [fleet[int(rng.integers(len(fleet)))]]
    if logic == "All":
        return list(fleet)
    if logic == "VertexSimilarity_1":
        vals = []
        for v in fleet:
            body = cluster.routes[v].list1[1:]
            vals.append(sum(1 for a in portion for b in body if a == b))
        return pick_max(vals)
    if logic in ("VertexSimilarity_2", "VertexSimilarity_3"):
        variant = 2 if logic.endswith("2") else 3
        return pick_max([similarity_score(portion, cluster.routes[v].list1[1:], variant) for v in fleet])
    if logic in ("MinTime", "Min2Time"):
        known = [(t, ties[n], v) for n, v in enumerate(fleet) if (t := _last_departure(cluster.routes[v])) is not None]
        if not known:
            return [fleet[int(rng.integers(len(fleet)))]]
        known.sort()
        return [k[2] for k in known[: 1 if logic == "MinTime" else 2]]
    raise ValueError(f"unknown allocation logic {logic}")


# insertion ---------------------------------------------------------------------


def _plain_duration(inst: Instance, vt: str, stops: Sequence[Stop]) -> float:
    t = 0.0
    for n in range(1, len(stops)):
        t += inst.T(vt, stops[n - 1].vertex, stops[n].vertex) + inst.load_time(vt, stops[n].vlc)
    return t


def _capacity_breach(inst: Instance, vt: str, stops: Sequence[Stop]) -> int | None:
    load: dict[str, float] = {}
    for n, s in enumerate(stops):
        for c, q in s.vlc.items():
            load[c] = load.get(c, 0.0) + q
        if not inst.fits(vt, load):
            return n
    return None


def match_insert(
    inst: Instance,
    ropr: RoPr,
    route: Route6,
    matching: tuple[bool, bool, bool] | None,
) -> Route6 | None:
    """Insert a route portion; None when no feasible placement exists."""
    stops = [s.copy() for s in route.stops]
    tail = stops[route.body_end() :]
    body = stops[: route.body_end()]
    ropr = [s.copy() for s in ropr]
    vt = route.vt
    if matching is None:
        new = body + ropr + tail
        return Route6(route.vehicle, new) if status_ok(inst, vt, new) else None
    breach_cons, mobility, tp_match = matching
    ub = len(body)
    start = 1
    last = 0
    k = 0
    while k < len(ropr):
        e = ropr[k]
        if e.tag is not None and not tp_match:
            break
        j = next((j for j in range(start, len(body)) if body[j].vertex == e.vertex), None)
        if j is None:
            break
        trial = body[: j + 1] + [e] + body[j + 1 :]
        b = _capacity_breach(inst, vt, trial)
        if b is not None:
            if breach_cons:
                ub = max(last + 1, min(ub, b - 1 if b >= j + 2 else j + 1))
            break
        body = trial
        if ub > j:
            ub += 1
        last = j + 1
        start = j + 2
        k += 1
    leftover = ropr[k:]
    if not leftover:
        new = body + tail
        return Route6(route.vehicle, new) if status_ok(inst, vt, new) else None
    ub = min(max(ub, last + 1), len(body))
    positions = range(last + 1, ub + 1) if mobility else [ub]
    best = None
    for p in positions:
        new = body[:p] + [s.copy() for s in leftover] + body[p:]
        if not status_ok(inst, vt, new):
            continue
        d = _plain_duration(inst, vt, new)
        if best is None or d < best[0] - EPS:
            best = (d, new)
    if best is None:
        return None
    return Route6(route.vehicle, best[1] + tail)


def integrate_sre(
    inst: Instance,
    cluster: RouteCluster,
    sre: SRE,
    rng: np.random.Generator,
    twin_cap: int = TWIN_CAP,
) -> RouteCluster:
    """Try every chosen (portion, vehicle) pair on a twin and keep the best."""
    logic: IntegrationLogic = cluster.logic
    combos = ropr_combos(sre, inst)
    roprs = choose_roprs(combos, logic.ropr_logic, inst, sre.vehicle_type, rng)
    vehicles = allocate_vehicles(sre, cluster, logic.allocation_logic, rng, [s.vertex for s in roprs[0]])
    pairs = list(itertools.product(range(len(roprs)), vehicles))
    if len(pairs) > twin_cap:
        pick = sorted(rng.choice(len(pairs), size=twin_cap, replace=False))
        pairs = [pairs[n] for n in pick]
    best: RouteCluster | None = None
    best_d: list[float] | None = None
    for r, v in pairs:
        route = match_insert(inst, roprs[r], cluster.routes[v], logic.matching)
        if route is None:
            continue
        twin = RouteCluster(dict(cluster.routes), logic, True, cluster.index)
        twin.routes = {u: (route if u == v else rr.copy()) for u, rr in cluster.routes.items()}
        try:
            d = propagate_times(inst, twin, waiting=logic.waiting_enabled)
        except (Deadlock, CausalityImpossible):
            continue
        if best is None or cascaded_compare(d, best_d) < 0:
            best, best_d = twin, d
    if best is None:
        cluster.alive = False
        return cluster
    for route in best.routes.values():
        route.recompute_status(inst)
    return best


def compact_route6(route: Route6) -> Route6:
    """Merge consecutive visits of the same vertex under the same tag."""
    out: list[Stop] = []
    for s in route.stops:
        prev = out[-1] if out else None
        if prev is not None and len(out) > 1 and prev.vertex == s.vertex and prev.tag == s.tag and s.sre is not None:
            for c, q in s.vlc.items():
                v = prev.vlc.get(c, 0.0) + q
                if abs(v) > EPS:
                    prev.vlc[c] = v
                else:
                    prev.vlc.pop(c, None)
            prev.time.load += s.time.load
            prev.time.wait += s.time.wait
            prev.time.depart = prev.time.arrive + prev.time.wait + prev.time.load
            prev.status = dict(s.status)
            prev.sources = prev.sources + (s.sources or ((s.sre,) if s.sre else ()))
            prev.perturbations = max(prev.perturbations, s.perturbations)
        else:
            c = s.copy()
            c.sources = s.sources or ((s.sre,) if s.sre else ())
            out.append(c)
    return Route6(route.vehicle, out)
