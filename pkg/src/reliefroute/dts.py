"""Decision trees, compare codes, preference scores and transhipment estimates.

A decision tree has a trunk (a node or a port), one branch per vehicle type
able to reach the trunk, one twig per resource vertex or port reachable by
that vehicle type, and one leaf per cargo the branch may move through the
twig.  Leaves carry the random multiplier ``m``, exponent ``p`` and
multi-trip propensity used by the scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .instance import (
    DELIVERY,
    NODE_KINDS,
    NODE_SIMULTANEOUS,
    PORT,
    RELIEF_CENTRE,
    WAREHOUSE,
    Instance,
)

TWIG_KINDS = (WAREHOUSE, PORT, RELIEF_CENTRE)


class TreeError(ValueError):
    pass


class ScoreError(ValueError):
    pass


@dataclass
class Leaf:
    cargo: str
    m: float
    p: float
    multi_trip: float
    cached_component2: "ComponentPair | None" = None


@dataclass
class Twig:
    vertex: str
    leaves: dict[str, Leaf]


@dataclass
class Branch:
    vehicle_type: str
    candidate_depots: frozenset[str]
    twigs: list[Twig]


@dataclass
class DecisionTree:
    trunk: str
    branches: list[Branch]

    def leaf_count(self) -> int:
        return sum(len(t.leaves) for b in self.branches for t in b.twigs)


@dataclass
class GlobalHyperParams:
    time_in_denominator: bool = False
    denominator_enabled: bool = True
    degree_affects_multiplier: bool = True
    degree_affects_exponent: bool = False
    transhipment_degree_slider: float = 0.5
    transhipment_degree_slider_NP: float = 0.5
    full_demand_for_variability: bool = False
    global_transhipment_fathom: bool = False
    full_fathom: bool = False
    transhipment_trip_setting: bool = True
    shuffle_logics: bool = True
    degree_score_reduction: float = 0.0
    weighted_degree: bool = True

    def __post_init__(self) -> None:
        if not -2.0 <= self.degree_score_reduction <= 8.0:
            raise ValueError("degree_score_reduction must lie in [-2, 8]")


@dataclass
class ComponentPair:
    # PRV -> (degree, satisfiable, available)
    component_one: dict[str, tuple[int, float, float]] = field(default_factory=dict)
    # vertex -> (adjusted degree, satisfiable, {degree: {PRV: quantity}})
    component_two: dict[str, tuple[float, float, dict[int, dict[str, float]]]] = field(default_factory=dict)

    def satisfiable(self) -> float:
        return sum(v[1] for v in self.component_one.values())

    def empty(self) -> bool:
        return not self.component_one


# sampling --------------------------------------------------------------------


def sample_leaf_param(rng: np.random.Generator) -> float:
    """A value in (0, 1]: Normal or Uniform with equal odds, rarely exactly 1."""
    if rng.random() < 0.02:
        return 1.0
    if rng.random() < 0.5:
        mu, sigma = rng.random(), rng.random()
        for _ in range(100):
            x = rng.normal(mu, max(sigma, 1e-6))
            if 0.0 < x <= 1.0:
                return float(x)
        return float(min(max(mu, 1e-6), 1.0))
    lo, hi = sorted(rng.random(2))
    x = rng.uniform(lo, hi) if hi > lo else hi
    return float(x) if x > 0 else 1e-6


def _leaf(cargo: str, rng: np.random.Generator) -> Leaf:
    return Leaf(cargo, sample_leaf_param(rng), sample_leaf_param(rng), float(rng.random()))


# trees -----------------------------------------------------------------------


def _demand_fits(inst: Instance, vt: str, demand: Mapping[str, float]) -> bool:
    k = inst.vt(vt)
    if any(q > 0 and c not in k.compatible_cargos for c, q in demand.items()):
        return False
    vol = sum(inst.cargo(c).unit_volume * q for c, q in demand.items())
    wt = sum(inst.cargo(c).unit_weight * q for c, q in demand.items())
    return vol <= k.volume_cap + 1e-9 and wt <= k.weight_cap + 1e-9


def build_dts(inst: Instance, trunk: str, hp: GlobalHyperParams, rng: np.random.Generator) -> DecisionTree:
    vx = inst.vertex(trunk)
    if vx.kind not in NODE_KINDS and vx.kind != PORT:
        raise TreeError(f"{trunk} is a {vx.kind}; trunks must be nodes or ports")
    branches = []
    for k in inst.vehicle_types:
        if trunk not in inst.accessible_set(k.name):
            continue
        depots = frozenset(d for d in inst.depots_for(k.name) if math.isfinite(inst.T(k.name, d, trunk)))
        if not depots:
            continue
        if vx.kind == NODE_SIMULTANEOUS and not _demand_fits(inst, k.name, vx.demand):
            continue
        cargos = set(k.compatible_cargos)
        if vx.kind == PORT:
            cargos &= vx.transhippable
        twigs = []
        for w in inst.vertices:
            if w.name == trunk or w.kind not in TWIG_KINDS or w.name not in inst.accessible_set(k.name):
                continue
            if not (math.isfinite(inst.T(k.name, w.name, trunk)) or math.isfinite(inst.T(k.name, trunk, w.name))):
                continue
            allowed = cargos & w.transhippable if w.kind == PORT else cargos
            if w.kind == WAREHOUSE:
                allowed = {c for c in allowed if inst.cargo(c).kind == DELIVERY}
            elif w.kind == RELIEF_CENTRE:
                allowed = {c for c in allowed if inst.cargo(c).kind != DELIVERY}
            leaves = {c: _leaf(c, rng) for c in sorted(allowed)}
            if leaves:
                twigs.append(Twig(w.name, leaves))
        branches.append(Branch(k.name, depots, twigs))
    if vx.kind == NODE_SIMULTANEOUS and len(branches) > 1:
        # the first feasible branch serves the node, so its order is randomised
        branches = [branches[i] for i in rng.permutation(len(branches))]
    return DecisionTree(trunk, branches)


# codes and scores ------------------------------------------------------------


def requirement_code(inst: Instance, node: str, stocks: "Stocks | None" = None) -> dict[str, float]:
    if stocks is not None:
        return {c: q for c, q in stocks.demand(node).items() if q > 0}
    return {c: q for c, q in inst.vertex(node).demand.items() if q > 0}


class Stocks:
    """Live remaining stock, capacity and demand during one iteration."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.res = {v.name: dict(v.resource()) for v in inst.vertices if v.kind in (WAREHOUSE, RELIEF_CENTRE)}
        self.need = {v.name: dict(v.demand) for v in inst.vertices if v.kind in NODE_KINDS}

    def available(self, vertex: str, cargo: str) -> float:
        return self.res.get(vertex, {}).get(cargo, 0.0)

    def take(self, vertex: str, cargo: str, q: float) -> None:
        self.res[vertex][cargo] = self.res[vertex].get(cargo, 0.0) - q

    def demand(self, node: str) -> dict[str, float]:
        return self.need.get(node, {})

    def serve(self, node: str, cargo: str, q: float) -> None:
        self.need[node][cargo] = self.need[node].get(cargo, 0.0) - q


def compare_code(
    req: Mapping[str, float],
    inst: Instance,
    twig: str,
    branch_ct_filter: Iterable[str],
    stocks: Stocks | None = None,
) -> dict[str, float]:
    vx = inst.vertex(twig)
    if vx.kind not in (WAREHOUSE, RELIEF_CENTRE):
        raise TreeError(f"{twig} is not a warehouse or relief centre")
    want = DELIVERY if vx.kind == WAREHOUSE else "pickup"
    out = {}
    for c in branch_ct_filter:
        if c not in req:
            continue
        if inst.cargo(c).kind != want:
            out[c] = 0.0
            continue
        have = stocks.available(twig, c) if stocks is not None else vx.resource().get(c, 0.0)
        out[c] = min(req[c], have)
    return out


def _leaf_mp(leaves: Mapping[str, object]) -> dict[str, tuple[float, float]]:
    out = {}
    for c, lf in leaves.items():
        if isinstance(lf, Leaf):
            out[c] = (lf.m, lf.p)
        else:
            out[c] = (float(lf[0]), float(lf[1]))
    return out


def score_basic(
    req: Mapping[str, float],
    cmp: Mapping[str, float],
    leaves: Mapping[str, object],
    hp: GlobalHyperParams,
    travel_time: float = 1.0,
) -> float:
    """Sum of m * fraction**p over demanded cargos, over the leaf multiplier mass."""
    mp = _leaf_mp(leaves)
    num = 0.0
    for c, (m, p) in mp.items():
        if req.get(c, 0) > 0:
            num += m * (cmp.get(c, 0.0) / req[c]) ** p
    return num / _denominator(mp, hp, travel_time)


def _denominator(mp: Mapping[str, tuple[float, float]], hp: GlobalHyperParams, travel_time: float) -> float:
    if not hp.denominator_enabled:
        return 1.0
    den = sum(m for m, _ in mp.values())
    if den <= 0:
        raise ScoreError("all leaf multipliers are zero")
    if hp.time_in_denominator and travel_time > 0:
        den *= travel_time
    return den


def score_tp(
    satisfaction: Mapping[str, float],
    transhipment_code: Mapping[str, float],
    degrees: Mapping[str, float],
    leaves: Mapping[str, object],
    hp: GlobalHyperParams,
    travel_time: float = 1.0,
) -> float:
    mp = _leaf_mp(leaves)
    adj = {}
    for c, (m, p) in mp.items():
        d = float(degrees.get(c, 1.0))
        if hp.degree_affects_multiplier:
            if d <= 0:
                raise ScoreError(f"degree of {c} must be positive")
            m = m / d
        if hp.degree_affects_exponent:
            p = p * d
        adj[c] = (m, p)
    num = 0.0
    for c, (m, p) in adj.items():
        if transhipment_code.get(c, 0) > 0:
            num += m * (satisfaction.get(c, 0.0) / transhipment_code[c]) ** p
    return num / _denominator(adj, hp, travel_time)


def adjusted_degree(entries: Iterable[tuple[int, float]], policy: str = "weighted", slider: float = 0.5) -> Fraction:
    """Quantity-weighted mean degree, or a slider between min and max degree."""
    entries = [(Fraction(d), Fraction(q).limit_denominator(10**9)) for d, q in entries]
    if not entries:
        raise ValueError("no degree entries")
    if policy == "slider":
        lo = min(d for d, _ in entries)
        hi = max(d for d, _ in entries)
        return lo + (hi - lo) * Fraction(slider).limit_denominator(10**6)
    total = sum(q for _, q in entries)
    if total <= 0:
        raise ValueError("quantities must be positive")
    return sum(d * q for d, q in entries) / total


# transhipment estimate ---------------------------------------------------------


def _prv_amount(inst: Instance, stocks: Stocks | None, vertex: str, cargo: str) -> float:
    vx = inst.vertex(vertex)
    if vx.kind == WAREHOUSE and inst.cargo(cargo).kind != DELIVERY:
        return 0.0
    if vx.kind == RELIEF_CENTRE and inst.cargo(cargo).kind == DELIVERY:
        return 0.0
    if stocks is not None:
        return stocks.available(vertex, cargo)
    return vx.resource().get(cargo, 0.0)


def _merge_one(into: dict, entries: Mapping[str, tuple[int, float, float]]) -> None:
    for prv, (d, s, a) in entries.items():
        old = into.get(prv)
        if old is None or d < old[0]:
            into[prv] = (d, s, a)
        elif d == old[0] and s > old[1]:
            into[prv] = (d, s, a)


def estimate_transhipment(
    inst: Instance,
    trees: Mapping[str, DecisionTree],
    considered_prvs: Iterable[str],
    prev_vt: str | None,
    cargo: str,
    qty: float,
    tp: str,
    hp: GlobalHyperParams,
    degree: int = 1,
    tabu: frozenset[tuple[str, str]] = frozenset(),
    used_smts: tuple[str, ...] = (),
    stocks: Stocks | None = None,
) -> ComponentPair:
    """How much of ``cargo`` can be brought to (or taken from) port ``tp``.

    Resource vertices reachable from ``tp`` by vehicle types other than
    ``prev_vt`` count at ``degree``; ports reached that way are explored
    recursively at ``degree + 1`` with a growing tabu list of
    (vehicle type, port) pairs.
    """
    tree = trees.get(tp)
    if tree is None or qty <= 0:
        return ComponentPair()
    considered = set(considered_prvs)
    found: dict[str, tuple[int, float, float]] = {}
    counter = 0.0
    for br in tree.branches:
        if br.vehicle_type == prev_vt:
            continue
        for tw in br.twigs:
            if inst.vertex(tw.vertex).kind == PORT or tw.vertex in considered or tw.vertex in found:
                continue
            if cargo not in tw.leaves:
                continue
            avail = _prv_amount(inst, stocks, tw.vertex, cargo)
            if avail <= 0:
                continue
            sat = min(avail, qty)
            found[tw.vertex] = (degree, sat, avail)
            counter += sat
    considered |= set(found)
    if counter >= qty and not hp.global_transhipment_fathom:
        return ComponentPair(dict(found), {p: (float(d), s, {d: {p: a}}) for p, (d, s, a) in found.items()})

    smts = used_smts + ((prev_vt or "") + "@" + tp,)
    marge1: dict[str, tuple[int, float, float]] = dict(found)
    marge2: dict[str, tuple[float, float, dict[int, dict[str, float]]]] = {
        p: (float(d), s, {d: {p: a}}) for p, (d, s, a) in found.items()
    }
    per_port: dict[str, dict[str, tuple[int, float, float]]] = {}
    for br in tree.branches:
        if br.vehicle_type == prev_vt:
            continue
        for tw in br.twigs:
            if inst.vertex(tw.vertex).kind != PORT or (br.vehicle_type, tw.vertex) in tabu:
                continue
            if cargo not in tw.leaves:
                continue
            dyn = tabu | {(br.vehicle_type, tw.vertex), (br.vehicle_type, tp)}
            new_q = qty if hp.full_fathom else qty - counter
            if new_q <= 0:
                new_q = qty
            rc = estimate_transhipment(
                inst, trees, considered, br.vehicle_type, cargo, new_q, tw.vertex, hp, degree + 1, frozenset(dyn), smts, stocks
            )
            if rc.empty():
                continue
            rel = ComponentPair(
                {p: (d - degree, s, a) for p, (d, s, a) in rc.component_one.items()},
                {
                    v: (ad - degree, s, {d - degree: dict(m) for d, m in ds.items()})
                    for v, (ad, s, ds) in rc.component_two.items()
                },
            )
            lf = tw.leaves[cargo]
            if lf.cached_component2 is None:
                lf.cached_component2 = rel
            _merge_one(marge1, rc.component_one)
            _merge_one(per_port.setdefault(tw.vertex, {}), rc.component_one)
    for port, entries in per_port.items():
        degs = [(d, s) for d, s, _ in entries.values() if s > 0]
        if not degs:
            continue
        policy = "weighted" if hp.weighted_degree else "slider"
        adj = float(adjusted_degree(degs, policy, hp.transhipment_degree_slider))
        down: dict[int, dict[str, float]] = {}
        for p, (d, s, a) in entries.items():
            down.setdefault(d, {})[p] = a
        marge2[port] = (adj, sum(s for _, s, _ in entries.values()), down)
    return ComponentPair(marge1, marge2)


def current_estimate(inst: Instance, pair: ComponentPair, cargo: str, stocks: Stocks) -> float:
    """Re-read the live stocks of the PRVs behind a cached estimate."""
    total = 0.0
    for prv in pair.component_one:
        total += _prv_amount(inst, stocks, prv, cargo)
    return total


def _port_degree(pair: ComponentPair, hp: GlobalHyperParams, slider: float) -> float:
    degs = [(d, s) for d, s, _ in pair.component_one.values() if s > 0]
    if not degs:
        return 1.0
    return float(adjusted_degree(degs, "weighted" if hp.weighted_degree else "slider", slider))


# preferences -----------------------------------------------------------------


@dataclass
class ScoredTwig:
    score: float
    branch: Branch
    twig: Twig
    code: dict[str, float]
    degree: float = 0.0


def _travel(inst: Instance, vt: str, a: str, b: str) -> float:
    t = inst.T(vt, a, b)
    if not math.isfinite(t):
        t = inst.T(vt, b, a)
    return t if math.isfinite(t) else 0.0


def _port_scores(
    inst: Instance,
    node: str,
    tree: DecisionTree,
    trees: Mapping[str, DecisionTree],
    tcode: Mapping[str, float],
    hp: GlobalHyperParams,
    stocks: Stocks | None,
    slider: float,
    considered: set[str],
) -> list[ScoredTwig]:
    out = []
    for br in tree.branches:
        for tw in br.twigs:
            if inst.vertex(tw.vertex).kind != PORT:
                continue
            sat, degs = {}, {}
            for c, q in tcode.items():
                if q <= 0 or c not in tw.leaves:
                    continue
                pair = estimate_transhipment(inst, trees, considered, br.vehicle_type, c, q, tw.vertex, hp, stocks=stocks)
                tw.leaves[c].cached_component2 = pair
                sat[c] = min(q, pair.satisfiable())
                degs[c] = _port_degree(pair, hp, slider)
            if not any(v > 0 for v in sat.values()):
                continue
            s = score_tp(sat, tcode, degs, tw.leaves, hp, _travel(inst, br.vehicle_type, node, tw.vertex))
            out.append(ScoredTwig(s, br, tw, sat, max(degs.values())))
    return out


def split_preferences(
    inst: Instance,
    node: str,
    tree: DecisionTree,
    hp: GlobalHyperParams,
    trees: Mapping[str, DecisionTree] | None = None,
    stocks: Stocks | None = None,
) -> tuple[list[ScoredTwig], dict[str, float], list[ScoredTwig]]:
    """Scored resource twigs, the transhipment code and scored port twigs."""
    req = requirement_code(inst, node, stocks)
    prv: list[ScoredTwig] = []
    best: dict[tuple[str, str], float] = {}
    for br in tree.branches:
        for tw in br.twigs:
            if inst.vertex(tw.vertex).kind == PORT:
                continue
            cmp = compare_code(req, inst, tw.vertex, tw.leaves, stocks)
            if not any(v > 0 for v in cmp.values()):
                continue
            s = score_basic(req, cmp, tw.leaves, hp, _travel(inst, br.vehicle_type, node, tw.vertex))
            prv.append(ScoredTwig(s, br, tw, cmp))
            for c, v in cmp.items():
                best[(tw.vertex, c)] = max(best.get((tw.vertex, c), 0.0), v)
    covered: dict[str, float] = {}
    for (_, c), v in best.items():
        covered[c] = covered.get(c, 0.0) + v
    if hp.full_demand_for_variability:
        tcode = dict(req)
    else:
        tcode = {c: q - covered.get(c, 0.0) for c, q in req.items() if q - covered.get(c, 0.0) > 0}
    ports: list[ScoredTwig] = []
    if tcode and trees is not None:
        considered = {tw.vertex for br in tree.branches for tw in br.twigs if inst.vertex(tw.vertex).kind != PORT}
        ports = _port_scores(inst, node, tree, trees, tcode, hp, stocks, hp.transhipment_degree_slider_NP, considered)
    return prv, tcode, ports


@dataclass
class BranchPreference:
    branch: Branch
    score_sum: float
    twigs: list[ScoredTwig]
    needs_transhipment: bool
    port_twigs: list[ScoredTwig] = field(default_factory=list)


def simultaneous_preferences(
    inst: Instance,
    node: str,
    tree: DecisionTree,
    hp: GlobalHyperParams,
    trees: Mapping[str, DecisionTree] | None = None,
    stocks: Stocks | None = None,
) -> list[BranchPreference]:
    """Branches able to serve the whole requirement in one visit."""
    req = requirement_code(inst, node, stocks)
    out = []
    for br in tree.branches:
        k = inst.vt(br.vehicle_type)
        if any(c not in k.compatible_cargos for c in req):
            continue
        if not inst.fits(br.vehicle_type, req):
            continue
        scored = []
        cover: dict[str, float] = {}
        for tw in br.twigs:
            if inst.vertex(tw.vertex).kind == PORT:
                continue
            cmp = compare_code(req, inst, tw.vertex, tw.leaves, stocks)
            if not any(v > 0 for v in cmp.values()):
                continue
            scored.append(ScoredTwig(score_basic(req, cmp, tw.leaves, hp, _travel(inst, br.vehicle_type, node, tw.vertex)), br, tw, cmp))
            for c, v in cmp.items():
                cover[c] = cover.get(c, 0.0) + v
        short = {c: q - cover.get(c, 0.0) for c, q in req.items() if q - cover.get(c, 0.0) > 1e-9}
        ports: list[ScoredTwig] = []
        if short:
            if trees is None:
                continue
            sub = Branch(br.vehicle_type, br.candidate_depots, br.twigs)
            considered = {t.vertex for t in br.twigs if inst.vertex(t.vertex).kind != PORT}
            ports = _port_scores(
                inst, node, DecisionTree(node, [sub]), trees, short, hp, stocks, hp.transhipment_degree_slider, considered
            )
            reach: dict[str, float] = {}
            for st in ports:
                for c, v in st.code.items():
                    reach[c] = reach.get(c, 0.0) + v
            if any(reach.get(c, 0.0) < q - 1e-9 for c, q in short.items()):
                continue
        scored.sort(key=lambda s: -s.score)
        ports.sort(key=lambda s: -s.score)
        out.append(BranchPreference(br, sum(s.score for s in scored) + sum(s.score for s in ports), scored, bool(short), ports))
    return out
