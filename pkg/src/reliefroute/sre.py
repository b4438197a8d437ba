"""Smallest route elements (SREs) and the causality ledger.

An SRE is a three-segment micro-route: set1 (sources, deliveries loaded),
set2 (the focus vertex) and set3 (sinks, pickups unloaded).  Load codes are
signed, positive into the vehicle, and sum to zero per cargo.  Every port
occurrence opens a ledger row pairing depositing (superior) SREs with
collecting (inferior) SREs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .dts import (
    DecisionTree,
    GlobalHyperParams,
    ScoredTwig,
    Stocks,
    compare_code,
    estimate_transhipment,
    score_basic,
    score_tp,
    simultaneous_preferences,
    split_preferences,
    _port_degree,
    _travel,
)
from .instance import DELIVERY, PORT, RELIEF_CENTRE, WAREHOUSE, Instance

VLC = dict[str, float]


@dataclass
class SRE:
    id: int
    vehicle_type: str
    candidate_depots: frozenset[str]
    set1: list[tuple[str, VLC]]
    set2: tuple[str, VLC]
    set3: list[tuple[str, VLC]]
    tp_tags: dict[tuple[int, int], str] = field(default_factory=dict)  # (segment, index) -> tag

    def elements(self) -> list[tuple[int, int, str, VLC]]:
        out = [(1, n, v, q) for n, (v, q) in enumerate(self.set1)]
        out.append((2, 0, self.set2[0], self.set2[1]))
        out += [(3, n, v, q) for n, (v, q) in enumerate(self.set3)]
        return out

    def vertices(self) -> list[str]:
        return [e[2] for e in self.elements()]

    def tag(self, seg: int, idx: int) -> str | None:
        return self.tp_tags.get((seg, idx))

    def problems(self, inst: Instance, eps: float = 1e-9) -> list[str]:
        """Violations of the sum-zero, direction and load rules."""
        out = []
        tot: dict[str, float] = {}
        for _, _, _, vlc in self.elements():
            for c, q in vlc.items():
                tot[c] = tot.get(c, 0.0) + q
        if any(abs(q) > eps for q in tot.values()):
            out.append(f"sre {self.id}: load codes do not sum to zero")
        for v, vlc in self.set1:
            if any(inst.cargo(c).kind != DELIVERY or q <= 0 for c, q in vlc.items()):
                out.append(f"sre {self.id}: set1 entry at {v} moves a non-delivery load")
        for v, vlc in self.set3:
            if any(inst.cargo(c).kind == DELIVERY or q >= 0 for c, q in vlc.items()):
                out.append(f"sre {self.id}: set3 entry at {v} moves a non-pickup load")
        if not self.set1 and not self.set3:
            out.append(f"sre {self.id}: set1 and set3 both empty")
        load: dict[str, float] = {}
        for _, _, v, vlc in self.elements():
            for c, q in vlc.items():
                load[c] = load.get(c, 0.0) + q
            if any(q < -eps for q in load.values()) or not inst.fits(self.vehicle_type, load):
                out.append(f"sre {self.id}: invalid load after {v}")
                break
        for c in tot:
            if c not in inst.vt(self.vehicle_type).compatible_cargos:
                out.append(f"sre {self.id}: {c} incompatible with {self.vehicle_type}")
        return out


def base26(n: int) -> str:
    """Bijective base-26 letters: 0 -> A, 25 -> Z, 26 -> AA."""
    s = ""
    n += 1
    while n:
        n, r = divmod(n - 1, 26)
        s = chr(65 + r) + s
    return s


@dataclass
class LedgerRow:
    tag: str
    port: str
    superior: list[int] = field(default_factory=list)
    inferior: list[int] = field(default_factory=list)


class CausalityLedger:
    def __init__(self) -> None:
        self.rows: list[LedgerRow] = []
        self._by_tag: dict[str, LedgerRow] = {}
        self._counter = 0

    def open_row(self, port: str) -> LedgerRow:
        row = LedgerRow(f"{port}_{base26(self._counter)}", port)
        self._counter += 1
        self.rows.append(row)
        self._by_tag[row.tag] = row
        return row

    def row(self, tag: str) -> LedgerRow:
        return self._by_tag[tag]

    def problems(self, inst: Instance) -> list[str]:
        out = []
        for r in self.rows:
            if len(r.superior) > 1 and len(r.inferior) > 1:
                out.append(f"row {r.tag} has several ids in both columns")
            if not inst.has_vertex(r.port) or inst.vertex(r.port).kind != PORT:
                out.append(f"row {r.tag} names a non-port")
        return out

    def to_list(self) -> list[dict]:
        return [{"tag": r.tag, "superior": list(r.superior), "inferior": list(r.inferior)} for r in self.rows]


@dataclass
class UnsatisfiablePortion:
    vertex: str
    cargo: str
    quantity: float
    reason: str


class Unsatisfiable(RuntimeError):
    def __init__(self, portions: list[UnsatisfiablePortion]):
        self.portions = portions
        super().__init__("; ".join(f"{p.vertex}/{p.cargo}: {p.quantity:g} ({p.reason})" for p in portions))


class Generator:
    """SRE generation state for one main iteration."""

    def __init__(
        self,
        inst: Instance,
        hp: GlobalHyperParams,
        rng: np.random.Generator,
        trees: Mapping[str, DecisionTree],
        stocks: Stocks | None = None,
        ledger: CausalityLedger | None = None,
    ):
        self.inst = inst
        self.hp = hp
        self.rng = rng
        self.trees = trees
        self.stocks = stocks or Stocks(inst)
        self.ledger = ledger or CausalityLedger()
        self.sres: dict[int, SRE] = {}
        self.next_id = 1
        self.unsat: list[UnsatisfiablePortion] = []
        self.mandatory: set[str] = set()

    # helpers -----------------------------------------------------------------

    def _amount(self, x: float) -> float:
        if self.inst.integer:
            return float(math.floor(x + 1e-9))
        return x if x > 1e-9 else 0.0

    def _new(self, vt, depots, set1, set2, set3, tags=None) -> SRE:
        sre = SRE(self.next_id, vt, frozenset(depots), set1, set2, set3, dict(tags or {}))
        self.next_id += 1
        self.sres[sre.id] = sre
        return sre

    def _fail(self, vertex: str, cargo: str, qty: float, reason: str) -> None:
        self.unsat.append(UnsatisfiablePortion(vertex, cargo, qty, reason))
        raise Unsatisfiable(list(self.unsat))

    def _order(self, scored: list, key) -> list:
        ties = self.rng.random(len(scored))
        idx = sorted(range(len(scored)), key=lambda n: (-key(scored[n]), ties[n]))
        return [scored[n] for n in idx]

    # split nodes ---------------------------------------------------------------

    def generate_split(self, nodes: Iterable[str]) -> list[SRE]:
        inst, st = self.inst, self.stocks
        nodes = list(nodes)
        start = self.next_id
        entries: list[tuple[str, ScoredTwig]] = []
        ports: dict[str, list[ScoredTwig]] = {}
        for node in nodes:
            tree = self.trees[node]
            prv, tcode, pt = split_preferences(inst, node, tree, self.hp, self.trees, st)
            entries += [(node, s) for s in prv]
            ports[node] = pt
            if tcode:
                self.mandatory.add(node)
        entries = self._order(entries, lambda e: e[1].score)
        # every productive round moves a full trip, so this only guards against bugs
        rounds = max(1, len(entries) * len(nodes)) * 1000
        for _ in range(rounds):
            progress = False
            for node, s in entries:
                vt = s.branch.vehicle_type
                kind = inst.vertex(s.twig.vertex).kind
                cargos = [
                    c
                    for c in s.twig.leaves
                    if st.demand(node).get(c, 0.0) > 1e-9 and st.available(s.twig.vertex, c) > 1e-9
                ]
                if not cargos:
                    continue
                mt = float(np.mean([s.twig.leaves[c].multi_trip for c in cargos]))
                trips = 0
                while math.exp(-trips * mt) > self.rng.random():
                    load: dict[str, float] = {}
                    for c in cargos:
                        a = min(st.demand(node).get(c, 0.0), st.available(s.twig.vertex, c), inst.max_units(vt, c, load))
                        a = self._amount(a)
                        if a > 0:
                            load[c] = a
                    if not load:
                        break
                    for c, a in load.items():
                        st.take(s.twig.vertex, c, a)
                        st.serve(node, c, a)
                    if kind == WAREHOUSE:
                        self._new(vt, s.branch.candidate_depots, [(s.twig.vertex, dict(load))], (node, {c: -a for c, a in load.items()}), [])
                    else:
                        self._new(vt, s.branch.candidate_depots, [], (node, dict(load)), [(s.twig.vertex, {c: -a for c, a in load.items()})])
                    trips += 1
                    progress = True
            if not progress or all(
                all(q <= 1e-9 for q in st.demand(n).values()) for n in nodes
            ):
                break
        requests = [(n, c, q) for n in nodes for c, q in sorted(st.demand(n).items()) if q > 1e-9]
        if requests:
            self.generate_split_transhipment(requests, ports)
        return [self.sres[i] for i in range(start, self.next_id)]

    def generate_split_transhipment(
        self, requests: list[tuple[str, str, float]], ports: Mapping[str, list[ScoredTwig]]
    ) -> list[SRE]:
        inst, st = self.inst, self.stocks
        start = self.next_id
        for node, c, qty in requests:
            self.mandatory.add(node)
            cands = self._order([p for p in ports.get(node, []) if c in p.twig.leaves], lambda p: p.score)
            rem = qty
            while rem > 1e-9:
                created = False
                for p in cands:
                    vt = p.branch.vehicle_type
                    considered = {t.vertex for t in p.branch.twigs if inst.vertex(t.vertex).kind != PORT}
                    est = estimate_transhipment(
                        inst, self.trees, considered, vt, c, rem, p.twig.vertex, self.hp, stocks=st
                    ).satisfiable()
                    if est <= 1e-9:
                        continue
                    mt = p.twig.leaves[c].multi_trip
                    trips = 0
                    while rem > 1e-9 and math.exp(-trips * mt) > self.rng.random():
                        amt = self._amount(min(est, inst.max_units(vt, c), rem))
                        if amt <= 0:
                            break
                        if inst.cargo(c).kind == DELIVERY:
                            sre = self._new(vt, p.branch.candidate_depots, [(p.twig.vertex, {c: amt})], (node, {c: -amt}), [])
                        else:
                            sre = self._new(vt, p.branch.candidate_depots, [], (node, {c: amt}), [(p.twig.vertex, {c: -amt})])
                        st.serve(node, c, amt)
                        self.stem_trail(sre, ())
                        rem -= amt
                        est -= amt
                        trips += 1
                        created = True
                if not created:
                    self._fail(node, c, rem, "no port can supply the shortfall")
                if not self.hp.transhipment_trip_setting and rem > 1e-9:
                    self._fail(node, c, rem, "single transhipment sweep left a shortfall")
        return [self.sres[i] for i in range(start, self.next_id)]

    # simultaneous nodes --------------------------------------------------------

    def generate_simultaneous(self, nodes: Iterable[str]) -> list[SRE]:
        inst, st = self.inst, self.stocks
        start = self.next_id
        for node in nodes:
            req = {c: q for c, q in st.demand(node).items() if q > 0}
            if not req:
                continue
            prefs = simultaneous_preferences(inst, node, self.trees[node], self.hp, self.trees, st)
            if not prefs:
                c, q = next(iter(sorted(req.items())))
                self._fail(node, c, q, "no vehicle type can serve the node in one visit")
            bp = prefs[0]
            if bp.needs_transhipment:
                self.mandatory.add(node)
            rem = dict(req)
            set1: dict[str, VLC] = {}
            set3: dict[str, VLC] = {}
            for s in bp.twigs:
                for c in s.twig.leaves:
                    a = self._amount(min(rem.get(c, 0.0), st.available(s.twig.vertex, c)))
                    if a <= 0:
                        continue
                    st.take(s.twig.vertex, c, a)
                    rem[c] -= a
                    if inst.cargo(c).kind == DELIVERY:
                        set1.setdefault(s.twig.vertex, {})[c] = a
                    else:
                        set3.setdefault(s.twig.vertex, {})[c] = -a
            for s in bp.port_twigs:
                for c, cap in s.code.items():
                    a = self._amount(min(rem.get(c, 0.0), cap))
                    if a <= 0:
                        continue
                    rem[c] -= a
                    if inst.cargo(c).kind == DELIVERY:
                        set1.setdefault(s.twig.vertex, {})[c] = a
                    else:
                        set3.setdefault(s.twig.vertex, {})[c] = -a
            left = {c: q for c, q in rem.items() if q > 1e-9}
            if left:
                c, q = next(iter(sorted(left.items())))
                self._fail(node, c, q, "resources for the simultaneous node ran out")
            vlc2 = {c: (-q if inst.cargo(c).kind == DELIVERY else q) for c, q in req.items()}
            for c in req:
                st.serve(node, c, req[c])
            sre = self._new(bp.branch.vehicle_type, bp.branch.candidate_depots, list(set1.items()), (node, vlc2), list(set3.items()))
            self.stem_trail(sre, ())
        return [self.sres[i] for i in range(start, self.next_id)]

    # ports ---------------------------------------------------------------------

    def stem_trail(self, sre: SRE, chain: tuple[str, ...]) -> None:
        """Open a ledger row per untagged port occurrence and fathom it."""
        inst = self.inst
        for seg, entries in ((1, sre.set1), (3, sre.set3)):
            for idx, (v, vlc) in enumerate(entries):
                if inst.vertex(v).kind != PORT or (seg, idx) in sre.tp_tags:
                    continue
                row = self.ledger.open_row(v)
                sre.tp_tags[(seg, idx)] = row.tag
                (row.inferior if seg == 1 else row.superior).append(sre.id)
                for c, q in sorted(vlc.items()):
                    self.generate_tp(row.tag, c, abs(q), sre.vehicle_type, chain + (v,))

    def generate_tp(self, tag: str, cargo: str, qty: float, requester_vt: str, chain: tuple[str, ...]) -> list[SRE]:
        """Balance ``qty`` of ``cargo`` at the row's port from another segment."""
        inst, st, hp = self.inst, self.stocks, self.hp
        start = self.next_id
        row = self.ledger.row(tag)
        port = row.port
        tree = self.trees[port]
        delivery = inst.cargo(cargo).kind == DELIVERY
        tabu_modes = inst.vt(requester_vt).modes
        branches = [b for b in tree.branches if not (inst.vt(b.vehicle_type).modes & tabu_modes)]
        rem = qty
        phase = 0  # 0: resource vertices, 1: deep transhipment, 2: unrestricted
        while rem > 1e-9:
            cands: list[tuple[float, object, object, float]] = []
            for br in branches:
                for tw in br.twigs:
                    if cargo not in tw.leaves:
                        continue
                    kind = inst.vertex(tw.vertex).kind
                    t = _travel(inst, br.vehicle_type, port, tw.vertex)
                    if kind in (WAREHOUSE, RELIEF_CENTRE):
                        avail = st.available(tw.vertex, cargo)
                        if avail <= 1e-9:
                            continue
                        cmp = compare_code({cargo: rem}, inst, tw.vertex, [cargo], st)
                        cands.append((score_basic({cargo: rem}, cmp, {cargo: tw.leaves[cargo]}, hp, t), br, tw, avail))
                    elif phase > 0 and tw.vertex not in chain and tw.vertex != port and len(chain) <= len(self.trees):
                        pair = estimate_transhipment(
                            inst, self.trees, set(), br.vehicle_type, cargo, rem, tw.vertex, hp, stocks=st
                        )
                        est = pair.satisfiable()
                        if phase == 1 and est <= 1e-9:
                            continue
                        deg = _port_degree(pair, hp, hp.transhipment_degree_slider)
                        s = score_tp({cargo: min(est, rem)}, {cargo: rem}, {cargo: deg}, {cargo: tw.leaves[cargo]}, hp, t)
                        s -= deg * hp.degree_score_reduction
                        cands.append((s, br, tw, est if phase == 1 else rem))
            if not cands:
                if phase < 2:
                    phase += 1
                    continue
                self._fail(port, cargo, rem, f"row {tag} cannot be balanced")
            s, br, tw, cap = self._order(cands, lambda e: e[0])[0]
            amt = self._amount(min(rem, cap, inst.max_units(br.vehicle_type, cargo)))
            if amt <= 0:
                self._fail(port, cargo, rem, f"row {tag}: vehicle too small for one unit")
            if inst.vertex(tw.vertex).kind != PORT:
                st.take(tw.vertex, cargo, amt)
            if delivery:
                sre = self._new(br.vehicle_type, br.candidate_depots, [(tw.vertex, {cargo: amt})], (port, {cargo: -amt}), [], {(2, 0): tag})
                row.superior.append(sre.id)
            else:
                sre = self._new(br.vehicle_type, br.candidate_depots, [], (port, {cargo: amt}), [(tw.vertex, {cargo: -amt})], {(2, 0): tag})
                row.inferior.append(sre.id)
            rem -= amt
            if inst.vertex(tw.vertex).kind == PORT:
                self.stem_trail(sre, chain + (port,))
            phase = 0
        return [self.sres[i] for i in range(start, self.next_id)]


# functional wrappers -----------------------------------------------------------


def generate_split(gen: Generator, nodes: Iterable[str]) -> list[SRE]:
    return gen.generate_split(nodes)


def generate_simultaneous(gen: Generator, nodes: Iterable[str]) -> list[SRE]:
    return gen.generate_simultaneous(nodes)


def generate_tp(gen: Generator, tag: str, cargo: str, qty: float, requester_vt: str) -> list[SRE]:
    return gen.generate_tp(tag, cargo, qty, requester_vt, (gen.ledger.row(tag).port,))


def stem_trail(gen: Generator, sre: SRE) -> None:
    gen.stem_trail(sre, ())
