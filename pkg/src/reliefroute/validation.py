"""Independent feasibility checks for solution documents.

Nothing here reuses the heuristic's bookkeeping: loads, times and port
balances are recomputed from the raw stops of the solution file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .instance import (
    DELIVERY,
    DEPOT,
    NODE_KINDS,
    NODE_SIMULTANEOUS,
    PICKUP,
    PORT,
    RELIEF_CENTRE,
    WAREHOUSE,
    Instance,
)

CODES = (
    "capacity_volume",
    "capacity_weight",
    "negative_load",
    "compatibility",
    "depot_anchor",
    "simultaneous_multivisit",
    "node_unmet",
    "warehouse_overdraw",
    "rc_overfill",
    "time_arithmetic",
    "causality_negative_residue",
    "final_residue_nonzero",
    "port_incompatible_transfer",
)

TIME_EPS = 1e-6
CAUSAL_EPS = 1e-9


@dataclass
class Violation:
    code: str
    location: dict[str, Any]
    magnitude: float

    def __str__(self) -> str:
        loc = " ".join(f"{k}={v}" for k, v in self.location.items())
        return f"{self.code} {loc} magnitude={self.magnitude:.9g}"

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "location": dict(self.location), "magnitude": self.magnitude}


@dataclass
class Report:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def add(self, code: str, magnitude: float, **location: Any) -> None:
        self.violations.append(Violation(code, location, float(magnitude)))


def _qty_eps(inst: Instance) -> float:
    return 1e-9 if inst.integer else 1e-6


def _vehicle_label(r: dict[str, Any]) -> str:
    v = r.get("vehicle", {})
    return f"({v.get('depot')},{v.get('type')},{v.get('index')})"


def _check_route(inst: Instance, r: dict[str, Any], rep: Report, eps: float) -> float | None:
    """Per-route checks; returns the recomputed duration when timing is sane."""
    label = _vehicle_label(r)
    veh = r.get("vehicle", {})
    key = (veh.get("depot"), veh.get("type"), veh.get("index"))
    stops = r.get("stops", [])
    if key not in set(inst.vehicles):
        rep.add("depot_anchor", 1, vehicle=label, stop=0)
        return None
    depot, vt_name, _ = key
    vt = inst.vt(vt_name)
    if not stops or stops[0].get("vertex") != depot:
        rep.add("depot_anchor", 1, vehicle=label, stop=0)
        return None
    last = len(stops) - 1
    if len(stops) > 1:
        ends_home = stops[-1].get("vertex") == depot
        if vt.open_trip == ends_home:
            rep.add("depot_anchor", 1, vehicle=label, stop=last)
    for n, s in enumerate(stops[1:], start=1):
        if s.get("vertex") == depot and not (n == last and not vt.open_trip):
            rep.add("depot_anchor", 1, vehicle=label, stop=n)

    load: dict[str, float] = {}
    prev_depart = None
    prev_vertex = depot
    for n, s in enumerate(stops):
        name = s.get("vertex")
        if not inst.has_vertex(name):
            rep.add("compatibility", 1, vehicle=label, stop=n)
            return None
        vx = inst.vertex(name)
        vlc = {c: float(q) for c, q in (s.get("vlc") or {}).items() if q != 0}
        if vx.kind == DEPOT:
            if vlc:
                rep.add("depot_anchor", sum(abs(q) for q in vlc.values()), vehicle=label, stop=n)
            if name != depot:
                rep.add("depot_anchor", 1, vehicle=label, stop=n)
        elif name not in inst.accessible_set(vt_name):
            rep.add("compatibility", 1, vehicle=label, stop=n)
        for c, q in vlc.items():
            if c not in vt.compatible_cargos:
                rep.add("compatibility", abs(q), vehicle=label, stop=n, cargo=c)
                continue
            kind = inst.cargo(c).kind
            if vx.kind == WAREHOUSE and not (kind == DELIVERY and q > 0):
                rep.add("compatibility", abs(q), vehicle=label, stop=n, cargo=c)
            elif vx.kind == RELIEF_CENTRE and not (kind == PICKUP and q < 0):
                rep.add("compatibility", abs(q), vehicle=label, stop=n, cargo=c)
            elif vx.kind in NODE_KINDS:
                if (kind == DELIVERY and q > 0) or (kind == PICKUP and q < 0):
                    rep.add("compatibility", abs(q), vehicle=label, stop=n, cargo=c)
            elif vx.kind == PORT:
                if c not in vx.transhippable:
                    rep.add("port_incompatible_transfer", abs(q), vehicle=label, stop=n, cargo=c)
                elif not s.get("tp_tag"):
                    rep.add("compatibility", abs(q), vehicle=label, stop=n, cargo=c)
            load[c] = load.get(c, 0.0) + q
        for c, q in load.items():
            if q < -eps:
                rep.add("negative_load", -q, vehicle=label, stop=n, cargo=c)
        vol = sum(inst.cargo(c).unit_volume * q for c, q in load.items())
        wt = sum(inst.cargo(c).unit_weight * q for c, q in load.items())
        if vol > vt.volume_cap + eps:
            rep.add("capacity_volume", vol - vt.volume_cap, vehicle=label, stop=n)
        if wt > vt.weight_cap + eps:
            rep.add("capacity_weight", wt - vt.weight_cap, vehicle=label, stop=n)

        tm = s.get("time") or {}
        try:
            a, ld, w, d = (float(tm[k]) for k in ("arrive", "load", "wait", "depart"))
        except (KeyError, TypeError, ValueError):
            rep.add("time_arithmetic", 1, vehicle=label, stop=n)
            return None
        expect_load = sum(vt.load_unload_time.get(c, 0.0) * abs(q) for c, q in vlc.items())
        if n == 0:
            expect_arrive = 0.0
            if abs(d) > TIME_EPS:
                rep.add("time_arithmetic", abs(d), vehicle=label, stop=n)
        else:
            t = inst.T(vt_name, prev_vertex, name)
            if math.isinf(t):
                rep.add("compatibility", 1, vehicle=label, stop=n)
                return None
            expect_arrive = prev_depart + t
        if abs(a - expect_arrive) > TIME_EPS:
            rep.add("time_arithmetic", abs(a - expect_arrive), vehicle=label, stop=n)
        if abs(ld - expect_load) > TIME_EPS:
            rep.add("time_arithmetic", abs(ld - expect_load), vehicle=label, stop=n)
        if w < -TIME_EPS or (vx.kind != PORT and abs(w) > TIME_EPS):
            rep.add("time_arithmetic", abs(w), vehicle=label, stop=n)
        if abs(d - (a + w + ld)) > TIME_EPS:
            rep.add("time_arithmetic", abs(d - (a + w + ld)), vehicle=label, stop=n)
        prev_depart, prev_vertex = d, name

    leftover = sum(abs(q) for q in load.values())
    if leftover > eps:
        rep.add("final_residue_nonzero", leftover, vehicle=label, stop=last)

    if len(stops) <= 1:
        dur = 0.0
    elif vt.open_trip or stops[-1].get("vertex") != depot:
        dur = prev_depart
    else:
        dur = float(stops[-1]["time"]["arrive"])
    if "duration" in r and abs(float(r["duration"]) - dur) > TIME_EPS:
        rep.add("time_arithmetic", abs(float(r["duration"]) - dur), vehicle=label, stop="duration")
    return dur


def validate_solution(inst: Instance, sol: dict[str, Any]) -> Report:
    """Route, capacity, compatibility, demand and timing checks."""
    rep = Report()
    eps = _qty_eps(inst)
    routes = sol.get("routes", [])
    durs = []
    for r in routes:
        d = _check_route(inst, r, rep, eps)
        if d is not None:
            durs.append(d)

    served: dict[str, dict[str, float]] = {}
    visits: dict[str, list[tuple[str, int]]] = {}
    drawn: dict[str, dict[str, float]] = {}
    for r in routes:
        label = _vehicle_label(r)
        for n, s in enumerate(r.get("stops", [])):
            name = s.get("vertex")
            if not inst.has_vertex(name):
                continue
            vx = inst.vertex(name)
            vlc = {c: float(q) for c, q in (s.get("vlc") or {}).items() if q != 0}
            if vx.kind in NODE_KINDS:
                visits.setdefault(name, []).append((label, n))
                acc = served.setdefault(name, {})
                for c, q in vlc.items():
                    acc[c] = acc.get(c, 0.0) + abs(q)
            elif vx.kind in (WAREHOUSE, RELIEF_CENTRE):
                acc = drawn.setdefault(name, {})
                for c, q in vlc.items():
                    acc[c] = acc.get(c, 0.0) + abs(q)

    for node in inst.of_kind(*NODE_KINDS):
        need = {c: q for c, q in node.demand.items() if q > 0}
        got = served.get(node.name, {})
        if node.kind == NODE_SIMULTANEOUS and len(visits.get(node.name, [])) > 1:
            label, n = visits[node.name][1]
            rep.add("simultaneous_multivisit", len(visits[node.name]) - 1, vehicle=label, stop=n, vertex=node.name)
        for c, q in need.items():
            if got.get(c, 0.0) < q - eps:
                rep.add("node_unmet", q - got.get(c, 0.0), vertex=node.name, cargo=c)
        for c, q in got.items():
            if q > need.get(c, 0.0) + eps:
                rep.warnings.append(f"over_service vertex={node.name} cargo={c} excess={q - need.get(c, 0.0):.9g}")
    for v in inst.of_kind(WAREHOUSE, RELIEF_CENTRE):
        code = "warehouse_overdraw" if v.kind == WAREHOUSE else "rc_overfill"
        limit = v.resource()
        for c, q in drawn.get(v.name, {}).items():
            if q > limit.get(c, 0.0) + eps:
                rep.add(code, q - limit.get(c, 0.0), vertex=v.name, cargo=c)

    obj = sol.get("objective")
    if obj and durs and len(durs) == len(routes):
        mk = max(durs)
        if abs(float(obj.get("makespan", mk)) - mk) > TIME_EPS:
            rep.add("time_arithmetic", abs(float(obj["makespan"]) - mk), vehicle="objective", stop="makespan")
    return rep


def _cum(ramps: list[tuple[float, float, float]], t: float, left: bool) -> float:
    tot = 0.0
    for s, d, q in ramps:
        if d > 0:
            if t >= s + d:
                tot += q
            elif t > s:
                tot += q * (t - s) / d
        elif (s < t) if left else (s <= t):
            tot += q
    return tot


def causality_check(inst: Instance, sol: dict[str, Any]) -> Report:
    """Per port tag and cargo, collections never run ahead of deposits.

    Transfers are modelled as linear ramps over each visit's loading window
    ``[depart - load, depart]``.  Both cumulative curves are piecewise linear
    between ramp endpoints, so checking the endpoints (left and right limits)
    is exact.
    """
    rep = Report()
    eps = _qty_eps(inst)
    ramps: dict[tuple[str, str], dict[str, list]] = {}
    port_of: dict[str, str] = {}
    for r in sol.get("routes", []):
        label = _vehicle_label(r)
        for n, s in enumerate(r.get("stops", [])):
            tag = s.get("tp_tag")
            if not tag:
                continue
            name = s.get("vertex")
            if not inst.has_vertex(name) or inst.vertex(name).kind != PORT:
                rep.add("compatibility", 1, vehicle=label, stop=n)
                continue
            if port_of.setdefault(tag, name) != name:
                rep.add("compatibility", 1, vehicle=label, stop=n)
                continue
            tm = s.get("time") or {}
            try:
                d, ld = float(tm["depart"]), float(tm["load"])
            except (KeyError, TypeError, ValueError):
                continue
            for c, q in (s.get("vlc") or {}).items():
                q = float(q)
                if q == 0:
                    continue
                slot = ramps.setdefault((tag, c), {"dep": [], "wd": []})
                slot["dep" if q < 0 else "wd"].append((d - ld, ld, abs(q)))
    for (tag, c), slot in sorted(ramps.items()):
        dep, wd = slot["dep"], slot["wd"]
        times = sorted({s for s, _, _ in dep + wd} | {s + d for s, d, _ in dep + wd})
        for t in times:
            gap = max(_cum(wd, t, left) - _cum(dep, t, left) for left in (True, False))
            if gap > CAUSAL_EPS:
                rep.add("causality_negative_residue", gap, tag=tag, cargo=c, time=f"{t:.9g}")
                break
        residue = sum(q for _, _, q in dep) - sum(q for _, _, q in wd)
        if abs(residue) > eps:
            rep.add("final_residue_nonzero", abs(residue), tag=tag, cargo=c)
    return rep


def check_all(inst: Instance, sol: dict[str, Any]) -> Report:
    a = validate_solution(inst, sol)
    b = causality_check(inst, sol)
    return Report(a.violations + b.violations, a.warnings + b.warnings)
