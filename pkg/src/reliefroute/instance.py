"""Problem instances: cargo types, vehicle types, vertices and travel times.

Instances are read from a JSON document and are treated as immutable once
parsed.  Derived sets (accessible vertices per vehicle type, fleet roster)
are cached on first use.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable

DEPOT = "vehicle_depot"
WAREHOUSE = "warehouse"
RELIEF_CENTRE = "relief_centre"
NODE_SIMULTANEOUS = "node_simultaneous"
NODE_SPLIT = "node_split"
PORT = "transhipment_port"

VERTEX_KINDS = (DEPOT, WAREHOUSE, RELIEF_CENTRE, NODE_SIMULTANEOUS, NODE_SPLIT, PORT)
NODE_KINDS = (NODE_SIMULTANEOUS, NODE_SPLIT)
PRV_KINDS = (WAREHOUSE, RELIEF_CENTRE)

PICKUP = "pickup"
DELIVERY = "delivery"

# the one kind-specific field each vertex kind carries
KIND_FIELD = {
    DEPOT: "fleet",
    WAREHOUSE: "stock",
    RELIEF_CENTRE: "capacity",
    NODE_SIMULTANEOUS: "demand",
    NODE_SPLIT: "demand",
    PORT: "transhippable",
}

TOP_LEVEL_KEYS = {
    "name",
    "modes",
    "cargo_types",
    "vehicle_types",
    "vertices",
    "travel_time",
    "integrality",
}

DEFAULT_BIG_M = 3000.0

Vehicle = tuple[str, str, int]  # (depot, vehicle type, index from 1)


class InstanceError(ValueError):
    """Raised when an instance document cannot be turned into an Instance."""


@dataclass(frozen=True)
class CargoType:
    name: str
    kind: str
    unit_volume: float
    unit_weight: float

    @property
    def is_pickup(self) -> bool:
        return self.kind == PICKUP


@dataclass(frozen=True)
class VehicleType:
    name: str
    modes: frozenset[str]
    volume_cap: float
    weight_cap: float
    open_trip: bool
    compatible_cargos: frozenset[str]
    load_unload_time: dict[str, float] = field(hash=False, compare=True)


@dataclass(frozen=True)
class Vertex:
    name: str
    kind: str
    modes: frozenset[str]
    fleet: dict[str, int] = field(default_factory=dict, hash=False)
    stock: dict[str, float] = field(default_factory=dict, hash=False)
    capacity: dict[str, float] = field(default_factory=dict, hash=False)
    demand: dict[str, float] = field(default_factory=dict, hash=False)
    transhippable: frozenset[str] = frozenset()

    @property
    def is_node(self) -> bool:
        return self.kind in NODE_KINDS

    @property
    def is_port(self) -> bool:
        return self.kind == PORT

    @property
    def is_prv(self) -> bool:
        return self.kind in PRV_KINDS

    def resource(self) -> dict[str, float]:
        """Stock of a warehouse or intake capacity of a relief centre."""
        if self.kind == WAREHOUSE:
            return self.stock
        if self.kind == RELIEF_CENTRE:
            return self.capacity
        return {}


@dataclass(frozen=True)
class Issue:
    code: str
    subject: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code}: {self.subject}: {self.detail}"


@dataclass(eq=False)
class Instance:
    name: str
    modes: list[str]
    cargo_types: list[CargoType]
    vehicle_types: list[VehicleType]
    vertices: list[Vertex]
    travel_time: dict[str, dict[tuple[str, str], float]]
    integrality: str = "integer"
    big_m_default: float = DEFAULT_BIG_M

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return to_document(self) == to_document(other)

    # lookups -------------------------------------------------------------

    @cached_property
    def _cargo_by_name(self) -> dict[str, CargoType]:
        return {c.name: c for c in self.cargo_types}

    @cached_property
    def _vt_by_name(self) -> dict[str, VehicleType]:
        return {k.name: k for k in self.vehicle_types}

    @cached_property
    def _vertex_by_name(self) -> dict[str, Vertex]:
        return {v.name: v for v in self.vertices}

    def cargo(self, name: str) -> CargoType:
        return self._cargo_by_name[name]

    def vt(self, name: str) -> VehicleType:
        try:
            return self._vt_by_name[name]
        except KeyError:
            raise KeyError(f"unknown vehicle type {name!r}") from None

    def vertex(self, name: str) -> Vertex:
        return self._vertex_by_name[name]

    def has_vertex(self, name: str) -> bool:
        return name in self._vertex_by_name

    @property
    def integer(self) -> bool:
        return self.integrality == "integer"

    def of_kind(self, *kinds: str) -> list[Vertex]:
        return [v for v in self.vertices if v.kind in kinds]

    def names_of_kind(self, *kinds: str) -> list[str]:
        return [v.name for v in self.vertices if v.kind in kinds]

    def T(self, vt: str, i: str, j: str) -> float:
        """Travel time for vehicle type ``vt``; ``inf`` when unreachable."""
        if i == j:
            return 0.0
        return self.travel_time.get(vt, {}).get((i, j), math.inf)

    def load_time(self, vt: str, vlc: dict[str, float]) -> float:
        u = self.vt(vt).load_unload_time
        return sum(u.get(c, 0.0) * abs(q) for c, q in vlc.items())

    # derived sets --------------------------------------------------------

    @cached_property
    def _accessible(self) -> dict[str, frozenset[str]]:
        out = {}
        for k in self.vehicle_types:
            table = self.travel_time.get(k.name, {})
            touched = set()
            for (i, j), t in table.items():
                if math.isfinite(t):
                    touched.add(i)
                    touched.add(j)
            out[k.name] = frozenset(
                v.name
                for v in self.vertices
                if v.kind != DEPOT and v.modes & k.modes and v.name in touched
            )
        return out

    def accessible_set(self, vt: str) -> frozenset[str]:
        """Non-depot vertices a vehicle type can reach (the set V_k)."""
        if vt not in self._vt_by_name:
            raise KeyError(f"unknown vehicle type {vt!r}")
        return self._accessible[vt]

    def vts_at(self, vertex: str) -> list[str]:
        """Vehicle types that can access ``vertex`` (the set K_i)."""
        return [k.name for k in self.vehicle_types if vertex in self._accessible[k.name]]

    @cached_property
    def vehicles(self) -> list[Vehicle]:
        """Every fleet vehicle, ordered by depot then vehicle-type declaration."""
        out = []
        order = {k.name: n for n, k in enumerate(self.vehicle_types)}
        for d in self.of_kind(DEPOT):
            for vt in sorted(d.fleet, key=lambda k: order[k]):
                for idx in range(1, d.fleet[vt] + 1):
                    out.append((d.name, vt, idx))
        return out

    def depots_for(self, vt: str) -> list[str]:
        """Depots hosting ``vt`` that share a mode with it."""
        k = self.vt(vt)
        return [
            d.name
            for d in self.of_kind(DEPOT)
            if d.fleet.get(vt, 0) > 0 and d.modes & k.modes
        ]

    def fits(self, vt: str, load: dict[str, float], tol: float = 1e-9) -> bool:
        k = self.vt(vt)
        vol = sum(self.cargo(c).unit_volume * q for c, q in load.items())
        wt = sum(self.cargo(c).unit_weight * q for c, q in load.items())
        return vol <= k.volume_cap + tol and wt <= k.weight_cap + tol

    def max_units(self, vt: str, cargo: str, load: dict[str, float] | None = None) -> float:
        """Largest amount of ``cargo`` that still fits on top of ``load``."""
        k = self.vt(vt)
        load = load or {}
        vol = sum(self.cargo(c).unit_volume * q for c, q in load.items())
        wt = sum(self.cargo(c).unit_weight * q for c, q in load.items())
        ct = self.cargo(cargo)
        room = math.inf
        if ct.unit_volume > 0:
            room = min(room, (k.volume_cap - vol) / ct.unit_volume)
        if ct.unit_weight > 0:
            room = min(room, (k.weight_cap - wt) / ct.unit_weight)
        return max(room, 0.0)


# parsing -----------------------------------------------------------------


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InstanceError(msg)


def _number(x: Any, where: str) -> float:
    _require(
        isinstance(x, (int, float)) and not isinstance(x, bool),
        f"{where}: expected a number, got {x!r}",
    )
    _require(math.isfinite(x), f"{where}: number must be finite")
    return float(x)


def _quantities(raw: Any, where: str, known: set[str], integer: bool) -> dict[str, float]:
    _require(isinstance(raw, dict), f"{where}: expected a mapping")
    out = {}
    for c, q in raw.items():
        _require(c in known, f"{where}: unknown cargo {c!r}")
        q = _number(q, f"{where}[{c}]")
        _require(q >= 0, f"{where}[{c}]: quantity must be >= 0")
        if integer:
            _require(float(q).is_integer(), f"{where}[{c}]: integer mode needs integral quantities")
        out[c] = q
    return out


def _names(raw: Any, where: str, known: Iterable[str] | None = None) -> list[str]:
    _require(isinstance(raw, list), f"{where}: expected a list")
    out = []
    for n in raw:
        _require(isinstance(n, str), f"{where}: names must be strings")
        if known is not None:
            _require(n in known, f"{where}: unknown name {n!r}")
        out.append(n)
    _require(len(set(out)) == len(out), f"{where}: duplicate name")
    return out


def from_document(doc: Any) -> Instance:
    """Build an Instance from an already-decoded JSON document."""
    _require(isinstance(doc, dict), "instance document must be a JSON object")
    keys = set(doc)
    _require(keys == TOP_LEVEL_KEYS, f"top-level keys must be exactly {sorted(TOP_LEVEL_KEYS)}, got {sorted(keys)}")
    _require(isinstance(doc["name"], str), "name must be a string")
    integrality = doc["integrality"]
    _require(integrality in ("integer", "continuous"), "integrality must be 'integer' or 'continuous'")
    integer = integrality == "integer"
    modes = _names(doc["modes"], "modes")
    mode_set = set(modes)

    cargos = []
    seen: set[str] = set()
    for n, raw in enumerate(doc["cargo_types"]):
        where = f"cargo_types[{n}]"
        _require(isinstance(raw, dict), f"{where}: expected an object")
        _require(set(raw) == {"name", "kind", "unit_volume", "unit_weight"}, f"{where}: bad fields {sorted(raw)}")
        name = raw["name"]
        _require(isinstance(name, str) and name not in seen, f"{where}: duplicate or invalid name {name!r}")
        _require(raw["kind"] in (PICKUP, DELIVERY), f"{where}: kind must be pickup or delivery")
        vol = _number(raw["unit_volume"], f"{where}.unit_volume")
        wt = _number(raw["unit_weight"], f"{where}.unit_weight")
        _require(vol >= 0 and wt >= 0, f"{where}: unit volume and weight must be >= 0")
        seen.add(name)
        cargos.append(CargoType(name, raw["kind"], vol, wt))
    cargo_names = {c.name for c in cargos}

    vts = []
    seen = set()
    vt_fields = {"name", "modes", "volume_cap", "weight_cap", "open_trip", "compatible_cargos", "load_unload_time"}
    for n, raw in enumerate(doc["vehicle_types"]):
        where = f"vehicle_types[{n}]"
        _require(isinstance(raw, dict) and set(raw) == vt_fields, f"{where}: fields must be {sorted(vt_fields)}")
        name = raw["name"]
        _require(isinstance(name, str) and name not in seen, f"{where}: duplicate or invalid name {name!r}")
        seen.add(name)
        vmodes = frozenset(_names(raw["modes"], f"{where}.modes", mode_set))
        vol = _number(raw["volume_cap"], f"{where}.volume_cap")
        wt = _number(raw["weight_cap"], f"{where}.weight_cap")
        _require(vol > 0 and wt > 0, f"{where}: capacities must be > 0")
        _require(isinstance(raw["open_trip"], bool), f"{where}.open_trip must be boolean")
        compat = frozenset(_names(raw["compatible_cargos"], f"{where}.compatible_cargos", cargo_names))
        lut = raw["load_unload_time"]
        _require(isinstance(lut, dict), f"{where}.load_unload_time: expected a mapping")
        _require(set(lut) == set(compat), f"{where}.load_unload_time must cover exactly the compatible cargos")
        u = {c: _number(t, f"{where}.load_unload_time[{c}]") for c, t in lut.items()}
        _require(all(t >= 0 for t in u.values()), f"{where}: load/unload times must be >= 0")
        vts.append(VehicleType(name, vmodes, vol, wt, raw["open_trip"], compat, u))
    vt_names = {k.name for k in vts}

    vertices = []
    seen = set()
    for n, raw in enumerate(doc["vertices"]):
        where = f"vertices[{n}]"
        _require(isinstance(raw, dict), f"{where}: expected an object")
        name = raw.get("name")
        _require(isinstance(name, str) and name not in seen, f"{where}: duplicate or invalid name {name!r}")
        seen.add(name)
        kind = raw.get("kind")
        _require(kind in VERTEX_KINDS, f"{where}: unknown kind {kind!r}")
        extra = KIND_FIELD[kind]
        _require(set(raw) == {"name", "kind", "modes", extra}, f"{where}: a {kind} needs exactly name, kind, modes, {extra}")
        vmodes = frozenset(_names(raw["modes"], f"{where}.modes", mode_set))
        kw: dict[str, Any] = {}
        if kind == DEPOT:
            fleet = raw["fleet"]
            _require(isinstance(fleet, dict), f"{where}.fleet: expected a mapping")
            for k, cnt in fleet.items():
                _require(k in vt_names, f"{where}.fleet: unknown vehicle type {k!r}")
                _require(isinstance(cnt, int) and not isinstance(cnt, bool) and cnt >= 0, f"{where}.fleet[{k}]: count must be a non-negative integer")
            kw["fleet"] = dict(fleet)
        elif kind == PORT:
            kw["transhippable"] = frozenset(_names(raw["transhippable"], f"{where}.transhippable", cargo_names))
        else:
            q = _quantities(raw[extra], f"{where}.{extra}", cargo_names, integer)
            if kind == WAREHOUSE:
                _require(all(not cargos_by(cargos, c).is_pickup for c in q), f"{where}: warehouses hold delivery cargos only")
            if kind == RELIEF_CENTRE:
                _require(all(cargos_by(cargos, c).is_pickup for c in q), f"{where}: relief centres accept pickup cargos only")
            if kind == NODE_SIMULTANEOUS:
                _require(len(q) > 0, f"{where}: a simultaneous node needs a nonempty demand")
            kw[extra] = q
        vertices.append(Vertex(name, kind, vmodes, **kw))
    vmap = {v.name: v for v in vertices}
    vtmap = {k.name: k for k in vts}

    tt_raw = doc["travel_time"]
    _require(isinstance(tt_raw, dict), "travel_time: expected a mapping")
    travel: dict[str, dict[tuple[str, str], float]] = {k.name: {} for k in vts}
    for k, rows in tt_raw.items():
        _require(k in vt_names, f"travel_time: unknown vehicle type {k!r}")
        _require(isinstance(rows, dict), f"travel_time[{k}]: expected a mapping")
        for i, cols in rows.items():
            _require(i in vmap, f"travel_time[{k}]: unknown vertex {i!r}")
            _require(isinstance(cols, dict), f"travel_time[{k}][{i}]: expected a mapping")
            for j, t in cols.items():
                _require(j in vmap, f"travel_time[{k}][{i}]: unknown vertex {j!r}")
                t = _number(t, f"travel_time[{k}][{i}][{j}]")
                _require(t >= 0, f"travel_time[{k}][{i}][{j}]: must be >= 0")
                for end in (i, j):
                    _require(
                        bool(vmap[end].modes & vtmap[k].modes),
                        f"travel_time[{k}][{i}][{j}]: {end} shares no mode with {k}",
                    )
                travel[k][(i, j)] = t

    return Instance(
        name=doc["name"],
        modes=modes,
        cargo_types=cargos,
        vehicle_types=vts,
        vertices=vertices,
        travel_time=travel,
        integrality=integrality,
    )


def cargos_by(cargos: list[CargoType], name: str) -> CargoType:
    for c in cargos:
        if c.name == name:
            return c
    raise InstanceError(f"unknown cargo {name!r}")


def parse_instance(text: str) -> Instance:
    """Parse instance JSON text; syntax errors report the line."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if text.splitlines() else ""
        raise InstanceError(f"JSON syntax error at line {exc.lineno} col {exc.colno}: {exc.msg}: {line.strip()!r}") from exc
    return from_document(doc)


def load_instance(path: str) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


def _num_out(x: float) -> float | int:
    return int(x) if float(x).is_integer() else x


def to_document(inst: Instance) -> dict[str, Any]:
    """Inverse of :func:`from_document`."""
    verts = []
    for v in inst.vertices:
        d: dict[str, Any] = {"name": v.name, "kind": v.kind, "modes": sorted(v.modes)}
        extra = KIND_FIELD[v.kind]
        if extra == "fleet":
            d["fleet"] = dict(v.fleet)
        elif extra == "transhippable":
            d["transhippable"] = sorted(v.transhippable)
        else:
            d[extra] = {c: _num_out(q) for c, q in getattr(v, extra).items()}
        verts.append(d)
    tt: dict[str, dict[str, dict[str, float]]] = {}
    for k, table in inst.travel_time.items():
        rows: dict[str, dict[str, float]] = {}
        for (i, j), t in table.items():
            rows.setdefault(i, {})[j] = _num_out(t)
        if rows:
            tt[k] = rows
    return {
        "name": inst.name,
        "modes": list(inst.modes),
        "cargo_types": [
            {"name": c.name, "kind": c.kind, "unit_volume": _num_out(c.unit_volume), "unit_weight": _num_out(c.unit_weight)}
            for c in inst.cargo_types
        ],
        "vehicle_types": [
            {
                "name": k.name,
                "modes": sorted(k.modes),
                "volume_cap": _num_out(k.volume_cap),
                "weight_cap": _num_out(k.weight_cap),
                "open_trip": k.open_trip,
                "compatible_cargos": sorted(k.compatible_cargos),
                "load_unload_time": {c: _num_out(k.load_unload_time[c]) for c in sorted(k.load_unload_time)},
            }
            for k in inst.vehicle_types
        ],
        "vertices": verts,
        "travel_time": tt,
        "integrality": inst.integrality,
    }


def dump_instance(inst: Instance) -> str:
    return json.dumps(to_document(inst), indent=2)


# sanity checks -------------------------------------------------------------


def _demand_fits_some_vehicle(inst: Instance, node: Vertex) -> bool:
    for k in inst.vehicle_types:
        if node.name not in inst.accessible_set(k.name):
            continue
        if not all(c in k.compatible_cargos for c, q in node.demand.items() if q > 0):
            continue
        if inst.fits(k.name, {c: q for c, q in node.demand.items() if q > 0}):
            return True
    return False


def validate_instance(inst: Instance) -> list[Issue]:
    """Report feasibility preconditions that an instance visibly breaks."""
    issues: list[Issue] = []
    served = {c for k in inst.vehicle_types for c in k.compatible_cargos}
    for d in inst.of_kind(DEPOT):
        for vt, cnt in d.fleet.items():
            if cnt > 0 and not (inst.vt(vt).modes & d.modes):
                issues.append(Issue("fleet_mode_mismatch", d.name, f"{vt} shares no mode with its depot"))
    for v in inst.vertices:
        for fld in ("stock", "capacity", "demand"):
            for c, q in getattr(v, fld).items():
                if q < 0:
                    issues.append(Issue("negative_quantity", v.name, f"{fld}[{c}]={q}"))
                if inst.integer and not float(q).is_integer():
                    issues.append(Issue("non_integer_quantity", v.name, f"{fld}[{c}]={q}"))
        if not v.is_node:
            continue
        for c, q in v.demand.items():
            if q > 0 and c not in served:
                issues.append(Issue("orphan cargo demand", v.name, f"no vehicle type carries {c}"))
        if any(q > 0 for q in v.demand.values()) and not inst.vts_at(v.name):
            issues.append(Issue("unreachable demand", v.name, "no vehicle type can reach this node"))
        if v.kind == NODE_SIMULTANEOUS and any(q > 0 for q in v.demand.values()):
            if not _demand_fits_some_vehicle(inst, v):
                issues.append(Issue("no feasible single-trip vehicle", v.name, "combined demand exceeds every compatible vehicle"))
    return issues
