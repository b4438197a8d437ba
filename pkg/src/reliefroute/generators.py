"""Seeded random instances for tests, benchmarks and the acceptance run.

Travel times are Euclidean distances over random points divided by a
per-type speed, so they obey the triangle inequality.
"""

from __future__ import annotations

import math

import numpy as np

from .instance import Instance, from_document


def _xy(rng: np.random.Generator, names: list[str], scale: float, offset=(0.0, 0.0)) -> dict[str, tuple[float, float]]:
    return {n: (offset[0] + float(rng.uniform(0, scale)), offset[1] + float(rng.uniform(0, scale))) for n in names}


def _table(pos: dict[str, tuple[float, float]], names: list[str], speed: float) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for i in names:
        for j in names:
            if i != j:
                d = math.dist(pos[i], pos[j]) / speed
                out.setdefault(i, {})[j] = d
    return out


def tiny_instance(seed: int, integer: bool = True) -> Instance:
    """Port-free instance within the brute-force oracle limits.

    One mode, one depot, one or two vehicles, at most four task vertices.
    Loading times are small against travel times.
    """
    rng = np.random.default_rng([7, seed])
    cargos = [{"name": "1D", "kind": "delivery", "unit_volume": 1, "unit_weight": 1}]
    with_pickup = bool(rng.random() < 0.35)
    if with_pickup:
        cargos.append({"name": "1P", "kind": "pickup", "unit_volume": 1, "unit_weight": 1})
    names = [c["name"] for c in cargos]
    n_vehicles = int(rng.integers(1, 3))
    two_types = n_vehicles == 2 and bool(rng.random() < 0.5)
    vts = []
    for k in range(2 if two_types else 1):
        cap = int(rng.integers(18, 31))
        vts.append(
            {
                "name": f"VT{k + 1}",
                "modes": ["Road"],
                "volume_cap": cap,
                "weight_cap": cap + int(rng.integers(0, 10)),
                "open_trip": bool(rng.random() < 0.3),
                "compatible_cargos": names,
                "load_unload_time": {c: round(float(rng.uniform(0.05, 0.4)), 2) for c in names},
            }
        )
    fleet = {vts[0]["name"]: 2 if (n_vehicles == 2 and not two_types) else 1}
    if two_types:
        fleet[vts[1]["name"]] = 1
    vertices = [{"name": "VD1", "kind": "vehicle_depot", "modes": ["Road"], "fleet": fleet}]
    n_nodes = 2 if with_pickup else int(rng.integers(1, 4))
    demand_total = 0
    node_names = []
    for n in range(n_nodes):
        simultaneous = bool(rng.random() < 0.3)
        demand = {"1D": int(rng.integers(2, 11))}
        if with_pickup and (n == 0 or rng.random() < 0.5):
            demand["1P"] = int(rng.integers(2, 9))
        if not simultaneous and with_pickup and n == 1 and rng.random() < 0.5:
            demand = {"1P": int(rng.integers(2, 9))}
        demand_total += demand.get("1D", 0)
        kind = "node_simultaneous" if simultaneous else "node_split"
        name = f"N{'M' if simultaneous else 'P'}{n + 1}"
        node_names.append(name)
        vertices.append({"name": name, "kind": kind, "modes": ["Road"], "demand": demand})
    vertices.append({"name": "WH1", "kind": "warehouse", "modes": ["Road"], "stock": {"1D": demand_total + int(rng.integers(0, 6))}})
    if with_pickup:
        pick = sum(v["demand"].get("1P", 0) for v in vertices if "demand" in v)
        vertices.append({"name": "RC1", "kind": "relief_centre", "modes": ["Road"], "capacity": {"1P": pick + int(rng.integers(0, 6))}})
    all_names = [v["name"] for v in vertices]
    pos = _xy(rng, all_names, 100.0)
    travel = {vt["name"]: _table(pos, all_names, float(rng.uniform(0.8, 1.5))) for vt in vts}
    doc = {
        "name": f"tiny-{seed}",
        "modes": ["Road"],
        "cargo_types": cargos,
        "vehicle_types": vts,
        "vertices": vertices,
        "travel_time": travel,
        "integrality": "integer" if integer else "continuous",
    }
    return from_document(doc)


def small_instance(seed: int, ports: int | None = None, integer: bool = True) -> Instance:
    """Two road segments joined by up to three ports.

    Segment A holds the warehouses and the relief centre; segment B has
    nodes and sometimes its own warehouse, so deliveries there usually need
    a transhipment.  At most 4 vehicle types and 12 vertices.
    """
    rng = np.random.default_rng([11, seed])
    n_ports = int(rng.integers(0, 4)) if ports is None else ports
    modes = ["RoadA", "RoadB"] if n_ports else ["RoadA"]
    cargos = [
        {"name": "1D", "kind": "delivery", "unit_volume": 1, "unit_weight": 2},
        {"name": "2D", "kind": "delivery", "unit_volume": 2, "unit_weight": 1},
        {"name": "1P", "kind": "pickup", "unit_volume": 1, "unit_weight": 1},
    ]
    names = [c["name"] for c in cargos]
    vts = []
    seg_of_vt = {}
    n_vt = int(rng.integers(2, 5)) if n_ports else int(rng.integers(1, 3))
    for k in range(n_vt):
        seg = modes[k % len(modes)]
        cap = int(rng.integers(40, 81))
        vts.append(
            {
                "name": f"VT{k + 1}",
                "modes": [seg],
                "volume_cap": cap,
                "weight_cap": cap + 20,
                "open_trip": bool(rng.random() < 0.25),
                "compatible_cargos": names,
                "load_unload_time": {c: round(float(rng.uniform(0.05, 0.5)), 2) for c in names},
            }
        )
        seg_of_vt[vts[-1]["name"]] = seg
    vertices = []
    for seg in modes:
        fleet = {vt["name"]: int(rng.integers(1, 3)) for vt in vts if seg_of_vt[vt["name"]] == seg}
        vertices.append({"name": f"VD_{seg}", "kind": "vehicle_depot", "modes": [seg], "fleet": fleet})
    nodes_a = int(rng.integers(1, 3))
    nodes_b = int(rng.integers(1, 3)) if n_ports else 0
    demand = {c: 0 for c in names}
    seq = 0
    for seg, count in (("RoadA", nodes_a), ("RoadB", nodes_b)):
        for _ in range(count):
            seq += 1
            simultaneous = bool(rng.random() < 0.3)
            d = {"1D": int(rng.integers(1, 13)), "2D": int(rng.integers(0, 8)), "1P": int(rng.integers(0, 9))}
            d = {c: q for c, q in d.items() if q > 0}
            for c, q in d.items():
                demand[c] += q
            kind = "node_simultaneous" if simultaneous else "node_split"
            vertices.append({"name": f"N{'M' if simultaneous else 'P'}{seq}", "kind": kind, "modes": [seg], "demand": d})
    vertices.append(
        {"name": "WH1", "kind": "warehouse", "modes": ["RoadA"], "stock": {"1D": demand["1D"] + 5, "2D": demand["2D"] + 5}}
    )
    vertices.append({"name": "RC1", "kind": "relief_centre", "modes": ["RoadA"], "capacity": {"1P": demand["1P"] + 5}})
    for p in range(n_ports):
        vertices.append({"name": f"TP{p + 1}", "kind": "transhipment_port", "modes": ["RoadA", "RoadB"], "transhippable": names})
    all_names = [v["name"] for v in vertices]
    pos = _xy(rng, all_names, 100.0)
    for v in vertices:
        if v["modes"] == ["RoadB"]:
            x, y = pos[v["name"]]
            pos[v["name"]] = (x + 80.0, y)
    travel = {}
    for vt in vts:
        seg = seg_of_vt[vt["name"]]
        reach = [v["name"] for v in vertices if seg in v["modes"]]
        travel[vt["name"]] = _table(pos, reach, float(rng.uniform(0.8, 1.6)))
    doc = {
        "name": f"small-{seed}",
        "modes": modes,
        "cargo_types": cargos,
        "vehicle_types": vts,
        "vertices": vertices,
        "travel_time": travel,
        "integrality": "integer" if integer else "continuous",
    }
    return from_document(doc)
