from __future__ import annotations

import math

import pytest

from reliefroute.dts import GlobalHyperParams
from reliefroute.instance import Instance, from_document

# Vertex roster, segments, fleets and the stock/demand figures quoted in the
# worked example.  Coordinates are placeholders: the published travel times
# are not available, so no duration from the example is asserted.
STUDY_POS = {
    "VD1": (0, 60), "WH1": (10, 70), "NP3": (20, 62), "NM3": (15, 50), "TP1": (30, 55),
    "VD2": (100, 60), "WH2": (110, 70), "RC2": (95, 72), "TP2": (90, 50),
    "VD3": (60, 40),
    "VD4": (60, 0), "TP3": (60, 20), "NP1": (45, 5), "NP2": (75, 5), "NM1": (50, -10),
    "NM2": (70, -10), "RC1": (60, -20),
}
STUDY_MODES = {
    "Road_A": ["VD4", "TP3", "NP1", "NP2", "NM1", "NM2", "RC1"],
    "Road_B": ["VD1", "WH1", "NP3", "NM3", "TP1"],
    "Road_C": ["VD2", "WH2", "RC2", "TP2"],
    "Air_A": ["VD3", "TP1", "TP2", "TP3"],
}
STUDY_VT = {"VT2": "Air_A", "VT3": "Road_A", "VT4": "Road_B", "VT5": "Road_C"}


def study_document() -> dict:
    kinds = {
        "VD": "vehicle_depot", "WH": "warehouse", "RC": "relief_centre",
        "NM": "node_simultaneous", "NP": "node_split", "TP": "transhipment_port",
    }
    extra = {
        "VD1": {"fleet": {"VT4": 1}}, "VD2": {"fleet": {"VT5": 1}},
        "VD3": {"fleet": {"VT2": 2}}, "VD4": {"fleet": {"VT3": 2}},
        "WH1": {"stock": {"1D": 20, "2D": 20}}, "WH2": {"stock": {"1D": 20, "2D": 20}},
        "RC1": {"capacity": {"1P": 50}}, "RC2": {"capacity": {"1P": 30, "2P": 30}},
        "NP1": {"demand": {"1D": 5, "1P": 25}}, "NP2": {"demand": {"1D": 6, "2D": 4}},
        "NM1": {"demand": {"1D": 3, "2D": 2, "1P": 5}}, "NM2": {"demand": {"1P": 20, "1D": 3, "2D": 2}},
        "NP3": {"demand": {"2P": 6, "1D": 11, "2D": 13}}, "NM3": {"demand": {"1D": 4, "2D": 3, "2P": 2}},
        "TP1": {"transhippable": ["1D", "2P"]}, "TP2": {"transhippable": ["1D", "1P", "2D", "2P"]},
        "TP3": {"transhippable": ["1D", "2D"]},
    }
    modes_of = {v: sorted(m for m, vs in STUDY_MODES.items() if v in vs) for v in STUDY_POS}
    vertices = [
        {"name": v, "kind": kinds[v[:2]], "modes": modes_of[v], **extra[v]}
        for v in sorted(STUDY_POS, key=lambda n: (n[:2], n))
    ]
    speed = {"VT2": 2.0, "VT3": 1.0, "VT4": 1.0, "VT5": 1.2}
    travel = {}
    for vt, mode in STUDY_VT.items():
        names = STUDY_MODES[mode]
        travel[vt] = {
            i: {j: round(math.dist(STUDY_POS[i], STUDY_POS[j]) / speed[vt], 3) for j in names if j != i} for i in names
        }
    cargos = ["1D", "1P", "2D", "2P"]
    vts = [
        {"name": "VT2", "modes": ["Air_A"], "volume_cap": 40, "weight_cap": 60, "open_trip": True},
        {"name": "VT3", "modes": ["Road_A"], "volume_cap": 60, "weight_cap": 80, "open_trip": False},
        {"name": "VT4", "modes": ["Road_B"], "volume_cap": 60, "weight_cap": 80, "open_trip": False},
        {"name": "VT5", "modes": ["Road_C"], "volume_cap": 50, "weight_cap": 70, "open_trip": False},
    ]
    for k in vts:
        k["compatible_cargos"] = cargos
        k["load_unload_time"] = {c: 0.2 for c in cargos}
    return {
        "name": "study-roster",
        "modes": list(STUDY_MODES),
        "cargo_types": [
            {"name": "1D", "kind": "delivery", "unit_volume": 1, "unit_weight": 1},
            {"name": "1P", "kind": "pickup", "unit_volume": 1, "unit_weight": 1},
            {"name": "2D", "kind": "delivery", "unit_volume": 1, "unit_weight": 2},
            {"name": "2P", "kind": "pickup", "unit_volume": 1, "unit_weight": 1},
        ],
        "vehicle_types": vts,
        "vertices": vertices,
        "travel_time": travel,
        "integrality": "integer",
    }


@pytest.fixture
def study() -> Instance:
    return from_document(study_document())


def hp(**kw) -> GlobalHyperParams:
    base = dict(
        time_in_denominator=False,
        denominator_enabled=True,
        degree_affects_multiplier=False,
        degree_affects_exponent=False,
        transhipment_degree_slider=0.5,
        transhipment_degree_slider_NP=0.5,
        full_demand_for_variability=False,
        global_transhipment_fathom=False,
        full_fathom=False,
        transhipment_trip_setting=True,
        shuffle_logics=False,
        degree_score_reduction=0.0,
        weighted_degree=True,
    )
    base.update(kw)
    return GlobalHyperParams(**base)


def line_instance(
    vertices: list[dict],
    dist: dict[tuple[str, str], float],
    *,
    cap: float = 30,
    open_trip: bool = False,
    fleet: int = 1,
    load: float = 0.1,
    cargos: tuple[tuple[str, str], ...] = (("1D", "delivery"),),
    integrality: str = "integer",
    extra_vts: list[dict] | None = None,
) -> Instance:
    """One-mode instance with symmetric distances and a depot named VD."""
    names = ["VD"] + [v["name"] for v in vertices]
    table: dict[str, dict[str, float]] = {}
    for (a, b), d in dist.items():
        table.setdefault(a, {})[b] = d
        table.setdefault(b, {})[a] = d
    cnames = [c for c, _ in cargos]
    vts = [
        {
            "name": "VT1", "modes": ["Road"], "volume_cap": cap, "weight_cap": cap, "open_trip": open_trip,
            "compatible_cargos": cnames, "load_unload_time": {c: load for c in cnames},
        }
    ] + (extra_vts or [])
    fleets = {"VT1": fleet}
    fleets.update({k["name"]: 1 for k in extra_vts or []})
    doc = {
        "name": "line",
        "modes": ["Road"],
        "cargo_types": [{"name": c, "kind": k, "unit_volume": 1, "unit_weight": 1} for c, k in cargos],
        "vehicle_types": vts,
        "vertices": [{"name": "VD", "kind": "vehicle_depot", "modes": ["Road"], "fleet": fleets}]
        + [{"modes": ["Road"], **v} for v in vertices],
        "travel_time": {k["name"]: {i: {j: t for j, t in row.items() if j in names} for i, row in table.items()} for k in vts},
        "integrality": integrality,
    }
    return from_document(doc)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
