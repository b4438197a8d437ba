"""Route6 and RouteCluster containers shared by integration, timing and perturbation.

A Route6 keeps the six aligned lists of a vehicle route.  Internally each
column is a :class:`Stop`; the ``list1`` ... ``list6`` properties expose the
column-wise view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .instance import Instance, Vehicle

EPS = 1e-9


@dataclass
class TimeTuple:
    arrive: float = 0.0
    load: float = 0.0
    wait: float = 0.0
    depart: float = 0.0


@dataclass
class Stop:
    vertex: str
    tag: str | None = None
    vlc: dict[str, float] = field(default_factory=dict)
    status: dict[str, float] = field(default_factory=dict)
    time: TimeTuple = field(default_factory=TimeTuple)
    sre: tuple[int, int] | None = None  # (sre id, segment 1/2/3)
    perturbations: int = 0
    sources: tuple[tuple[int, int], ...] = ()  # filled only by compaction

    def copy(self) -> "Stop":
        t = self.time
        return Stop(
            self.vertex, self.tag, dict(self.vlc), dict(self.status),
            TimeTuple(t.arrive, t.load, t.wait, t.depart), self.sre, self.perturbations, self.sources,
        )

    @property
    def is_withdrawal(self) -> bool:
        return self.tag is not None and any(q > 0 for q in self.vlc.values())

    @property
    def is_deposit(self) -> bool:
        return self.tag is not None and any(q < 0 for q in self.vlc.values())


@dataclass
class Route6:
    vehicle: Vehicle
    stops: list[Stop]

    @classmethod
    def empty(cls, vehicle: Vehicle) -> "Route6":
        return cls(vehicle, [Stop(vehicle[0])])

    @property
    def vt(self) -> str:
        return self.vehicle[1]

    @property
    def depot(self) -> str:
        return self.vehicle[0]

    def __len__(self) -> int:
        return len(self.stops)

    @property
    def list1(self) -> list[str]:
        return [s.vertex for s in self.stops]

    @property
    def list2(self) -> list[int]:
        return [s.perturbations for s in self.stops]

    @property
    def list3(self) -> list[dict[str, float]]:
        return [s.vlc for s in self.stops]

    @property
    def list4(self) -> list[dict[str, float]]:
        return [s.status for s in self.stops]

    @property
    def list5(self) -> list[TimeTuple]:
        return [s.time for s in self.stops]

    @property
    def list6(self) -> list[tuple[tuple[int, int], ...]]:
        return [s.sources or ((s.sre,) if s.sre else ()) for s in self.stops]

    def has_return(self) -> bool:
        return len(self.stops) > 1 and self.stops[-1].vertex == self.depot and self.stops[-1].sre is None

    def body_end(self) -> int:
        """Index one past the last task column (return depot excluded)."""
        return len(self.stops) - 1 if self.has_return() else len(self.stops)

    def recompute_status(self, inst: Instance) -> bool:
        """Refresh cumulative loads; False on a negative load or capacity breach."""
        return status_ok(inst, self.vt, self.stops, write=True)

    def copy(self) -> "Route6":
        return Route6(self.vehicle, [s.copy() for s in self.stops])


def status_ok(inst: Instance, vt: str, stops: list[Stop], write: bool = False) -> bool:
    load: dict[str, float] = {}
    ok = True
    for s in stops:
        for c, q in s.vlc.items():
            load[c] = load.get(c, 0.0) + q
            if abs(load[c]) <= EPS:
                load[c] = 0.0
        if write:
            s.status = {c: q for c, q in load.items() if q != 0.0}
        if any(q < -EPS for q in load.values()) or not inst.fits(vt, load):
            ok = False
            if not write:
                return False
    return ok


def first_breach(inst: Instance, vt: str, stops: list[Stop]) -> int | None:
    """Index of the first column whose cumulative load is invalid."""
    load: dict[str, float] = {}
    for n, s in enumerate(stops):
        for c, q in s.vlc.items():
            load[c] = load.get(c, 0.0) + q
        if any(q < -EPS for q in load.values()) or not inst.fits(vt, load):
            return n
    return None


@dataclass
class RouteCluster:
    routes: dict[Vehicle, Route6]
    logic: Any = None
    alive: bool = True
    index: int = 0

    @classmethod
    def empty(cls, inst: Instance, logic: Any = None, index: int = 0) -> "RouteCluster":
        return cls({v: Route6.empty(v) for v in inst.vehicles}, logic, True, index)

    def copy(self) -> "RouteCluster":
        return RouteCluster({v: r.copy() for v, r in self.routes.items()}, self.logic, self.alive, self.index)
