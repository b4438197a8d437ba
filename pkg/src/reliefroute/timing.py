"""Time propagation, waiting times at transhipment ports and cascaded comparison.

Deposits at a port become available linearly while the depositing vehicle
unloads, i.e. over ``[depart - load, depart]``.  A collecting vehicle
withdraws linearly over its own loading window, and its waiting time is the
smallest delay keeping the withdrawal line under the cumulative deposit
curve.  Earlier collections of the same port tag occupy lower bands of that
curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .instance import PORT, Instance
from .routes import EPS, Route6, RouteCluster

Ramp = tuple[float, float, float]  # (start, duration, quantity)


class Deadlock(RuntimeError):
    """No route could advance its timing during a full pass."""


class CausalityImpossible(RuntimeError):
    """Deposits at a tag can never cover the requested withdrawal."""


@dataclass(frozen=True)
class DepositEnvelope:
    """Cumulative deposit curve as polyline points ``(time, level)``.

    Vertical jumps (instantaneous deposits) appear as two points sharing a
    time.  Before the first point the level is 0; after the last it stays at
    ``total``.
    """

    points: tuple[tuple[float, float], ...]

    @property
    def total(self) -> float:
        return self.points[-1][1] if self.points else 0.0

    def level_at(self, t: float) -> float:
        """Right-continuous cumulative deposit D(t)."""
        pts = self.points
        if not pts or t < pts[0][0]:
            return 0.0
        k = max(n for n, (tn, _) in enumerate(pts) if tn <= t)
        if k == len(pts) - 1:
            return pts[-1][1]
        (ta, ya), (tb, yb) = pts[k], pts[k + 1]
        return ya + (yb - ya) * (t - ta) / (tb - ta)

    def earliest(self, y: float) -> float:
        """E(y): first time the curve reaches level ``y``."""
        pts = self.points
        if y <= 0:
            return -math.inf
        if not pts or y > self.total + EPS:
            return math.inf
        y = min(y, self.total)
        for (ta, ya), (tb, yb) in zip(pts, pts[1:]):
            if yb >= y:
                if ya >= y or tb == ta:
                    return ta
                return ta + (y - ya) * (tb - ta) / (yb - ya)
        return pts[-1][0]

    def earliest_above(self, y: float) -> float:
        """E+(y): infimum of times at which the curve exceeds ``y``."""
        pts = self.points
        if not pts or y >= self.total:
            return math.inf
        if pts[0][1] > y:
            return pts[0][0]
        for (ta, ya), (tb, yb) in zip(pts, pts[1:]):
            if yb > y:
                if tb == ta or ya > y:
                    return ta
                return ta + (y - ya) * (tb - ta) / (yb - ya)
        return math.inf


def deposit_envelope(ramps: Iterable[Ramp]) -> DepositEnvelope:
    """Build the cumulative deposit curve of a set of unloading ramps.

    Each ramp ``(start, duration, q)`` adds ``q`` linearly over
    ``[start, start + duration]``.  For ramps that do not overlap in time this
    is the stack of ramps in arrival order; overlapping ramps add up.
    """
    ramps = [(s, max(d, 0.0), q) for s, d, q in ramps if q > 0]
    if not ramps:
        return DepositEnvelope(())
    times = sorted({s for s, _, _ in ramps} | {s + d for s, d, _ in ramps})

    def level(t: float, left: bool) -> float:
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

    pts: list[tuple[float, float]] = []
    for t in times:
        lo, hi = level(t, True), level(t, False)
        pts.append((t, lo))
        if hi > lo:
            pts.append((t, hi))
    return DepositEnvelope(tuple(pts))


def critical_start(env: DepositEnvelope, base: float, q: float, load: float) -> float:
    """Earliest start of a withdrawal of ``q`` above band ``base``.

    The withdrawal line reaches level ``y`` at ``s + (y - base) * load / q``
    and may never be ahead of the deposit curve.
    """
    if q <= 0:
        return -math.inf
    if env.total + EPS < base + q:
        raise CausalityImpossible(f"deposits {env.total} cannot cover band [{base}, {base + q}]")
    rate = load / q
    best = max(env.earliest_above(base), env.earliest(base + q) - load)
    for _, y in env.points:
        if base < y < base + q:
            e = env.earliest_above(y)
            if math.isfinite(e):
                best = max(best, e - (y - base) * rate)
    return best


def waiting_time(
    envelopes: dict[str, DepositEnvelope],
    bands: dict[str, float],
    arrive: float,
    load: float,
    withdraw: dict[str, float],
) -> float:
    """Minimal wait before a port collection may start."""
    start = -math.inf
    for c, q in withdraw.items():
        if q <= 0:
            continue
        env = envelopes.get(c, DepositEnvelope(()))
        start = max(start, critical_start(env, bands.get(c, 0.0), q, load))
    return max(0.0, start - arrive)


def route_duration(inst: Instance, route: Route6) -> float:
    """Closed trips end on arrival back at the depot; open trips at the last departure."""
    if len(route.stops) <= 1:
        return 0.0
    vt = inst.vt(route.vt)
    last = route.stops[-1]
    if vt.open_trip:
        return last.time.depart
    if route.has_return():
        return last.time.arrive
    return last.time.depart + inst.T(route.vt, last.vertex, route.depot)


def durations(inst: Instance, cluster: RouteCluster) -> list[float]:
    return [route_duration(inst, r) for r in cluster.routes.values()]


def _tag_index(cluster: RouteCluster):
    deposits: dict[str, list[tuple]] = {}
    for v, r in cluster.routes.items():
        for n, s in enumerate(r.stops):
            if s.is_deposit:
                deposits.setdefault(s.tag, []).append((v, n))
    return deposits


def propagate_times(inst: Instance, cluster: RouteCluster, waiting: bool = True) -> list[float]:
    """Time every column of every route; returns route durations.

    A collecting port visit pauses its route until every deposit under the
    same tag is timed.  Raises :class:`Deadlock` if a full pass makes no
    progress and :class:`CausalityImpossible` if deposits fall short.
    """
    deposits = _tag_index(cluster) if waiting else {}
    timed: set[tuple] = set()
    bands: dict[tuple[str, str], float] = {}
    nxt: dict = {}
    for v, r in cluster.routes.items():
        head = r.stops[0]
        head.time.arrive = head.time.load = head.time.wait = head.time.depart = 0.0
        timed.add((v, 0))
        nxt[v] = 1
    pending = [v for v, r in cluster.routes.items() if len(r.stops) > 1]
    while pending:
        progress = False
        still = []
        for v in pending:
            r = cluster.routes[v]
            n = nxt[v]
            while n < len(r.stops):
                s = r.stops[n]
                prev = r.stops[n - 1]
                t = inst.T(r.vt, prev.vertex, s.vertex)
                if math.isinf(t):
                    raise Deadlock(f"{s.vertex} unreachable from {prev.vertex} for {r.vt}")
                arrive = prev.time.depart + t
                load = inst.load_time(r.vt, s.vlc)
                wait = 0.0
                if waiting and s.is_withdrawal:
                    deps = deposits.get(s.tag, [])
                    if any(d not in timed for d in deps):
                        break
                    wait = _visit_wait(inst, cluster, s, deps, bands, arrive, load)
                s.time.arrive = arrive
                s.time.load = load
                s.time.wait = wait
                s.time.depart = arrive + wait + load
                if waiting and s.is_withdrawal:
                    for c, q in s.vlc.items():
                        if q > 0:
                            bands[(s.tag, c)] = bands.get((s.tag, c), 0.0) + q
                timed.add((v, n))
                n += 1
                progress = True
            nxt[v] = n
            if n < len(r.stops):
                still.append(v)
        if still and not progress:
            raise Deadlock("no route could advance its timing")
        pending = still
    return durations(inst, cluster)


def _visit_wait(inst, cluster, stop, deps, bands, arrive, load) -> float:
    envs = {}
    for c, q in stop.vlc.items():
        if q <= 0:
            continue
        ramps = []
        for v, n in deps:
            d = cluster.routes[v].stops[n]
            dq = -d.vlc.get(c, 0.0)
            if dq > 0:
                ramps.append((d.time.depart - d.time.load, d.time.load, dq))
        envs[c] = deposit_envelope(ramps)
    base = {c: bands.get((stop.tag, c), 0.0) for c in envs}
    return waiting_time(envs, base, arrive, load, {c: q for c, q in stop.vlc.items() if q > 0})


def cascaded_key(durs: Sequence[float], width: int | None = None) -> list[float]:
    out = sorted(durs, reverse=True)
    if width is not None:
        out += [0.0] * (width - len(out))
    return out


def cascaded_compare(a: Sequence[float], b: Sequence[float], tol: float = EPS) -> int:
    """-1 if ``a`` is cascaded-better, 1 if ``b`` is, 0 when equal."""
    n = max(len(a), len(b))
    ka, kb = cascaded_key(a, n), cascaded_key(b, n)
    for x, y in zip(ka, kb):
        if x < y - tol:
            return -1
        if x > y + tol:
            return 1
    return 0


def is_port(inst: Instance, vertex: str) -> bool:
    return inst.vertex(vertex).kind == PORT
