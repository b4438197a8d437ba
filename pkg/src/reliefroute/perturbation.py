"""Column-shift perturbation of finished route clusters."""

from __future__ import annotations

import numpy as np

from .instance import Instance
from .routes import Route6, RouteCluster, Stop, status_ok
from .timing import CausalityImpossible, Deadlock, cascaded_compare, propagate_times


class ImmovableError(ValueError):
    pass


def append_return_depots(inst: Instance, cluster: RouteCluster) -> RouteCluster:
    for route in cluster.routes.values():
        if len(route.stops) <= 1 or route.has_return() or inst.vt(route.vt).open_trip:
            continue
        route.stops.append(Stop(route.depot))
    return cluster


def budget_shares(cluster: RouteCluster, total: int) -> dict:
    lengths = {v: len(r.stops) for v, r in cluster.routes.items()}
    s = sum(lengths.values())
    if s == 0:
        return {v: 0 for v in lengths}
    return {v: int(round(total * n / s)) for v, n in lengths.items()}


def position_bounds(route: Route6, pos: int) -> tuple[int, int]:
    """Window of target indices keeping the column's SRE segments in order."""
    end = route.body_end()
    if pos <= 0 or pos >= end:
        raise ImmovableError(f"position {pos} cannot move")
    me = route.stops[pos].sre
    if me is None:
        raise ImmovableError(f"position {pos} has no source element")
    sid, seg = me
    lo, hi = 1, end - 1
    for n, s in enumerate(route.stops[:end]):
        if n == pos or s.sre is None or s.sre[0] != sid:
            continue
        if s.sre[1] < seg:
            lo = max(lo, n + 1)
        elif s.sre[1] > seg:
            hi = min(hi, n - 1)
    return lo, hi


def _shift(route: Route6, src: int, dst: int) -> None:
    col = route.stops.pop(src)
    route.stops.insert(dst, col)


def perturb_cluster(inst: Instance, cluster: RouteCluster, budget: int, rng: np.random.Generator) -> RouteCluster:
    """Random in-bound column shifts, each kept only on strict improvement."""
    try:
        current = propagate_times(inst, cluster)
    except (Deadlock, CausalityImpossible):
        cluster.alive = False
        return cluster
    shares = budget_shares(cluster, budget)
    for v in list(cluster.routes):
        for _ in range(shares[v]):
            route = cluster.routes[v]
            movable = [n for n in range(1, route.body_end()) if route.stops[n].sre is not None]
            if len(movable) < 1:
                break
            src = movable[int(rng.integers(len(movable)))]
            lo, hi = position_bounds(route, src)
            if hi <= lo and lo == src:
                continue
            dst = int(rng.integers(lo, hi + 1))
            if dst == src:
                continue
            trial = cluster.copy()
            _shift(trial.routes[v], src, dst)
            if not status_ok(inst, route.vt, trial.routes[v].stops):
                continue
            try:
                d = propagate_times(inst, trial)
            except (Deadlock, CausalityImpossible):
                continue
            if cascaded_compare(d, current) < 0:
                trial.routes[v].stops[dst].perturbations += 1
                trial.routes[v].recompute_status(inst)
                cluster.routes = trial.routes
                current = d
    return cluster
