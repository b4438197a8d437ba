"""Reference oracles: a grid-scan waiting-time oracle and a brute-force exact
solver for tiny port-free instances.

The brute-force oracle enumerates stop sequences per vehicle and, for every
combination, solves the transfer allocation exactly with a small MILP.  The
objective is cascaded: first the largest route duration, then the next one,
and so on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .instance import (
    DELIVERY,
    NODE_KINDS,
    NODE_SIMULTANEOUS,
    PORT,
    RELIEF_CENTRE,
    WAREHOUSE,
    Instance,
    Vehicle,
)

Ramp = tuple[float, float, float]


class OracleInfeasible(RuntimeError):
    pass


class OracleLimitError(ValueError):
    pass


# waiting time ----------------------------------------------------------------


def _deposited(ramps: Sequence[Ramp], t: float, left: bool) -> float:
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


def _start_feasible(ramps, base, q, load, s) -> bool:
    slack = 1e-12 * max(1.0, base + q)
    if load <= 0:
        return base + q <= _deposited(ramps, s, False) + slack
    times = {s, s + load}
    for a, d, _ in ramps:
        for t in (a, a + d):
            if s < t < s + load:
                times.add(t)
    for t in times:
        w = base + q * min(max((t - s) / load, 0.0), 1.0)
        if w > _deposited(ramps, t, False) + slack:
            return False
        if t > s and w > _deposited(ramps, t, True) + slack:
            return False
    return True


def waiting_oracle(
    deposits: dict[str, Sequence[Ramp]],
    bands: dict[str, float],
    arrive: float,
    load: float,
    withdraw: dict[str, float],
    grid: float = 1e-3,
) -> float:
    """Smallest grid wait whose withdrawal never outruns the deposits.

    ``deposits`` maps cargo to ramps ``(start, duration, quantity)``.  The
    withdrawal of every cargo runs linearly over ``[start, start + load]``
    on top of the band ``bands[c]``.  Feasibility is monotone in the start
    time, so the grid is bisected.
    """
    if grid <= 0:
        raise ValueError("grid step must be positive")
    need = {c: q for c, q in withdraw.items() if q > 0}
    horizon = arrive
    for c, q in need.items():
        ramps = list(deposits.get(c, ()))
        total = sum(r[2] for r in ramps)
        if total + 1e-12 < bands.get(c, 0.0) + q:
            raise OracleInfeasible(f"cargo {c}: deposits never reach the requested band")
        if ramps:
            horizon = max(horizon, max(a + d for a, d, _ in ramps))

    def ok(k: int) -> bool:
        s = arrive + k * grid
        return all(
            _start_feasible(list(deposits.get(c, ())), bands.get(c, 0.0), q, load, s) for c, q in need.items()
        )

    hi = int(math.ceil((horizon - arrive) / grid)) + 1
    if not ok(hi):
        raise OracleInfeasible("no feasible start below the horizon")
    lo = 0
    if ok(lo):
        return 0.0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi * grid


# brute force -------------------------------------------------------------------


@dataclass
class OracleResult:
    vector: list[float]
    routes: dict[Vehicle, list[str]]
    vlcs: dict[Vehicle, list[dict[str, float]]]
    durations: dict[Vehicle, float]
    combos_solved: int = 0


@dataclass
class CascadeStep:
    bound: float
    optimum: float
    argmax: Vehicle
    durations: dict[Vehicle, float]


@dataclass
class _Seq:
    stops: tuple[str, ...]
    travel: float


@dataclass
class _Alloc:
    vehicles: list[Vehicle]
    travel: list[float]
    vars: list[tuple[int, int, str, int]] = field(default_factory=list)  # (vehicle idx, stop, cargo, sign)


def _is_metric(inst: Instance, vt: str, names: list[str]) -> bool:
    for i, j, k in itertools.permutations(names, 3):
        if inst.T(vt, i, k) > inst.T(vt, i, j) + inst.T(vt, j, k) + 1e-9:
            return False
    return True


def _task_vertices(inst: Instance) -> list[str]:
    out = []
    for v in inst.vertices:
        if v.kind in NODE_KINDS and any(q > 0 for q in v.demand.values()):
            out.append(v.name)
        elif v.kind in (WAREHOUSE, RELIEF_CENTRE) and any(q > 0 for q in v.resource().values()):
            out.append(v.name)
    return out


def _sequences(inst: Instance, veh: Vehicle, tasks: list[str], max_stops: int) -> list[_Seq]:
    depot, vt, _ = veh
    k = inst.vt(vt)
    acc = inst.accessible_set(vt)
    cand = [t for t in tasks if t in acc and math.isfinite(inst.T(vt, depot, t))]
    kinds = {t: inst.vertex(t).kind for t in cand}

    def useful(seq: tuple[str, ...]) -> bool:
        # in a metric space a visit that cannot transfer anything is never needed
        for n, name in enumerate(seq):
            kind = kinds[name]
            before, after = seq[:n], seq[n + 1 :]
            if kind == WAREHOUSE:
                if not any(kinds[x] in NODE_KINDS for x in after):
                    return False
            elif kind == RELIEF_CENTRE:
                if not any(kinds[x] in NODE_KINDS for x in before):
                    return False
            else:
                dem = inst.vertex(name).demand
                can_drop = any(inst.cargo(c).kind == DELIVERY and q > 0 and c in k.compatible_cargos for c, q in dem.items()) and any(
                    kinds[x] == WAREHOUSE for x in before
                )
                can_pick = any(inst.cargo(c).kind != DELIVERY and q > 0 and c in k.compatible_cargos for c, q in dem.items()) and any(
                    kinds[x] == RELIEF_CENTRE for x in after
                )
                if not (can_drop or can_pick):
                    return False
                if inst.vertex(name).kind == NODE_SIMULTANEOUS and seq.count(name) > 1:
                    return False
        return True

    out = [_Seq((), 0.0)]
    for n in range(1, max_stops + 1):
        for seq in itertools.product(cand, repeat=n):
            if any(a == b for a, b in zip(seq, seq[1:])):
                continue
            if kinds[seq[0]] == RELIEF_CENTRE or kinds[seq[-1]] == WAREHOUSE:
                continue
            if not useful(seq):
                continue
            legs = [depot, *seq] + ([] if k.open_trip else [depot])
            travel = sum(inst.T(vt, a, b) for a, b in zip(legs, legs[1:]))
            if not math.isfinite(travel) or not math.isfinite(inst.T(vt, seq[-1], depot)):
                continue
            out.append(_Seq(seq, travel))
    return out


class _Model:
    """Transfer allocation for a fixed set of stop sequences."""

    def __init__(self, inst: Instance, vehicles: list[Vehicle], seqs: list[_Seq]):
        self.inst = inst
        self.vehicles = vehicles
        self.seqs = seqs
        self.vars: list[tuple[int, int, str, int]] = []
        for vi, (veh, sq) in enumerate(zip(vehicles, seqs)):
            k = inst.vt(veh[1])
            for p, name in enumerate(sq.stops):
                vx = inst.vertex(name)
                if vx.kind == WAREHOUSE:
                    for c, q in vx.stock.items():
                        if q > 0 and c in k.compatible_cargos:
                            self.vars.append((vi, p, c, 1))
                elif vx.kind == RELIEF_CENTRE:
                    for c, q in vx.capacity.items():
                        if q > 0 and c in k.compatible_cargos:
                            self.vars.append((vi, p, c, -1))
                else:
                    for c, q in vx.demand.items():
                        if q > 0 and c in k.compatible_cargos:
                            self.vars.append((vi, p, c, -1 if inst.cargo(c).kind == DELIVERY else 1))
        self.nx = len(self.vars)
        rows, lo, hi = [], [], []

        def row() -> np.ndarray:
            return np.zeros(self.nx + 1)

        for vi, (veh, sq) in enumerate(zip(vehicles, seqs)):
            k = inst.vt(veh[1])
            mine = [(n, v) for n, v in enumerate(self.vars) if v[0] == vi]
            cargos = sorted({v[2] for _, v in mine})
            for p in range(len(sq.stops)):
                vol, wt = row(), row()
                for c in cargos:
                    r = row()
                    for n, (_, pp, cc, sg) in mine:
                        if cc == c and pp <= p:
                            r[n] = sg
                            vol[n] = sg * inst.cargo(c).unit_volume
                            wt[n] = sg * inst.cargo(c).unit_weight
                    rows.append(r), lo.append(0.0), hi.append(np.inf)
                rows.append(vol), lo.append(-np.inf), hi.append(k.volume_cap)
                rows.append(wt), lo.append(-np.inf), hi.append(k.weight_cap)
            for c in cargos:
                r = row()
                for n, (_, _, cc, sg) in mine:
                    if cc == c:
                        r[n] = sg
                rows.append(r), lo.append(0.0), hi.append(0.0)
        for vx in inst.vertices:
            if vx.kind in (WAREHOUSE, RELIEF_CENTRE):
                for c, q in vx.resource().items():
                    r = row()
                    for n, (vi, p, cc, _) in enumerate(self.vars):
                        if cc == c and seqs[vi].stops[p] == vx.name:
                            r[n] = 1
                    if r.any():
                        rows.append(r), lo.append(-np.inf), hi.append(q)
            elif vx.kind in NODE_KINDS:
                for c, q in vx.demand.items():
                    if q <= 0:
                        continue
                    r = row()
                    for n, (vi, p, cc, _) in enumerate(self.vars):
                        if cc == c and seqs[vi].stops[p] == vx.name:
                            r[n] = 1
                    rows.append(r), lo.append(q), hi.append(np.inf)
        self.dur_rows = []
        for vi, veh in enumerate(vehicles):
            u = inst.vt(veh[1]).load_unload_time
            r = row()
            for n, (vv, _, c, _) in enumerate(self.vars):
                if vv == vi:
                    r[n] = u.get(c, 0.0)
            self.dur_rows.append(r)
        self.A = np.array(rows) if rows else np.zeros((0, self.nx + 1))
        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.integral = np.array([1] * self.nx + [0]) if inst.integer else np.zeros(self.nx + 1)

    def solve(self, objective: np.ndarray, extra: list[tuple[np.ndarray, float, float]]):
        A, lo, hi = self.A, self.lo, self.hi
        if extra:
            A = np.vstack([A] + [e[0] for e in extra])
            lo = np.concatenate([lo, [e[1] for e in extra]])
            hi = np.concatenate([hi, [e[2] for e in extra]])
        cons = [LinearConstraint(A, lo, hi)] if len(A) else []
        res = milp(
            objective,
            constraints=cons,
            integrality=self.integral,
            bounds=Bounds(np.zeros(self.nx + 1), np.full(self.nx + 1, np.inf)),
            options={"mip_rel_gap": 0.0, "presolve": True},
        )
        if res.status != 0 or res.x is None:
            return None
        return res

    def minmax(self, fixed: set[int], bound: float | None):
        """Minimise the largest duration among unfixed vehicles."""
        obj = np.zeros(self.nx + 1)
        obj[-1] = 1.0
        extra = []
        for vi, r in enumerate(self.dur_rows):
            travel = self.seqs[vi].travel
            if vi not in fixed:
                rr = r.copy()
                rr[-1] = -1.0
                extra.append((rr, -np.inf, -travel))
            if bound is not None:
                extra.append((r, -np.inf, bound - travel))
        res = self.solve(obj, extra)
        if res is None:
            return None
        return res.x

    def durations(self, x: np.ndarray) -> list[float]:
        return [self.seqs[vi].travel + float(r @ x) for vi, r in enumerate(self.dur_rows)]

    def second(self, z1: float) -> tuple[float, np.ndarray] | None:
        best = None
        for vi, r in enumerate(self.dur_rows):
            extra = [(rr, -np.inf, z1 - self.seqs[w].travel) for w, rr in enumerate(self.dur_rows)]
            res = self.solve(r.copy(), extra)
            if res is None:
                continue
            val = self.seqs[vi].travel + float(res.fun)
            if best is None or val < best[0]:
                best = (val, res.x)
        return best

    def vlcs(self, x: np.ndarray) -> list[list[dict[str, float]]]:
        out = [[{} for _ in sq.stops] for sq in self.seqs]
        for n, (vi, p, c, sg) in enumerate(self.vars):
            q = float(round(x[n])) if self.inst.integer else float(x[n])
            if abs(q) > 1e-9:
                out[vi][p][c] = sg * q
        return out


def _check_limits(inst: Instance, max_vehicles: int, max_tasks: int) -> list[str]:
    if inst.of_kind(PORT):
        raise OracleLimitError("the brute-force oracle handles port-free instances only")
    if len(inst.vehicles) > max_vehicles:
        raise OracleLimitError(f"{len(inst.vehicles)} vehicles exceed the limit of {max_vehicles}")
    tasks = _task_vertices(inst)
    if len(tasks) > max_tasks:
        raise OracleLimitError(f"{len(tasks)} task vertices exceed the limit of {max_tasks}")
    for k in inst.vehicle_types:
        names = sorted(inst.accessible_set(k.name)) + inst.depots_for(k.name)
        if not _is_metric(inst, k.name, names):
            raise OracleLimitError(f"travel times of {k.name} violate the triangle inequality")
    return tasks


def _combos(inst: Instance, tasks: list[str], max_stops: int):
    vehicles = list(inst.vehicles)
    per = [_sequences(inst, v, tasks, max_stops) for v in vehicles]
    needed = {t for t in tasks if inst.vertex(t).kind in NODE_KINDS}
    simult = {t for t in needed if inst.vertex(t).kind == NODE_SIMULTANEOUS}
    out = []
    for combo in itertools.product(*per):
        seen = set()
        for sq in combo:
            seen.update(sq.stops)
        if not needed <= seen:
            continue
        if simult and any(sum(sq.stops.count(s) for sq in combo) != 1 for s in simult):
            continue
        out.append(combo)
    return vehicles, out


def brute_force_oracle(
    inst: Instance,
    max_stops: int = 5,
    max_vehicles: int = 2,
    max_tasks: int = 4,
    order_seed: int | None = None,
) -> OracleResult:
    """Exact cascaded optimum for tiny port-free instances.

    Requires travel times obeying the triangle inequality (checked), which
    makes dropping idle visits safe.  ``order_seed`` permutes the enumeration
    order; the optimum must not depend on it.
    """
    if max_vehicles > 2:
        raise OracleLimitError("the cascaded objective is computed for at most 2 vehicles")
    tasks = _check_limits(inst, max_vehicles, max_tasks)
    vehicles, combos = _combos(inst, tasks, max_stops)

    def lb(combo):
        return sorted((sq.travel for sq in combo), reverse=True)

    if order_seed is not None:
        rng = np.random.default_rng(order_seed)
        combos = [combos[i] for i in rng.permutation(len(combos))]
    combos.sort(key=lb)
    best_vec: list[float] | None = None
    best = None
    solved = 0
    for combo in combos:
        if best_vec is not None and _lex_le(best_vec, lb(combo)):
            break
        model = _Model(inst, vehicles, list(combo))
        x = model.minmax(set(), None)
        solved += 1
        if x is None:
            continue
        z1 = max(model.durations(x))
        if best_vec is not None and z1 > best_vec[0] + 1e-9:
            continue
        if len(vehicles) == 2:
            sec = model.second(z1 + 1e-9)
            if sec is None:
                continue
            x = sec[1]
        vec = sorted(model.durations(x), reverse=True)
        if best_vec is None or _lex_lt(vec, best_vec):
            best_vec, best = vec, (model, x)
    if best is None:
        raise OracleInfeasible("no feasible combination of routes within the stop limit")
    model, x = best
    vl = model.vlcs(x)
    durs = model.durations(x)
    return OracleResult(
        vector=best_vec,
        routes={v: list(model.seqs[i].stops) for i, v in enumerate(vehicles)},
        vlcs={v: vl[i] for i, v in enumerate(vehicles)},
        durations={v: durs[i] for i, v in enumerate(vehicles)},
        combos_solved=solved,
    )


def oracle_cascade(inst: Instance, max_stops: int = 5, max_vehicles: int = 2, max_tasks: int = 4) -> list[CascadeStep]:
    """Stepwise cascade: minimise the largest unfixed duration, bound every
    vehicle by that optimum, fix the argmax vehicle, repeat."""
    tasks = _check_limits(inst, max_vehicles, max_tasks)
    vehicles, combos = _combos(inst, tasks, max_stops)
    fixed: set[int] = set()
    bound: float | None = None
    steps: list[CascadeStep] = []
    while len(fixed) < len(vehicles):
        def lb(combo):
            return max((sq.travel for i, sq in enumerate(combo) if i not in fixed), default=0.0)

        order = sorted(combos, key=lb)
        best = None
        for combo in order:
            if best is not None and lb(combo) >= best[0] - 1e-12:
                break
            if bound is not None and any(sq.travel > bound + 1e-9 for sq in combo):
                continue
            model = _Model(inst, vehicles, list(combo))
            x = model.minmax(fixed, None if bound is None else bound + 1e-9)
            if x is None:
                continue
            d = model.durations(x)
            val = max(d[i] for i in range(len(vehicles)) if i not in fixed)
            if best is None or val < best[0] - 1e-12:
                best = (val, d)
        if best is None:
            raise OracleInfeasible("cascade step has no feasible solution")
        val, d = best
        arg = min((i for i in range(len(vehicles)) if i not in fixed), key=lambda i: (-d[i], i))
        steps.append(CascadeStep(bound if bound is not None else math.inf, val, vehicles[arg], dict(zip(vehicles, d))))
        fixed.add(arg)
        bound = val
    return steps


def _lex_lt(a: Sequence[float], b: Sequence[float], tol: float = 1e-9) -> bool:
    for x, y in zip(a, b):
        if x < y - tol:
            return True
        if x > y + tol:
            return False
    return False


def _lex_le(a: Sequence[float], b: Sequence[float], tol: float = 1e-9) -> bool:
    return not _lex_lt(b, a, tol)
