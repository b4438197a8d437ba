"""Main iterations, pipeline passes and the overall solve loop."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dts import GlobalHyperParams, Stocks, build_dts
from .instance import NODE_KINDS, NODE_SIMULTANEOUS, PORT, Instance
from .integration import enumerate_logics, integrate_sre, order_sres, shuffle_logics
from .perturbation import append_return_depots, perturb_cluster
from .routes import RouteCluster
from .sre import CausalityLedger, Generator, Unsatisfiable
from .timing import CausalityImpossible, Deadlock, cascaded_compare, cascaded_key, propagate_times

DEFAULTS = {
    "integer": {"main_iterations": 15, "max_perturbations": 4104, "max_logics": 200},
    "continuous": {"main_iterations": 10, "max_perturbations": 1729, "max_logics": 100},
}


@dataclass
class SolverParams:
    main_iterations: int = 15
    max_perturbations: int = 4104
    max_logics: int = 200
    seed: int = 0
    mode: str | None = None
    always_shuffle: bool = False
    workers: int = 1
    time_limit_secs: float | None = None

    def __post_init__(self) -> None:
        if self.main_iterations < 1:
            raise ValueError("main_iterations must be at least 1")
        if self.max_perturbations < 0:
            raise ValueError("max_perturbations must be non-negative")
        if self.max_logics < 2:
            raise ValueError("max_logics must be at least 2")
        if self.mode not in (None, "integer", "continuous"):
            raise ValueError("mode must be integer or continuous")


@dataclass
class IterationResult:
    iteration: int
    durations: list[float] | None
    solution: dict[str, Any] | None
    flagged: bool = False
    reasons: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def makespan(self) -> float | None:
        return max(self.durations) if self.durations else (0.0 if self.durations is not None else None)

    @property
    def total(self) -> float | None:
        return sum(self.durations) if self.durations is not None else None


@dataclass
class RunReport:
    best_solution: dict[str, Any] | None
    best_durations: list[float] | None
    min_sum_list: list[tuple[float, int]]
    min_sum_solution: dict[str, Any] | None
    iterations: list[IterationResult]
    reasons: list[str] = field(default_factory=list)

    def to_document(self) -> dict[str, Any]:
        return {
            "best_durations": self.best_durations,
            "min_sum_list": [{"sum": s, "iteration": i} for s, i in self.min_sum_list],
            "iterations": [
                {
                    "iteration": r.iteration,
                    "makespan": r.makespan,
                    "sum": r.total,
                    "unsatisfiable": r.flagged,
                    "reasons": r.reasons,
                    "wall_time": r.wall_time,
                }
                for r in self.iterations
            ],
            "reasons": self.reasons,
        }


def sample_hyperparams(rng: np.random.Generator) -> GlobalHyperParams:
    coin = lambda: bool(rng.random() < 0.5)  # noqa: E731
    return GlobalHyperParams(
        time_in_denominator=coin(),
        denominator_enabled=coin(),
        degree_affects_multiplier=coin(),
        degree_affects_exponent=coin(),
        transhipment_degree_slider=float(rng.random()),
        transhipment_degree_slider_NP=float(rng.random()),
        full_demand_for_variability=coin(),
        global_transhipment_fathom=coin(),
        full_fathom=coin(),
        transhipment_trip_setting=bool(rng.random() < 0.8),
        shuffle_logics=bool(rng.random() < 0.8),
        degree_score_reduction=float(rng.uniform(-2.0, 8.0)),
        weighted_degree=coin(),
    )


def _with_mode(inst: Instance, mode: str | None) -> Instance:
    if mode is None or mode == inst.integrality:
        return inst
    from dataclasses import replace

    return replace(inst, integrality=mode)


def _num(x: float, integer: bool) -> float | int:
    if integer and float(x).is_integer():
        return int(x)
    return float(x)


def solution_document(
    inst: Instance, cluster: RouteCluster, seed: int, ledger: CausalityLedger | None
) -> dict[str, Any]:
    from .timing import route_duration

    routes = []
    durs = []
    for v in inst.vehicles:
        r = cluster.routes[v]
        d = route_duration(inst, r)
        durs.append(d)
        stops = []
        for s, ids in zip(r.stops, r.list6):
            stops.append(
                {
                    "vertex": s.vertex,
                    "tp_tag": s.tag,
                    "vlc": {c: _num(s.vlc[c], inst.integer) for c in sorted(s.vlc)},
                    "status": {c: _num(s.status[c], inst.integer) for c in sorted(s.status)},
                    "time": {"arrive": s.time.arrive, "load": s.time.load, "wait": s.time.wait, "depart": s.time.depart},
                    "sre_ids": [i for i, _ in ids],
                    "perturbations": s.perturbations,
                }
            )
        routes.append({"vehicle": {"depot": v[0], "type": v[1], "index": v[2]}, "stops": stops, "duration": d})
    used = {s.tag for r in cluster.routes.values() for s in r.stops if s.tag}
    rows = [row for row in ledger.to_list() if row["tag"] in used] if ledger is not None else []
    return {
        "instance": inst.name,
        "seed": seed,
        "objective": {"makespan": max(durs, default=0.0), "sorted_durations": cascaded_key(durs), "sum": sum(durs)},
        "routes": routes,
        "causality": rows,
    }


def dump_solution(doc: dict[str, Any]) -> str:
    return json.dumps(doc, indent=2) + "\n"


def run_main_iteration(inst: Instance, params: SolverParams, iteration: int) -> IterationResult:
    t0 = time.perf_counter()
    inst = _with_mode(inst, params.mode)
    seed = params.seed
    rng = np.random.default_rng([seed, iteration])
    hp = sample_hyperparams(rng)
    if params.always_shuffle:
        hp.shuffle_logics = True

    def flagged(reasons: list[str]) -> IterationResult:
        return IterationResult(iteration, None, None, True, reasons, time.perf_counter() - t0)

    nodes = [v.name for v in inst.of_kind(*NODE_KINDS) if any(q > 0 for q in v.demand.values())]
    trees = {n: build_dts(inst, n, hp, rng) for n in nodes}
    for p in inst.of_kind(PORT):
        trees[p.name] = build_dts(inst, p.name, hp, rng)
    gen = Generator(inst, hp, rng, trees, Stocks(inst), CausalityLedger())
    logics = enumerate_logics(params.max_logics, rng)
    clusters = [RouteCluster.empty(inst, lg, i) for i, lg in enumerate(logics)]

    remaining = list(nodes)
    while remaining:
        size = int(rng.integers(1, len(remaining) + 1))
        pick = set(int(i) for i in rng.choice(len(remaining), size=size, replace=False))
        subset = [n for i, n in enumerate(remaining) if i in pick]
        remaining = [n for i, n in enumerate(remaining) if i not in pick]
        start = gen.next_id
        try:
            gen.generate_split([n for n in subset if inst.vertex(n).kind != NODE_SIMULTANEOUS])
            gen.generate_simultaneous([n for n in subset if inst.vertex(n).kind == NODE_SIMULTANEOUS])
        except Unsatisfiable as e:
            return flagged([str(e)])
        for sid in order_sres(gen.ledger, range(start, gen.next_id), rng):
            sre = gen.sres[sid]
            for n, c in enumerate(clusters):
                if c.alive:
                    crng = np.random.default_rng([seed, iteration, c.index, sid])
                    clusters[n] = integrate_sre(inst, c, sre, crng)
            if not any(c.alive for c in clusters):
                return flagged(["every route cluster failed during integration"])
            if hp.shuffle_logics:
                shuffle_logics(clusters, rng)
        if params.time_limit_secs is not None and time.perf_counter() - t0 > params.time_limit_secs and remaining:
            return flagged(["time limit reached before all nodes were processed"])

    best: RouteCluster | None = None
    best_d: list[float] | None = None
    for c in clusters:
        if not c.alive:
            continue
        append_return_depots(inst, c)
        try:
            propagate_times(inst, c)
        except (Deadlock, CausalityImpossible):
            c.alive = False
            continue
        for r in c.routes.values():
            if not r.recompute_status(inst):
                c.alive = False
        if not c.alive:
            continue
        perturb_cluster(inst, c, params.max_perturbations, np.random.default_rng([seed, iteration, c.index, 0]))
        if not c.alive:
            continue
        d = propagate_times(inst, c)
        if best is None or cascaded_compare(d, best_d) < 0:
            best, best_d = c, d
    if best is None:
        return flagged(["no route cluster survived timing"])
    doc = solution_document(inst, best, seed, gen.ledger)
    return IterationResult(iteration, best_d, doc, False, [], time.perf_counter() - t0)


def _task(args: tuple[Instance, SolverParams, int]) -> IterationResult:
    return run_main_iteration(*args)


def solve(inst: Instance, params: SolverParams) -> RunReport:
    tasks = [(inst, params, i) for i in range(params.main_iterations)]
    if params.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=params.workers) as ex:
            results = list(ex.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    results.sort(key=lambda r: r.iteration)
    best: IterationResult | None = None
    sums: list[tuple[float, int]] = []
    for r in results:
        if r.flagged or r.durations is None:
            continue
        sums.append((r.total, r.iteration))
        if best is None or cascaded_compare(r.durations, best.durations) < 0:
            best = r
    sums.sort()
    by_it = {r.iteration: r for r in results}
    reasons = sorted({x for r in results for x in r.reasons}) if best is None else []
    return RunReport(
        best.solution if best else None,
        cascaded_key(best.durations) if best else None,
        sums,
        by_it[sums[0][1]].solution if sums else None,
        results,
        reasons,
    )
