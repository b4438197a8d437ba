"""Layered multi-trip MILP: model construction, LP emission, cascade steps.

Each vehicle ``v = (h, k, u)`` owns levels ``1..L_v``.  Level 1 is the only
one with arcs leaving the depot; every level may return to it.  Inter-level
arcs ``x(v,i,l,m)`` model a repeated visit to ``i`` on the next trip.
Rows are named ``<family>_eq<NN>(<indices>)``; variables ``<fam>(<indices>)``.
Terms on inter-level variables that do not exist at the boundary levels are
dropped, which yields the reduced l=1 / l=L forms automatically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .instance import (
    DEFAULT_BIG_M,
    DELIVERY,
    NODE_KINDS,
    NODE_SIMULTANEOUS,
    PICKUP,
    PORT,
    RELIEF_CENTRE,
    WAREHOUSE,
    Instance,
)

Vehicle = tuple[str, str, int]

DEFAULT_VARIABLE_BUDGET = 250_000
ARR, DEP = "Arr", "Dep"


class ModelTooLarge(ValueError):
    def __init__(self, counts: Mapping[str, int], budget: int) -> None:
        self.counts = dict(counts)
        self.budget = budget
        total = sum(counts.values())
        detail = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
        super().__init__(f"model would declare {total} variables (budget {budget}): {detail}")


class CascadeError(ValueError):
    pass


@dataclass
class Var:
    name: str
    family: str
    lb: float = 0.0
    ub: float = float("inf")
    kind: str = "C"  # C continuous, I general integer, B binary


@dataclass
class Row:
    name: str
    group: str
    terms: dict[str, float]
    sense: str
    rhs: float


@dataclass
class ConstraintSystem:
    inst: Instance
    levels: dict[Vehicle, int]
    big_m: float
    integer: bool
    optional_constraints: bool
    eq625_all_cargo: bool
    variables: dict[str, Var] = field(default_factory=dict)
    rows: dict[str, Row] = field(default_factory=dict)
    objective: dict[str, float] = field(default_factory=dict)
    fixed: list[Vehicle] = field(default_factory=list)
    duration_bounds: dict[Vehicle, float] = field(default_factory=dict)

    @property
    def vehicles(self) -> list[Vehicle]:
        return list(self.levels)


# naming ----------------------------------------------------------------------

_BAD = re.compile(r"[^A-Za-z0-9_.]")


def tok(s: object) -> str:
    """LP-safe token; leading digits get an ``n`` prefix so vertex names never look like level numbers."""
    t = _BAD.sub("_", str(s))
    return "n" + t if t[:1].isdigit() or not t else t


def vtok(v: Vehicle) -> str:
    return f"{tok(v[0])}.{tok(v[1])}.{v[2]}"


def _name(fam: str, *idx: object) -> str:
    return f"{fam}({','.join(str(i) for i in idx)})"


# construction ----------------------------------------------------------------


class _Builder:
    def __init__(
        self,
        inst: Instance,
        levels: Mapping[Vehicle, int],
        big_m: float,
        optional: bool,
        eq625_all: bool,
        budget: int | None,
    ) -> None:
        self.inst = inst
        self.M = float(big_m)
        self.cs = ConstraintSystem(inst, dict(levels), float(big_m), inst.integer, optional, eq625_all)
        self.budget = budget
        kinds = {v.name: v.kind for v in inst.vertices}
        self.kind = kinds
        self.ports = inst.names_of_kind(PORT)
        self.V: dict[str, list[str]] = {}
        for k in inst.vehicle_types:
            acc = inst.accessible_set(k.name)
            self.V[k.name] = [v.name for v in inst.vertices if v.name in acc]

    # sets
    def Vk(self, v: Vehicle) -> list[str]:
        return self.V[v[1]]

    def of(self, v: Vehicle, *kinds: str) -> list[str]:
        return [i for i in self.Vk(v) if self.kind[i] in kinds]

    def L(self, v: Vehicle) -> range:
        return range(1, self.cs.levels[v] + 1)

    def C(self, v: Vehicle) -> list[str]:
        comp = set(self.inst.vt(v[1]).compatible_cargos)
        return [c.name for c in self.inst.cargo_types if c.name in comp]

    def arcs(self, v: Vehicle, l: int) -> list[tuple[str, str]]:
        h = v[0]
        Vk = self.Vk(v)
        out = []
        if l == 1:
            out += [(h, j) for j in Vk if self.kind[j] != RELIEF_CENTRE]
        for i in Vk:
            out += [(i, j) for j in Vk if j != i]
            if self.kind[i] != WAREHOUSE:
                out.append((i, h))
        return out

    def inter(self, v: Vehicle) -> list[tuple[int, int]]:
        Lmax = self.cs.levels[v]
        return [(l, m) for l in range(1, Lmax + 1) for m in (l - 1, l + 1) if 1 <= m <= Lmax]

    def vehicles_for(self, cargos: Iterable[str], i: str) -> list[Vehicle]:
        cargos = set(cargos)
        access = set(self.inst.vts_at(i))
        return [
            v
            for v in self.cs.levels
            if v[1] in access and cargos & set(self.inst.vt(v[1]).compatible_cargos)
        ]

    def B(self, i: str) -> list[str]:
        tr = set(self.inst.vertex(i).transhippable)
        return [c.name for c in self.inst.cargo_types if c.name in tr]

    def U(self, v: Vehicle, c: str) -> float:
        return float(self.inst.vt(v[1]).load_unload_time.get(c, 0.0))

    # declarations
    def var(self, fam: str, name: str, lb=0.0, ub=float("inf"), kind="C") -> None:
        self.cs.variables[name] = Var(name, fam, lb, ub, kind)

    def declare(self) -> None:
        inst, intk = self.inst, ("I" if self.inst.integer else "C")
        for v in self.cs.levels:
            V = vtok(v)
            h = v[0]
            for l in self.L(v):
                for i, j in self.arcs(v, l):
                    ii, jj = tok(i), tok(j)
                    self.var("x", _name("x", V, l, ii, jj), 0, 1, "B")
                    self.var("t", _name("t", V, l, ii, jj))
                    for c in self.C(v):
                        self.var("y", _name("y", V, l, ii, jj, tok(c)), kind=intk)
            for i in self.Vk(v):
                for l, m in self.inter(v):
                    self.var("x", _name("x", V, tok(i), l, m), 0, 1, "B")
                    self.var("t", _name("t", V, tok(i), l, m))
                    for c in self.C(v):
                        self.var("y", _name("y", V, tok(i), l, m, tok(c)), kind=intk)
            for l in self.L(v):
                for i in [h] + self.Vk(v):
                    self.var("a", _name("a", V, l, tok(i)))
                for i in self.Vk(v):
                    self.var("d", _name("d", V, l, tok(i)))
                for i in self.of(v, PORT):
                    self.var("w", _name("w", V, l, tok(i)))
                    for c in self.B(i):
                        if c in self.C(v):
                            self.var("r", _name("r", V, l, tok(i), tok(c)), float("-inf"))
                            self.var("n", _name("n", V, l, tok(i), tok(c)), 0, 1, "B")
                            self.var("e", _name("e", V, l, tok(i), tok(c)))
            self.var("d", _name("d", V, 1, tok(h)))
        for i in inst.vertices:
            if i.kind in NODE_KINDS:
                cargos = [c.name for c in inst.cargo_types]
            elif i.kind == WAREHOUSE:
                cargos = [c.name for c in inst.cargo_types if c.kind == DELIVERY]
            else:
                continue
            for c in cargos:
                self.var("b", _name("b", tok(i.name), tok(c)), kind=intk)
                self.var("q", _name("q", tok(i.name), tok(c)), kind=intk)
        for i in self.ports:
            I = tok(i)
            for c in self.B(i):
                vs = self.vehicles_for([c], i)
                for v in vs:
                    for l in self.L(v):
                        for vh in vs:
                            for lh in self.L(vh):
                                for sh in (ARR, DEP):
                                    self.var("o", _name("o", I, tok(c), vtok(v), l, vtok(vh), lh, sh), float("-inf"))
            vs = self.vehicles_for(self.B(i), i)
            for v in vs:
                for l in self.L(v):
                    for vh in vs:
                        for lh in self.L(vh):
                            for s in (ARR, DEP):
                                for sh in (ARR, DEP):
                                    self.var("g", _name("g", I, vtok(v), l, s, vtok(vh), lh, sh), 0, 1, "B")
        for z in ("z_x", "z_s", "z_sOT", "z_sCT"):
            self.var("z", z)

    # rows
    def row(self, fam: str, group: str, idx: Sequence[object], terms: Iterable[tuple[float, str | None]], sense: str, rhs: float) -> None:
        acc: dict[str, float] = {}
        for coef, name in terms:
            if name is None:
                continue
            if name not in self.cs.variables:
                raise KeyError(f"row {group} references undeclared {name}")
            acc[name] = acc.get(name, 0.0) + coef
        acc = {k: c for k, c in acc.items() if c != 0.0}
        if not acc:
            return
        name = f"{fam}_eq{group}({','.join(str(i) for i in idx)})"
        self.cs.rows[name] = Row(name, "eq" + group, acc, sense, float(rhs))

    def has(self, name: str) -> str | None:
        return name if name in self.cs.variables else None

    # helpers returning (coef, name) lists
    def X(self, v, l, i, j):
        return self.has(_name("x", vtok(v), l, tok(i), tok(j)))

    def XI(self, v, i, l, m):
        return self.has(_name("x", vtok(v), tok(i), l, m))

    def Y(self, v, l, i, j, c):
        return self.has(_name("y", vtok(v), l, tok(i), tok(j), tok(c)))

    def YI(self, v, i, l, m, c):
        return self.has(_name("y", vtok(v), tok(i), l, m, tok(c)))

    def T_(self, v, l, i, j):
        return self.has(_name("t", vtok(v), l, tok(i), tok(j)))

    def TI(self, v, i, l, m):
        return self.has(_name("t", vtok(v), tok(i), l, m))

    def A(self, v, l, i):
        return self.has(_name("a", vtok(v), l, tok(i)))

    def D(self, v, l, i):
        return self.has(_name("d", vtok(v), l, tok(i)))

    def in_arcs(self, v, l, i):
        return [(a, b) for a, b in self.arcs(v, l) if b == i]

    def out_arcs(self, v, l, i):
        return [(a, b) for a, b in self.arcs(v, l) if a == i]

    def x_in(self, v, l, i, coef=1.0):
        t = [(coef, self.X(v, l, a, b)) for a, b in self.in_arcs(v, l, i)]
        return t + [(coef, self.XI(v, i, m, l)) for m in (l - 1, l + 1)]

    def x_out(self, v, l, i, coef=1.0):
        t = [(coef, self.X(v, l, a, b)) for a, b in self.out_arcs(v, l, i)]
        return t + [(coef, self.XI(v, i, l, m)) for m in (l - 1, l + 1)]

    def y_in(self, v, l, i, c, coef=1.0, inter=True):
        t = [(coef, self.Y(v, l, a, b, c)) for a, b in self.in_arcs(v, l, i)]
        return t + ([(coef, self.YI(v, i, m, l, c)) for m in (l - 1, l + 1)] if inter else [])

    def y_out(self, v, l, i, c, coef=1.0, inter=True):
        t = [(coef, self.Y(v, l, a, b, c)) for a, b in self.out_arcs(v, l, i)]
        return t + ([(coef, self.YI(v, i, l, m, c)) for m in (l - 1, l + 1)] if inter else [])

    def layer_tag(self, v, l) -> str:
        Lmax = self.cs.levels[v]
        return "a" if l == 1 else ("c" if l == Lmax else "b")

    def routing(self) -> None:
        for v in self.cs.levels:
            V, h = vtok(v), v[0]
            start = [(1.0, self.X(v, 1, h, j)) for _, j in self.out_arcs(v, 1, h)]
            self.row("route", "2", [V], start, "<=", 1)
            back = [(1.0, self.X(v, l, i, h)) for l in self.L(v) for i, _ in self.in_arcs(v, l, h)]
            self.row("route", "3", [V], back + [(-c, n) for c, n in start], "=", 0)
            for l in self.L(v):
                for i in self.Vk(v):
                    self.row("route", "4" + self.layer_tag(v, l), [V, l, tok(i)], self.x_in(v, l, i) + self.x_out(v, l, i, -1.0), "=", 0)
        for i in self.inst.names_of_kind(NODE_SIMULTANEOUS):
            terms = []
            for v in self.cs.levels:
                if i in self.Vk(v):
                    for l in self.L(v):
                        terms += [(1.0, self.X(v, l, a, b)) for a, b in self.out_arcs(v, l, i)]
            self.row("route", "7", [tok(i)], terms, "<=", 1)

    def flows(self) -> None:
        inst = self.inst
        D = {c.name for c in inst.cargo_types if c.kind == DELIVERY}
        P = {c.name for c in inst.cargo_types if c.kind == PICKUP}
        for v in self.cs.levels:
            V, h = vtok(v), v[0]
            C = self.C(v)
            for c in C:
                for j in self.of(v, WAREHOUSE, PORT, *NODE_KINDS):
                    self.row("flow", "8", [V, tok(j), tok(c)], [(1.0, self.Y(v, 1, h, j, c))], "<=", 0)
                for l in self.L(v):
                    for i in self.of(v, PORT, RELIEF_CENTRE, *NODE_KINDS):
                        self.row("flow", "9", [V, l, tok(i), tok(c)], [(1.0, self.Y(v, l, i, h, c))], "<=", 0)
            for l in self.L(v):
                tag = self.layer_tag(v, l)
                for i in self.Vk(v):
                    kind = self.kind[i]
                    idx = lambda c: [V, l, tok(i), tok(c)]  # noqa: E731
                    for c in C:
                        net_out = self.y_out(v, l, i, c) + self.y_in(v, l, i, c, -1.0)
                        if kind == WAREHOUSE:
                            grp, sense = ("10", ">=") if c in D else ("11", "=")
                            self.row("flow", grp + tag, idx(c), net_out, sense, 0)
                        elif kind == RELIEF_CENTRE:
                            grp, sense = ("13", "<=") if c in P else ("14", "=")
                            self.row("flow", grp + tag, idx(c), net_out, sense, 0)
                        elif kind in NODE_KINDS:
                            grp, sense = ("16", ">=") if c in P else ("17", "<=")
                            self.row("flow", grp + tag, idx(c), net_out, sense, 0)
                        elif kind == PORT:
                            net_in = [(-k, n) for k, n in net_out]
                            if c in self.B(i):
                                r = _name("r", V, l, tok(i), tok(c))
                                self.row("flow", "20" + tag, idx(c), net_in + [(-1.0, r)], "=", 0)
                            else:
                                self.row("flow", "21" + tag, idx(c), net_in, "=", 0)
        # totals at warehouses, relief centres and nodes
        for w in inst.of_kind(WAREHOUSE):
            i = w.name
            for c in sorted(D, key=self._corder):
                vs = [v for v in self.vehicles_for([c], i)]
                first = [t for v in vs for t in self.y_out(v, 1, i, c, inter=False) + self.y_in(v, 1, i, c, -1.0, inter=False)]
                upper = [t for v in vs for l in self.L(v) if l > 1 for t in self.y_out(v, l, i, c, inter=False) + self.y_in(v, l, i, c, -1.0, inter=False)]
                b, q = _name("b", tok(i), tok(c)), _name("q", tok(i), tok(c))
                self.row("flow", "12a", [tok(i), tok(c)], first + [(-1.0, b)], "=", 0)
                self.row("flow", "12b", [tok(i), tok(c)], upper + [(-1.0, q)], "=", 0)
                self.row("flow", "12c", [tok(i), tok(c)], [(1.0, b), (1.0, q)], "<=", w.stock.get(c, 0.0))
        for rc in inst.of_kind(RELIEF_CENTRE):
            i = rc.name
            for c in sorted(P, key=self._corder):
                vs = self.vehicles_for([c], i)
                terms = [t for v in vs for l in self.L(v) for t in self.y_in(v, l, i, c, inter=False) + self.y_out(v, l, i, c, -1.0, inter=False)]
                self.row("flow", "15", [tok(i), tok(c)], terms, "<=", rc.capacity.get(c, 0.0))
        for node in inst.of_kind(*NODE_KINDS):
            i = node.name
            for c in [c.name for c in inst.cargo_types]:
                vs = self.vehicles_for([c], i)
                sign = 1.0 if c in P else -1.0
                first = [t for v in vs for t in self.y_out(v, 1, i, c, sign, inter=False) + self.y_in(v, 1, i, c, -sign, inter=False)]
                upper = [t for v in vs for l in self.L(v) if l > 1 for t in self.y_out(v, l, i, c, sign, inter=False) + self.y_in(v, l, i, c, -sign, inter=False)]
                grp = "18" if c in P else "19"
                b, q = _name("b", tok(i), tok(c)), _name("q", tok(i), tok(c))
                self.row("flow", grp + "a", [tok(i), tok(c)], first + [(-1.0, b)], "=", 0)
                self.row("flow", grp + "b", [tok(i), tok(c)], upper + [(-1.0, q)], "=", 0)
                self.row("flow", grp + "c", [tok(i), tok(c)], [(1.0, b), (1.0, q)], ">=", node.demand.get(c, 0.0))

    def _corder(self, c: str) -> int:
        return [x.name for x in self.inst.cargo_types].index(c)

    def timing(self) -> None:
        inst, M = self.inst, self.M
        D = {c.name for c in inst.cargo_types if c.kind == DELIVERY}
        P = {c.name for c in inst.cargo_types if c.kind == PICKUP}
        for v in self.cs.levels:
            V, h, k = vtok(v), v[0], v[1]
            self.row("time", "22", [V], [(1.0, self.D(v, 1, h))], "<=", 0)
            for l in self.L(v):
                sub = "a" if l == 1 else "b"
                for i, j in self.arcs(v, l):
                    t, x = self.T_(v, l, i, j), self.X(v, l, i, j)
                    Tij = inst.T(k, i, j)
                    d = self.D(v, l, i) if i != h else self.D(v, 1, h)
                    idx = [V, l, tok(i), tok(j)]
                    self.row("time", "23" + sub, idx, [(1.0, t), (-M, x)], "<=", 0)
                    self.row("time", "24" + sub, idx, [(1.0, t), (-1.0, d), (-Tij - M, x)], ">=", -M)
                    self.row("time", "25" + sub, idx, [(1.0, t), (-1.0, d), (M - Tij, x)], "<=", M)
            for i in self.Vk(v):
                for l, m in self.inter(v):
                    t, x, d = self.TI(v, i, l, m), self.XI(v, i, l, m), self.D(v, l, i)
                    idx = [V, tok(i), l, m]
                    self.row("time", "26", idx, [(1.0, t), (-M, x)], "<=", 0)
                    self.row("time", "27", idx, [(1.0, t), (-1.0, d), (-M, x)], ">=", -M)
                    self.row("time", "28", idx, [(1.0, t), (-1.0, d), (M, x)], "<=", M)
            for l in self.L(v):
                tag = self.layer_tag(v, l)
                for i in self.Vk(v):
                    terms = [(-1.0, self.T_(v, l, a, b)) for a, b in self.in_arcs(v, l, i)]
                    terms += [(-1.0, self.TI(v, i, m, l)) for m in (l - 1, l + 1)]
                    self.row("time", "29" + tag, [V, l, tok(i)], [(1.0, self.A(v, l, i))] + terms, "=", 0)
                terms = [(-1.0, self.T_(v, l, a, b)) for a, b in self.in_arcs(v, l, h)]
                self.row("time", "29_5", [V, l], [(1.0, self.A(v, l, h))] + terms, "=", 0)
            for l in self.L(v):
                tag = self.layer_tag(v, l)
                for i in self.Vk(v):
                    kind = self.kind[i]
                    base = [(1.0, self.D(v, l, i)), (-1.0, self.A(v, l, i))]
                    idx = [V, l, tok(i)]
                    if kind == PORT:
                        terms = [(-1.0, _name("w", V, l, tok(i)))]
                        for c in self.B(i):
                            if c in self.C(v):
                                terms.append((-self.U(v, c), _name("e", V, l, tok(i), tok(c))))
                        self.row("time", "36", idx, base + terms, "=", 0)
                        continue
                    terms = []
                    for c in self.C(v):
                        u = self.U(v, c)
                        if kind in NODE_KINDS:
                            sign = 1.0 if c in P else -1.0
                        elif kind == WAREHOUSE:
                            if c not in D:
                                continue
                            sign = 1.0
                        else:
                            if c not in P:
                                continue
                            sign = -1.0
                        terms += [(-u * sign * s, n) for s, n in self.y_out(v, l, i, c) + self.y_in(v, l, i, c, -1.0)]
                    grp = {WAREHOUSE: "38", RELIEF_CENTRE: "39"}.get(kind, "37")
                    self.row("time", grp + tag, idx, base + terms, "=", 0)

    def residues(self) -> None:
        M = self.M
        for v in self.cs.levels:
            V = vtok(v)
            for l in self.L(v):
                for i in self.of(v, PORT):
                    for c in self.B(i):
                        if c not in self.C(v):
                            continue
                        idx = [V, l, tok(i), tok(c)]
                        r, n, e = (_name(f, V, l, tok(i), tok(c)) for f in ("r", "n", "e"))
                        self.row("residue", "30", idx, [(1.0, r), (-M, n)], ">=", -M)
                        self.row("residue", "31", idx, [(1.0, r), (-M, n)], "<=", 0)
                        self.row("residue", "32", idx, [(1.0, e), (-1.0, r)], ">=", 0)
                        self.row("residue", "33", idx, [(1.0, e), (1.0, r)], ">=", 0)
                        self.row("residue", "34", idx, [(1.0, e), (-1.0, r), (M, n)], "<=", M)
                        self.row("residue", "35", idx, [(1.0, e), (1.0, r), (-M, n)], "<=", 0)

    def temporal(self) -> None:
        M = self.M
        for i in self.ports:
            I = tok(i)
            vs = self.vehicles_for(self.B(i), i)
            pairs = [(v, l, vh, lh) for v in vs for l in self.L(v) for vh in vs for lh in self.L(vh)]
            for v, l, vh, lh in pairs:
                idx = lambda s, sh: [I, vtok(v), l, s, vtok(vh), lh, sh]  # noqa: E731
                g = lambda s, sh: _name("g", I, vtok(v), l, s, vtok(vh), lh, sh)  # noqa: E731
                a, d = self.A(v, l, i), self.D(v, l, i)
                ah, dh = self.A(vh, lh, i), self.D(vh, lh, i)
                self.row("order", "40a", idx(DEP, ARR), [(1.0, ah), (-1.0, d), (-M, g(DEP, ARR))], ">=", -M)
                self.row("order", "40b", idx(DEP, ARR), [(1.0, d), (-1.0, ah), (M, g(DEP, ARR))], ">=", 0)
                self.row("order", "41a", idx(DEP, DEP), [(1.0, dh), (-1.0, d), (-M, g(DEP, DEP))], ">=", -M)
                self.row("order", "41b", idx(DEP, DEP), [(1.0, d), (-1.0, dh), (M, g(DEP, DEP))], ">=", 0)
                self.row("order", "42a", idx(ARR, ARR), [(1.0, ah), (-1.0, a), (M, g(ARR, ARR))], "<=", M)
                self.row("order", "42b", idx(ARR, ARR), [(1.0, a), (-1.0, ah), (-M, g(ARR, ARR))], "<=", 0)
                self.row("order", "43a", idx(ARR, DEP), [(1.0, dh), (-1.0, a), (M, g(ARR, DEP))], "<=", M)
                self.row("order", "43b", idx(ARR, DEP), [(1.0, a), (-1.0, dh), (-M, g(ARR, DEP))], "<=", 0)
            for c in self.B(i):
                C = tok(c)
                cv = self.vehicles_for([c], i)
                for v in cv:
                    V = vtok(v)
                    u = self.U(v, c)
                    for l in self.L(v):
                        r, n = _name("r", V, l, I, C), _name("n", V, l, I, C)
                        a, d = self.A(v, l, i), self.D(v, l, i)
                        for vh in cv:
                            for lh in self.L(vh):
                                ah, dh = self.A(vh, lh, i), self.D(vh, lh, i)
                                o = {sh: _name("o", I, C, V, l, vtok(vh), lh, sh) for sh in (ARR, DEP)}
                                g = lambda s, sh: _name("g", I, V, l, s, vtok(vh), lh, sh)  # noqa: E731
                                base = [I, C, V, l, vtok(vh), lh]
                                for grp, s, sh in (("44", DEP, ARR), ("45", DEP, DEP)):
                                    self.row("stm", grp + "a", base + [sh], [(1.0, o[sh]), (-1.0, r), (M, g(s, sh))], "<=", M)
                                    self.row("stm", grp + "b", base + [sh], [(1.0, o[sh]), (-1.0, r), (-M, g(s, sh))], ">=", -M)
                                for grp, s, sh in (("46", ARR, ARR), ("47", ARR, DEP)):
                                    self.row("stm", grp + "a", base + [sh], [(1.0, o[sh]), (M, g(s, sh))], "<=", M)
                                    self.row("stm", grp + "b", base + [sh], [(1.0, o[sh]), (-M, g(s, sh))], ">=", -M)
                                self.row("stm", "48", base + [ARR], [(1.0, o[ARR]), (-M, n)], ">=", -M)
                                self.row("stm", "49", base, [(1.0, o[ARR]), (-1.0, o[DEP]), (M, n)], "<=", M)
                                self.row("stm", "50", base + [DEP], [(1.0, o[DEP]), (-1.0, r), (M, n)], "<=", M)
                                self.row("stm", "55", base + [ARR], [(1.0, o[ARR]), (-M, n)], "<=", 0)
                                self.row("stm", "56", base, [(1.0, o[ARR]), (-1.0, o[DEP]), (M, n)], ">=", 0)
                                self.row("stm", "57", base + [DEP], [(1.0, o[DEP]), (-1.0, r), (M, n)], ">=", 0)
                                if u <= 0:
                                    continue
                                k = 1.0 / u
                                gA = [(-M, g(ARR, ARR)), (-M, g(DEP, ARR))]
                                gD = [(-M, g(ARR, DEP)), (-M, g(DEP, DEP))]
                                neg = lambda ts: [(-c_, n_) for c_, n_ in ts]  # noqa: E731
                                self.row("stm", "51", base + [ARR], [(1.0, o[ARR]), (-k, ah), (k, a), *gA, (M, n)], "<=", M)
                                self.row("stm", "52", base + [DEP], [(1.0, o[DEP]), (-k, dh), (k, a), *gD, (M, n)], "<=", M)
                                self.row("stm", "53", base + [ARR], [(1.0, o[ARR]), (-1.0, r), (k, d), (-k, ah), *neg(gA), (-M, n)], ">=", -M)
                                self.row("stm", "54", base + [DEP], [(1.0, o[DEP]), (-1.0, r), (k, d), (-k, dh), *neg(gD), (-M, n)], ">=", -M)
                                self.row("stm", "58", base + [ARR], [(1.0, o[ARR]), (k, ah), (-k, a), *neg(gA), (M, n)], ">=", 0)
                                self.row("stm", "59", base + [DEP], [(1.0, o[DEP]), (k, dh), (-k, a), *neg(gD), (M, n)], ">=", 0)
                                self.row("stm", "60", base + [ARR], [(1.0, o[ARR]), (-1.0, r), (-k, d), (k, ah), *gA, (-M, n)], "<=", 0)
                                self.row("stm", "61", base + [DEP], [(1.0, o[DEP]), (-1.0, r), (-k, d), (k, dh), *gD, (-M, n)], "<=", 0)
                for vh in cv:
                    for lh in self.L(vh):
                        for sh in (ARR, DEP):
                            terms = [(1.0, _name("o", I, C, vtok(v), l, vtok(vh), lh, sh)) for v in cv for l in self.L(v)]
                            self.row("tp", "62", [I, C, vtok(vh), lh, sh], terms, ">=", 0)
                if self.cs.eq625_all_cargo or self.inst.cargo(c).kind == PICKUP:
                    terms = [(1.0, _name("r", vtok(v), l, I, C)) for v in cv for l in self.L(v)]
                    self.row("tp", "62_5", [I, C], terms, "<=", 0)

    def capacity(self) -> None:
        inst = self.inst
        for v in self.cs.levels:
            V = vtok(v)
            k = inst.vt(v[1])
            for fam_grp, attr, cap in (("63", "unit_volume", k.volume_cap), ("64", "unit_weight", k.weight_cap)):
                for l in self.L(v):
                    sub = "a" if l == 1 else "b"
                    for i, j in self.arcs(v, l):
                        terms = [(getattr(inst.cargo(c), attr), self.Y(v, l, i, j, c)) for c in self.C(v)]
                        self.row("cap", fam_grp + sub, [V, l, tok(i), tok(j)], terms + [(-cap, self.X(v, l, i, j))], "<=", 0)
                for i in self.Vk(v):
                    for l, m in self.inter(v):
                        terms = [(getattr(inst.cargo(c), attr), self.YI(v, i, l, m, c)) for c in self.C(v)]
                        self.row("cap", fam_grp + "c", [V, tok(i), l, m], terms + [(-cap, self.XI(v, i, l, m))], "<=", 0)

    def duration_terms(self, v: Vehicle, l: int) -> list[tuple[float, str | None]]:
        h, k = v[0], v[1]
        terms: list[tuple[float, str | None]] = [(1.0, self.A(v, l, h))]
        if self.inst.vt(k).open_trip:
            terms += [(-self.inst.T(k, i, h), self.X(v, l, i, h)) for i, _ in self.in_arcs(v, l, h)]
        return terms

    def objective(self) -> None:
        ot, ct = [], []
        for v in self.cs.levels:
            open_trip = self.inst.vt(v[1]).open_trip
            for l in self.L(v):
                dur = self.duration_terms(v, l)
                self.row("obj", "65a" if open_trip else "65b", [vtok(v), l], [(1.0, "z_x")] + [(-c, n) for c, n in dur], ">=", 0)
                (ot if open_trip else ct).extend(dur)
        self.row("obj", "66a", [], [(1.0, "z_sOT")] + [(-c, n) for c, n in ot], "=", 0)
        self.row("obj", "66b", [], [(1.0, "z_sCT")] + [(-c, n) for c, n in ct], "=", 0)
        self.row("obj", "66c", [], [(1.0, "z_s"), (-1.0, "z_sCT"), (-1.0, "z_sOT")], "=", 0)
        self.cs.objective = {"z_x": 1.0}

    def optional(self) -> None:
        M = self.M
        for v in self.cs.levels:
            V, h = vtok(v), v[0]
            Lmax = self.cs.levels[v]
            start = [(-1.0, self.X(v, 1, h, j)) for _, j in self.out_arcs(v, 1, h)]
            for l in self.L(v):
                if l < Lmax:
                    sub = "a" if l == 1 else "b"
                    for i in self.Vk(v):
                        for j in self.Vk(v):
                            if i == j:
                                continue
                            terms = [(1.0, self.X(v, l, a, b)) for a, b in self.out_arcs(v, l, i)]
                            terms += [(1.0, self.X(v, l, a, b)) for a, b in self.in_arcs(v, l, j)]
                            if l > 1:
                                terms += [(1.0, self.XI(v, i, l, l - 1)), (1.0, self.XI(v, j, l - 1, l))]
                            self.row("route", "5" + sub, [V, l, tok(i), tok(j)], terms + [(-1.0, self.X(v, l + 1, i, j))], ">=", 0)
                    for i in self.of(v, PORT, RELIEF_CENTRE, *NODE_KINDS):
                        terms = [(1.0, self.X(v, l, a, b)) for a, b in self.out_arcs(v, l, i)]
                        if l > 1:
                            terms.append((1.0, self.XI(v, i, l, l - 1)))
                        self.row("route", "6" + sub, [V, l, tok(i)], terms + [(-1.0, self.X(v, l + 1, i, h))], ">=", 0)
                if l > 1:
                    for i in self.Vk(v):
                        self.row("route", "6_25", [V, l, tok(i)], [(1.0, self.XI(v, i, l - 1, l)), (1.0, self.XI(v, i, l, l - 1))], "<=", 1)
                tag = self.layer_tag(v, l)
                for i in self.Vk(v):
                    self.row("route", "6_75" + tag, [V, l, tok(i)], self.x_in(v, l, i) + start, "<=", 0)
            for l in self.L(v):
                for i, j in self.arcs(v, l):
                    if l == 1 and i == h:
                        continue
                    for c in self.C(v):
                        self.row("cap", "o63de", [V, l, tok(i), tok(j), tok(c)], [(1.0, self.Y(v, l, i, j, c)), (-M, self.X(v, l, i, j))], "<=", 0)
            for i in self.Vk(v):
                for l, m in self.inter(v):
                    for c in self.C(v):
                        self.row("cap", "o63f", [V, tok(i), l, m, tok(c)], [(1.0, self.YI(v, i, l, m, c)), (-M, self.XI(v, i, l, m))], "<=", 0)

    def build(self) -> ConstraintSystem:
        self.declare()
        if self.budget is not None and len(self.cs.variables) > self.budget:
            counts: dict[str, int] = {}
            for var in self.cs.variables.values():
                counts[var.family] = counts.get(var.family, 0) + 1
            raise ModelTooLarge(counts, self.budget)
        self.routing()
        self.flows()
        self.timing()
        self.residues()
        self.temporal()
        self.capacity()
        self.objective()
        if self.cs.optional_constraints:
            self.optional()
        return self.cs


def build_model(
    inst: Instance,
    levels: Mapping[Vehicle, int] | int = 1,
    big_m: float = DEFAULT_BIG_M,
    integrality: str | None = None,
    optional_constraints: bool = False,
    eq625_all_cargo: bool = False,
    variable_budget: int | None = DEFAULT_VARIABLE_BUDGET,
) -> ConstraintSystem:
    """Instantiate every constraint family over its index domain.

    ``levels`` is a per-vehicle mapping or one count for all vehicles.
    ``integrality`` overrides the instance's mode for y, b and q.
    """
    if isinstance(levels, int):
        levels = {v: levels for v in inst.vehicles}
    else:
        missing = [v for v in inst.vehicles if v not in levels]
        if missing:
            raise ValueError(f"no level count for {missing}")
        levels = {v: int(levels[v]) for v in inst.vehicles}
    if any(n < 1 for n in levels.values()):
        raise ValueError("every vehicle needs at least one level")
    if integrality is not None and integrality != inst.integrality:
        if integrality not in ("integer", "continuous"):
            raise ValueError("integrality must be integer or continuous")
        from dataclasses import replace

        inst = replace(inst, integrality=integrality)
    return _Builder(inst, levels, big_m, optional_constraints, eq625_all_cargo, variable_budget).build()


# cascade and levels ------------------------------------------------------------


def add_cascade_step(cs: ConstraintSystem, previous_optimum: float, argmax_vehicle: Vehicle) -> ConstraintSystem:
    """Bound every still-compared vehicle by the last optimum, then drop the
    argmax vehicle from the z_x linkage."""
    active = [v for v in cs.levels if v not in cs.fixed]
    if not active:
        raise CascadeError("every vehicle is already fixed")
    if argmax_vehicle not in active:
        raise CascadeError(f"{argmax_vehicle} is not an active vehicle")
    b = _Builder.__new__(_Builder)
    b.cs, b.inst, b.M = cs, cs.inst, cs.big_m
    b.kind = {v.name: v.kind for v in cs.inst.vertices}
    b.V = {k.name: [v.name for v in cs.inst.vertices if v.name in cs.inst.accessible_set(k.name)] for k in cs.inst.vehicle_types}
    for v in active:
        cs.duration_bounds[v] = float(previous_optimum)
        for l in range(1, cs.levels[v] + 1):
            name = f"cascade_bound({vtok(v)},{l})"
            cs.rows.pop(name, None)
            terms = {}
            for c, n in b.duration_terms(v, l):
                if n is not None:
                    terms[n] = terms.get(n, 0.0) + c
            cs.rows[name] = Row(name, "cascade", terms, "<=", float(previous_optimum))
    V = vtok(argmax_vehicle)
    for name in [n for n, r in cs.rows.items() if r.group in ("eq65a", "eq65b") and n.split("(", 1)[1].startswith(V + ",")]:
        del cs.rows[name]
    cs.fixed.append(argmax_vehicle)
    return cs


def level_escalation(
    previous: Mapping[Vehicle, int] | Sequence[Vehicle] | None,
    outcome: str | None = None,
) -> dict[Vehicle, int]:
    """Levels for the next attempt.

    First call: pass the vehicle list (outcome None) and every vehicle gets 1.
    ``infeasible``: ``previous`` holds the levels just tried; all grow by one.
    ``solved``: ``previous`` holds the levels each vehicle used; next is used+1,
    and an unused vehicle gets 1.
    """
    if outcome is None:
        return {v: 1 for v in (previous or [])}
    if not isinstance(previous, Mapping):
        raise ValueError("previous levels must be a mapping once an outcome is known")
    if outcome == "infeasible":
        return {v: n + 1 for v, n in previous.items()}
    if outcome == "solved":
        return {v: (n + 1 if n > 0 else 1) for v, n in previous.items()}
    raise ValueError(f"unknown outcome {outcome!r}")


# reporting and I/O -------------------------------------------------------------


def count_report(cs: ConstraintSystem) -> dict[str, dict[str, int]]:
    fams: dict[str, int] = {}
    for v in cs.variables.values():
        fams[v.family] = fams.get(v.family, 0) + 1
    groups: dict[str, int] = {}
    for r in cs.rows.values():
        groups[r.group] = groups.get(r.group, 0) + 1
    return {
        "variables": dict(sorted(fams.items())),
        "constraints": dict(sorted(groups.items())),
        "totals": {"variables": len(cs.variables), "constraints": len(cs.rows)},
    }


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _expr(terms: Mapping[str, float], per_line: int = 6) -> str:
    parts = []
    for n, (name, c) in enumerate(terms.items()):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        coef = "" if mag == 1 else _num(mag) + " "
        if n == 0:
            parts.append(("- " if c < 0 else "") + coef + name)
        else:
            parts.append(f"{sign} {coef}{name}")
    lines = [" ".join(parts[i : i + per_line]) for i in range(0, len(parts), per_line)]
    return "\n   ".join(lines)


def emit_lp(cs: ConstraintSystem) -> str:
    out = ["\\ layered multi-trip routing model", "Minimize", " obj: " + _expr(cs.objective), "Subject To"]
    sense = {"<=": "<=", ">=": ">=", "=": "="}
    for r in cs.rows.values():
        out.append(f" {r.name}: {_expr(r.terms)} {sense[r.sense]} {_num(r.rhs)}")
    out.append("Bounds")
    for v in cs.variables.values():
        if v.kind == "B":
            continue
        if v.lb == float("-inf") and v.ub == float("inf"):
            out.append(f" {v.name} free")
        elif v.lb != 0.0 or v.ub != float("inf"):
            lo = "-inf" if v.lb == float("-inf") else _num(v.lb)
            hi = "+inf" if v.ub == float("inf") else _num(v.ub)
            out.append(f" {lo} <= {v.name} <= {hi}")
    gens = [v.name for v in cs.variables.values() if v.kind == "I"]
    bins = [v.name for v in cs.variables.values() if v.kind == "B"]
    if gens:
        out.append("Generals")
        out += [" " + n for n in gens]
    if bins:
        out.append("Binaries")
        out += [" " + n for n in bins]
    out.append("End")
    return "\n".join(out) + "\n"


def parse_solution(text: str) -> dict[str, float]:
    """Read ``name value`` lines; blank lines and ``#`` comments are skipped."""
    values: dict[str, float] = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace("=", " ").split()
        if len(parts) != 2:
            raise ValueError(f"line {n}: expected 'name value', got {line!r}")
        try:
            values[parts[0]] = float(parts[1])
        except ValueError:
            raise ValueError(f"line {n}: bad value {parts[1]!r}") from None
    return values


def format_solution(values: Mapping[str, float]) -> str:
    return "".join(f"{k} {_num(v)}\n" for k, v in values.items())


def levels_used(cs: ConstraintSystem, values: Mapping[str, float]) -> dict[Vehicle, int]:
    out = {}
    for v in cs.levels:
        prefix = f"x({vtok(v)},"
        top = 0
        for name, val in values.items():
            if val > 0.5 and name.startswith(prefix):
                parts = name[len(prefix) : -1].split(",")
                if parts[0].isdigit():
                    top = max(top, int(parts[0]))
                else:
                    top = max(top, int(parts[1]), int(parts[2]))
        out[v] = top
    return out


def vehicle_durations(cs: ConstraintSystem, values: Mapping[str, float]) -> dict[Vehicle, float]:
    """Route duration per vehicle as the objective rows measure it."""
    b = _Builder.__new__(_Builder)
    b.cs, b.inst, b.M = cs, cs.inst, cs.big_m
    b.kind = {v.name: v.kind for v in cs.inst.vertices}
    b.V = {k.name: [v.name for v in cs.inst.vertices if v.name in cs.inst.accessible_set(k.name)] for k in cs.inst.vehicle_types}
    out = {}
    for v in cs.levels:
        best = 0.0
        for l in range(1, cs.levels[v] + 1):
            best = max(best, sum(c * values.get(n, 0.0) for c, n in b.duration_terms(v, l) if n is not None))
        out[v] = best
    return out


def solution_document(cs: ConstraintSystem, values: Mapping[str, float]) -> dict:
    """Turn a solved assignment into the solver's solution document so the
    validator can check it."""
    from .sre import base26

    inst = cs.inst
    b = _Builder.__new__(_Builder)
    b.cs, b.inst, b.M = cs, inst, cs.big_m
    b.kind = {v.name: v.kind for v in inst.vertices}
    b.V = {k.name: [v.name for v in inst.vertices if v.name in inst.accessible_set(k.name)] for k in inst.vehicle_types}
    on = lambda n: n is not None and values.get(n, 0.0) > 0.5  # noqa: E731
    val = lambda n: values.get(n, 0.0) if n is not None else 0.0  # noqa: E731
    routes, durs = [], []
    for v in cs.levels:
        h, k = v[0], v[1]
        vt = inst.vt(k)
        stops = [{"vertex": h, "tp_tag": None, "vlc": {}, "time": {"arrive": 0.0, "load": 0.0, "wait": 0.0, "depart": 0.0}}]
        cur, l = h, 1
        seen = set()
        while True:
            nxt = None
            if cur == h and len(stops) > 1:
                break
            for a, bb in b.out_arcs(v, l, cur) if cur != h or l == 1 else []:
                if on(b.X(v, l, a, bb)):
                    nxt = (bb, l)
                    break
            if nxt is None and cur != h:
                for m in (l - 1, l + 1):
                    if on(b.XI(v, cur, l, m)):
                        nxt = (cur, m)
                        break
            if nxt is None or nxt in seen:
                break
            seen.add(nxt)
            cur, l = nxt
            if cur == h:
                a_ = val(b.A(v, l, h))
                stops.append({"vertex": h, "tp_tag": None, "vlc": {}, "time": {"arrive": a_, "load": 0.0, "wait": 0.0, "depart": a_}})
                break
            vlc = {}
            for c in b.C(v):
                net = sum(s * val(n) for s, n in b.y_out(v, l, cur, c) + b.y_in(v, l, cur, c, -1.0))
                if inst.integer:
                    net = float(round(net))
                if abs(net) > 1e-7:
                    vlc[c] = net
            a_, d_ = val(b.A(v, l, cur)), val(b.D(v, l, cur))
            w_ = val(_name("w", vtok(v), l, tok(cur))) if b.kind[cur] == PORT else 0.0
            # the model pools residue per port and cargo, so one tag per port
            tag = f"{cur}_{base26(0)}" if b.kind[cur] == PORT else None
            ld = inst.load_time(k, vlc)
            stops.append({"vertex": cur, "tp_tag": tag, "vlc": vlc, "time": {"arrive": a_, "load": ld, "wait": w_, "depart": a_ + w_ + ld}})
            _ = d_
        if vt.open_trip and len(stops) > 1 and stops[-1]["vertex"] == h:
            stops.pop()
        if len(stops) == 1:
            dur = 0.0
        elif stops[-1]["vertex"] == h:
            dur = stops[-1]["time"]["arrive"]
        else:
            dur = stops[-1]["time"]["depart"]
        durs.append(dur)
        for s in stops:
            s["status"] = {}
            s["sre_ids"] = []
            s["perturbations"] = 0
        routes.append({"vehicle": {"depot": h, "type": k, "index": v[2]}, "stops": stops, "duration": dur})
    from .timing import cascaded_key

    return {
        "instance": inst.name,
        "seed": None,
        "objective": {"makespan": max(durs, default=0.0), "sorted_durations": cascaded_key(durs), "sum": sum(durs)},
        "routes": routes,
        "causality": [],
    }
