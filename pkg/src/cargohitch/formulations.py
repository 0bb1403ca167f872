"""Arc-based MIP and path-based restricted master problem.

Row families share their names with the dual variables they carry:
gamma (service level), upsilon / nu (passenger capacity on contracted /
uncontracted vehicle arcs), alpha (freight capacity on segments), delta (one
unit of passenger flow per request), pi (x <= y), tau (y <= units) and eta
(one path per freight request).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import DUMMY, SEGMENT, PreparedGraph, xi
from .lp import INF, LinearProgram, LpBuilder, LpSolution, LpStatus, LpWorkspace

SIGN_TOL = 1e-6


class FormulationError(RuntimeError):
    pass


@dataclass
class _Common:
    y: dict[int, int]
    x: dict[int, int]
    g: dict[tuple[str, int], int]
    rows: dict


def _vehicles(pg: PreparedGraph):
    return list(enumerate(pg.instance.network.routes, start=1))


def _common_part(b: LpBuilder, pg: PreparedGraph, integer: bool) -> _Common:
    inst, g = pg.instance, pg.graph
    costs = inst.costs
    y = {h: b.add_var(f"y[{route.id}]", costs.vehicle_design_cost(route.id), 0.0, INF, integer) for h, route in _vehicles(pg)}
    x = {f: b.add_var(f"x[{f}]", 0.0, 0.0, INF, integer) for f in sorted(g.segments)}
    gv: dict[tuple[str, int], int] = {}
    for r in inst.passenger_requests:
        for p, _ in enumerate(pg.passenger_paths[r.id]):
            gv[(r.id, p)] = b.add_var(f"g[{r.id},{p}]")
    rows: dict = {}
    total = sum(r.demand for r in inst.passenger_requests)
    rows["gamma"] = b.add_row(
        "gamma",
        {gv[(r.id, p)]: r.demand for r in inst.passenger_requests for p, _ in enumerate(pg.passenger_paths[r.id])},
        lower=inst.params.chi * total,
    )
    load: dict[int, dict[int, float]] = {a.id: {} for a in g.arcs if a.cls == "V"}
    for r in inst.passenger_requests:
        for p, path in enumerate(pg.passenger_paths[r.id]):
            for a in path.vehicle_arcs:
                load[a][gv[(r.id, p)]] = load[a].get(gv[(r.id, p)], 0.0) + r.demand
    rows["upsilon"], rows["nu"] = {}, {}
    routes = inst.network.routes
    for a in g.arcs:
        if a.cls != "V":
            continue
        route = routes[a.vehicle - 1]
        coefs = dict(load[a.id])
        if a.id in g.mu:
            coefs[x[g.mu[a.id]]] = route.unit_capacity
            rows["upsilon"][a.id] = b.add_row(f"upsilon[{a.id}]", coefs, upper=route.capacity)
        else:
            rows["nu"][a.id] = b.add_row(f"nu[{a.id}]", coefs, upper=route.capacity)
    rows["delta"] = {}
    for r in inst.passenger_requests:
        if pg.passenger_paths[r.id]:
            rows["delta"][r.id] = b.add_row(
                f"delta[{r.id}]", {gv[(r.id, p)]: 1.0 for p, _ in enumerate(pg.passenger_paths[r.id])}, upper=1.0
            )
    rows["pi"] = {f: b.add_row(f"pi[{f}]", {x[f]: 1.0, y[g.arcs[f].vehicle]: -1.0}, upper=0.0) for f in x}
    rows["tau"] = {h: b.add_row(f"tau[{route.id}]", {y[h]: 1.0}, upper=float(route.units)) for h, route in _vehicles(pg)}
    return _Common(y, x, gv, rows)


@dataclass
class ArcMip:
    lp: LinearProgram
    y: dict[int, int]
    x: dict[int, int]
    g: dict[tuple[str, int], int]
    f: dict[tuple[str, int], int]
    rows: dict


def build_arc_mip(pg: PreparedGraph) -> ArcMip:
    """Compact formulation with binary per-request freight flows on the freight arc set."""
    inst, g = pg.instance, pg.graph
    for a in g.arcs:
        if a.cls == "V" and a.id in g.mu and g.mu[a.id] not in g.segments:
            raise FormulationError(f"contracted arc {a.id} has no segment image")
    b = LpBuilder()
    common = _common_part(b, pg, integer=True)
    f: dict[tuple[str, int], int] = {}
    for r in inst.freight_requests:
        for a in pg.freight_arcs:
            f[(r.id, a)] = b.add_var(f"f[{r.id},{a}]", r.demand * g.arcs[a].cost, 0.0, 1.0, True)
    rows = common.rows
    rows["flow"] = {}
    vertices = pg.freight_vertices
    for r in inst.freight_requests:
        for v in vertices:
            coefs: dict[int, float] = {}
            for a in pg.out_arcs.get(v, []):
                coefs[f[(r.id, a)]] = coefs.get(f[(r.id, a)], 0.0) + 1.0
            for a in pg.in_arcs.get(v, []):
                coefs[f[(r.id, a)]] = coefs.get(f[(r.id, a)], 0.0) - 1.0
            rhs = float(xi(r, v))
            rows["flow"][(r.id, v)] = b.add_row(f"flow[{r.id},{v.label}]", coefs, rhs, rhs)
    rows["alpha"] = {}
    for fa, xc in common.x.items():
        coefs = {f[(r.id, fa)]: r.demand for r in inst.freight_requests}
        coefs[xc] = -inst.network.routes[g.arcs[fa].vehicle - 1].unit_capacity
        rows["alpha"][fa] = b.add_row(f"alpha[{fa}]", coefs, upper=0.0)
    return ArcMip(b.build(), common.y, common.x, common.g, f, rows)


@dataclass(frozen=True)
class Column:
    """A freight path from a request's origin to its destination over the freight arc set."""

    request: str
    arcs: tuple[int, ...]
    cost: float
    segments: tuple[int, ...]

    @property
    def key(self) -> tuple[int, ...]:
        return tuple(sorted(self.arcs))

    @property
    def is_dummy(self) -> bool:
        return len(self.arcs) == 1 and not self.segments


def make_column(pg: PreparedGraph, request: str, arcs) -> Column:
    arcs = tuple(int(a) for a in arcs)
    g = pg.graph
    cost = sum(g.arcs[a].cost for a in arcs)
    segs = tuple(a for a in arcs if g.arcs[a].cls == SEGMENT)
    return Column(request, arcs, cost, segs)


def dummy_column(pg: PreparedGraph, request: str) -> Column:
    a = pg.graph.dummy[request]
    assert pg.graph.arcs[a].cls == DUMMY
    return make_column(pg, request, (a,))


@dataclass
class DualValues:
    alpha: dict[int, float]
    eta: dict[str, float]
    gamma: float
    upsilon: dict[int, float]
    nu: dict[int, float]
    delta: dict[str, float]
    pi: dict[int, float]
    tau: dict[int, float]


@dataclass
class MasterState:
    pg: PreparedGraph
    ws: LpWorkspace
    y: dict[int, int]
    x: dict[int, int]
    g: dict[tuple[str, int], int]
    rows: dict
    pool: dict[str, list[Column]] = field(default_factory=dict)
    z: list[tuple[Column, int]] = field(default_factory=list)
    keys: set[tuple[str, tuple[int, ...]]] = field(default_factory=set)
    artificial: dict[str, int] = field(default_factory=dict)
    skipped: int = 0
    solution: LpSolution | None = None

    @property
    def n_columns(self) -> int:
        return len(self.z)

    def solve(self) -> LpSolution:
        sol = self.ws.solve()
        self.solution = sol
        return sol

    def lp(self) -> LinearProgram:
        return self.ws.snapshot()


def build_rmp(pg: PreparedGraph) -> MasterState:
    """Restricted master over the dummy path of every freight request."""
    inst = pg.instance
    b = LpBuilder()
    common = _common_part(b, pg, integer=False)
    rows = common.rows
    rows["alpha"] = {}
    for fa, xc in common.x.items():
        cap = inst.network.routes[pg.graph.arcs[fa].vehicle - 1].unit_capacity
        rows["alpha"][fa] = b.add_row(f"alpha[{fa}]", {xc: -cap}, upper=0.0)
    rows["eta"] = {r.id: b.add_row(f"eta[{r.id}]", {}, 1.0, 1.0) for r in inst.freight_requests}
    master = MasterState(pg, LpWorkspace(b.build()), common.y, common.x, common.g, rows)
    master.pool = {r.id: [] for r in inst.freight_requests}
    add_columns(master, [dummy_column(pg, r.id) for r in inst.freight_requests])
    # artificial convexity slack, fixed at zero until a branch forbids the dummy path
    big_m = artificial_cost(pg)
    for r in inst.freight_requests:
        master.artificial[r.id] = master.ws.add_column(big_m, 0.0, 0.0, [rows["eta"][r.id]], [1.0], name=f"art[{r.id}]")
    return master


def artificial_cost(pg: PreparedGraph) -> float:
    inst, g = pg.instance, pg.graph
    routing = sum(g.arcs[a].cost for a in pg.freight_arcs)
    scale = 1.0 + sum(inst.costs.penalty(r) + r.demand * routing for r in inst.freight_requests)
    scale += sum(inst.costs.vehicle_design_cost(h.id) * h.units for h in inst.network.routes)
    return 10.0 * scale


def add_columns(master: MasterState, columns) -> int:
    """Add new path variables; duplicates are skipped and counted. Returns the number added."""
    added = 0
    inst = master.pg.instance
    for col in columns:
        k = (col.request, col.key)
        if k in master.keys:
            master.skipped += 1
            continue
        q = inst.request(col.request).demand
        rows = [master.rows["eta"][col.request]]
        vals = [1.0]
        for s in col.segments:
            rows.append(master.rows["alpha"][s])
            vals.append(q)
        j = master.ws.add_column(q * col.cost, 0.0, INF, rows, vals, name=f"z[{col.request},{len(master.pool[col.request])}]")
        master.pool[col.request].append(col)
        master.z.append((col, j))
        master.keys.add(k)
        added += 1
    return added


def _signed(value: float, sign: int, name: str) -> float:
    """Clamp tiny sign violations; sign is +1 (>= 0), -1 (<= 0) or 0 (free)."""
    if sign == 0:
        return value
    if sign * value >= 0:
        return value
    if abs(value) <= SIGN_TOL:
        return 0.0
    raise FormulationError(f"dual {name} = {value:.3g} violates its sign")


def extract_duals(solution: LpSolution, master: MasterState) -> DualValues:
    if solution.status != LpStatus.OPTIMAL:
        raise FormulationError(f"cannot read duals from a {solution.status.value} solution")
    d = solution.row_dual
    R = master.rows

    def fam(key, sign):
        return {k: _signed(float(d[i]), sign, f"{key}[{k}]") for k, i in R[key].items()}

    return DualValues(
        alpha=fam("alpha", -1),
        eta=fam("eta", 0),
        gamma=_signed(float(d[R["gamma"]]), 1, "gamma"),
        upsilon=fam("upsilon", -1),
        nu=fam("nu", -1),
        delta=fam("delta", -1),
        pi=fam("pi", -1),
        tau=fam("tau", -1),
    )


def master_dual_objective(master: MasterState, duals: DualValues, solution: LpSolution | None = None) -> float:
    """Objective of the dual of the restricted master's relaxation."""
    inst, g = master.pg.instance, master.pg.graph
    routes = inst.network.routes
    total = sum(r.demand for r in inst.passenger_requests)
    val = sum(duals.eta.values()) + duals.gamma * inst.params.chi * total + sum(duals.delta.values())
    for a, u in duals.upsilon.items():
        val += u * routes[g.arcs[a].vehicle - 1].capacity
    for a, u in duals.nu.items():
        val += u * routes[g.arcs[a].vehicle - 1].capacity
    for h, t in duals.tau.items():
        val += t * routes[h - 1].units
    if solution is not None:
        # column bounds other than x >= 0 (branching decisions) carry duals too
        lo, hi = master.ws.bounds()
        cd = solution.col_dual
        with np.errstate(invalid="ignore"):
            val += float(np.sum(np.where((cd > 0) & (lo != 0), cd * lo, 0.0)))
            val += float(np.sum(np.where((cd < 0) & np.isfinite(hi), cd * hi, 0.0)))
    return val


def fix_and_integerize(master: MasterState) -> tuple[LinearProgram, np.ndarray]:
    """The master over its current pool with y, x integer and z binary.

    Also returns a feasible start: every request on its dummy path, no HTUs
    allocated and passenger flows taken from the last relaxation.
    """
    lp = master.lp()
    integer = np.zeros(lp.n_cols, dtype=bool)
    upper = lp.col_upper.copy()
    for j in list(master.y.values()) + list(master.x.values()):
        integer[j] = True
    for _, j in master.z:
        integer[j] = True
        upper[j] = min(upper[j], 1.0)
    for j in master.artificial.values():
        upper[j] = 0.0
    mip = lp.with_integer(integer).with_bounds(lp.col_lower, upper)
    start = np.zeros(lp.n_cols)
    if master.solution is not None and master.solution.status == LpStatus.OPTIMAL:
        for j in master.g.values():
            start[j] = master.solution.x[j]
    for col, j in master.z:
        if col.is_dummy:
            start[j] = 1.0
    # branching bounds may forbid the all-rejected point; clip so B&B can judge it
    start = np.clip(start, mip.col_lower, mip.col_upper)
    return mip, start
