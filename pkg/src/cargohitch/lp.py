"""Linear programs, a HiGHS-backed simplex interface and best-first branch-and-bound."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import highspy
import numpy as np
from scipy.sparse import csc_matrix

INF = math.inf
PRIMAL_TOL = 1e-7
INT_TOL = 1e-6


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"
    ERROR = "error"


class LpError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearProgram:
    """``min c'x + offset`` s.t. ``row_lower <= A x <= row_upper``, ``col_lower <= x <= col_upper``."""

    cost: np.ndarray
    col_lower: np.ndarray
    col_upper: np.ndarray
    matrix: csc_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    integer: np.ndarray
    col_names: tuple[str, ...] = ()
    row_names: tuple[str, ...] = ()
    offset: float = 0.0

    def __post_init__(self):
        m, n = self.matrix.shape
        if not (len(self.cost) == len(self.col_lower) == len(self.col_upper) == len(self.integer) == n):
            raise LpError("column arrays disagree with matrix width")
        if not (len(self.row_lower) == len(self.row_upper) == m):
            raise LpError("row arrays disagree with matrix height")
        if np.any(self.col_lower > self.col_upper) or np.any(self.row_lower > self.row_upper):
            raise LpError("inconsistent bounds")
        if not np.all(np.isfinite(self.cost)):
            raise LpError("objective coefficients must be finite")

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(self.cost @ x) + self.offset

    def relaxed(self) -> "LinearProgram":
        return _replace(self, integer=np.zeros(self.n_cols, dtype=bool))

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LinearProgram":
        return _replace(self, col_lower=np.asarray(lower, float), col_upper=np.asarray(upper, float))

    def with_integer(self, integer: np.ndarray) -> "LinearProgram":
        return _replace(self, integer=np.asarray(integer, bool))

    def is_feasible(self, x: np.ndarray, tol: float = PRIMAL_TOL, int_tol: float = INT_TOL) -> bool:
        if primal_residual(self, x) > tol:
            return False
        xi = x[self.integer]
        return bool(np.all(np.abs(xi - np.round(xi)) <= int_tol))


def _replace(lp: LinearProgram, **changes) -> LinearProgram:
    return replace(lp, **changes)


class LpBuilder:
    """Accumulate variables and rows, then freeze into a LinearProgram."""

    def __init__(self):
        self.cost: list[float] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.integer: list[bool] = []
        self.col_names: list[str] = []
        self.row_names: list[str] = []
        self.row_lower: list[float] = []
        self.row_upper: list[float] = []
        self._entries: list[tuple[int, int, float]] = []
        self.offset = 0.0

    def add_var(self, name: str, cost: float = 0.0, lower: float = 0.0, upper: float = INF, integer: bool = False) -> int:
        self.cost.append(float(cost))
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.integer.append(bool(integer))
        self.col_names.append(name)
        return len(self.cost) - 1

    def add_row(self, name: str, coefs: Mapping[int, float] | Iterable[tuple[int, float]], lower: float = -INF, upper: float = INF) -> int:
        i = len(self.row_names)
        items = coefs.items() if isinstance(coefs, Mapping) else coefs
        for j, v in items:
            if not 0 <= j < len(self.cost):
                raise LpError(f"row {name} references unknown column {j}")
            if v != 0.0:
                self._entries.append((i, j, float(v)))
        self.row_names.append(name)
        self.row_lower.append(float(lower))
        self.row_upper.append(float(upper))
        return i

    def build(self) -> LinearProgram:
        m, n = len(self.row_names), len(self.cost)
        if self._entries:
            rows, cols, vals = zip(*self._entries)
        else:
            rows, cols, vals = (), (), ()
        mat = csc_matrix((vals, (rows, cols)), shape=(m, n))
        mat.sum_duplicates()
        return LinearProgram(
            cost=np.array(self.cost, float),
            col_lower=np.array(self.lower, float),
            col_upper=np.array(self.upper, float),
            matrix=mat,
            row_lower=np.array(self.row_lower, float),
            row_upper=np.array(self.row_upper, float),
            integer=np.array(self.integer, bool),
            col_names=tuple(self.col_names),
            row_names=tuple(self.row_names),
            offset=self.offset,
        )


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray
    row_dual: np.ndarray
    col_dual: np.ndarray
    objective: float
    basis: tuple[list, list] | None = None
    iterations: int = 0


_STATUS = {
    highspy.HighsModelStatus.kOptimal: LpStatus.OPTIMAL,
    highspy.HighsModelStatus.kInfeasible: LpStatus.INFEASIBLE,
    highspy.HighsModelStatus.kUnbounded: LpStatus.UNBOUNDED,
    highspy.HighsModelStatus.kUnboundedOrInfeasible: LpStatus.INFEASIBLE,
    highspy.HighsModelStatus.kTimeLimit: LpStatus.LIMIT,
    highspy.HighsModelStatus.kIterationLimit: LpStatus.LIMIT,
}


def _inf(a) -> np.ndarray:
    return np.clip(np.asarray(a, float), -highspy.kHighsInf, highspy.kHighsInf)


class LpWorkspace:
    """A simplex solver state that keeps its basis across bound changes and added columns."""

    def __init__(self, lp: LinearProgram, time_limit: float | None = None):
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("solver", "simplex")
        self.h.setOptionValue("presolve", "off")
        self.h.setOptionValue("random_seed", 0)
        self.h.setOptionValue("threads", 1)
        if time_limit is not None:
            self.h.setOptionValue("time_limit", float(time_limit))
        model = highspy.HighsLp()
        model.num_col_ = lp.n_cols
        model.num_row_ = lp.n_rows
        model.col_cost_ = lp.cost
        model.col_lower_ = _inf(lp.col_lower)
        model.col_upper_ = _inf(lp.col_upper)
        model.row_lower_ = _inf(lp.row_lower)
        model.row_upper_ = _inf(lp.row_upper)
        model.offset_ = lp.offset
        mat = lp.matrix.tocsc()
        model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        model.a_matrix_.start_ = mat.indptr.astype(np.int32)
        model.a_matrix_.index_ = mat.indices.astype(np.int32)
        model.a_matrix_.value_ = mat.data.astype(float)
        self.h.passModel(model)
        self.offset = lp.offset
        self.n_rows = lp.n_rows
        self._cost = list(lp.cost)
        self._lower = list(lp.col_lower)
        self._upper = list(lp.col_upper)
        self._cols: list[tuple[np.ndarray, np.ndarray]] = [
            (mat.indices[mat.indptr[j] : mat.indptr[j + 1]].copy(), mat.data[mat.indptr[j] : mat.indptr[j + 1]].copy())
            for j in range(lp.n_cols)
        ]
        self._row_lower = lp.row_lower.copy()
        self._row_upper = lp.row_upper.copy()
        self._integer = list(lp.integer)
        self._col_names = list(lp.col_names) or [f"c{j}" for j in range(lp.n_cols)]
        self._row_names = list(lp.row_names) or [f"r{i}" for i in range(lp.n_rows)]

    @property
    def n_cols(self) -> int:
        return len(self._cost)

    def add_column(self, cost: float, lower: float, upper: float, rows: Sequence[int], values: Sequence[float], name: str = "", integer: bool = False) -> int:
        rows = np.asarray(rows, dtype=np.int32)
        values = np.asarray(values, dtype=float)
        self.h.addCol(float(cost), float(lower), float(_inf(np.array([upper]))[0]), len(rows), rows, values)
        self._cost.append(float(cost))
        self._lower.append(float(lower))
        self._upper.append(float(upper))
        self._cols.append((rows, values))
        self._integer.append(integer)
        self._col_names.append(name or f"c{len(self._cost) - 1}")
        return len(self._cost) - 1

    def set_bounds(self, cols: Sequence[int], lower: Sequence[float], upper: Sequence[float]) -> None:
        cols = np.asarray(cols, dtype=np.int32)
        if len(cols) == 0:
            return
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        self.h.changeColsBounds(len(cols), cols, _inf(lower), _inf(upper))
        for j, lo, hi in zip(cols, lower, upper):
            self._lower[j] = float(lo)
            self._upper[j] = float(hi)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self._lower), np.array(self._upper)

    def set_time_limit(self, seconds: float) -> None:
        self.h.setOptionValue("time_limit", float(max(seconds, 1e-3)))

    def solve(self) -> LpSolution:
        run_status = self.h.run()
        n = self.n_cols
        if run_status == highspy.HighsStatus.kError:
            return LpSolution(LpStatus.ERROR, np.zeros(n), np.zeros(self.n_rows), np.zeros(n), math.nan)
        status = _STATUS.get(self.h.getModelStatus(), LpStatus.ERROR)
        sol = self.h.getSolution()
        info = self.h.getInfo()
        x = np.array(sol.col_value, float) if sol.value_valid else np.zeros(n)
        rd = np.array(sol.row_dual, float) if sol.dual_valid else np.zeros(self.n_rows)
        cd = np.array(sol.col_dual, float) if sol.dual_valid else np.zeros(n)
        obj = info.objective_function_value if status == LpStatus.OPTIMAL else math.nan
        basis = None
        b = self.h.getBasis()
        if b.valid:
            basis = (list(b.col_status), list(b.row_status))
        return LpSolution(status, x, rd, cd, float(obj), basis, int(info.simplex_iteration_count))

    def set_basis(self, basis: tuple[list, list]) -> None:
        cols, rows = basis
        hb = highspy.HighsBasis()
        cols = list(cols) + [highspy.HighsBasisStatus.kLower] * (self.n_cols - len(cols))
        hb.col_status = cols
        hb.row_status = list(rows)
        hb.valid = True
        self.h.setBasis(hb)

    def snapshot(self) -> LinearProgram:
        n = self.n_cols
        indptr = np.zeros(n + 1, dtype=np.int64)
        for j, (r, _) in enumerate(self._cols):
            indptr[j + 1] = indptr[j] + len(r)
        indices = np.concatenate([r for r, _ in self._cols]) if n else np.zeros(0, np.int32)
        data = np.concatenate([v for _, v in self._cols]) if n else np.zeros(0)
        mat = csc_matrix((data, indices, indptr), shape=(self.n_rows, n))
        return LinearProgram(
            cost=np.array(self._cost),
            col_lower=np.array(self._lower),
            col_upper=np.array(self._upper),
            matrix=mat,
            row_lower=self._row_lower.copy(),
            row_upper=self._row_upper.copy(),
            integer=np.array(self._integer, bool),
            col_names=tuple(self._col_names),
            row_names=tuple(self._row_names),
            offset=self.offset,
        )


def solve_lp(lp: LinearProgram, warmstart: tuple[list, list] | None = None, time_limit: float | None = None) -> LpSolution:
    """Solve the continuous relaxation of ``lp`` by simplex. ``warmstart`` is a basis."""
    ws = LpWorkspace(lp.relaxed(), time_limit)
    if warmstart is not None:
        ws.set_basis(warmstart)
    return ws.solve()


def primal_residual(lp: LinearProgram, x: np.ndarray) -> float:
    ax = lp.matrix @ x
    viol = [
        np.maximum(lp.row_lower - ax, 0.0),
        np.maximum(ax - lp.row_upper, 0.0),
        np.maximum(lp.col_lower - x, 0.0),
        np.maximum(x - lp.col_upper, 0.0),
    ]
    return float(max((v.max() if len(v) else 0.0) for v in viol))


def complementarity_residual(lp: LinearProgram, sol: LpSolution) -> float:
    """Largest |dual| x (distance to the bound the dual sign points at)."""
    ax = lp.matrix @ sol.x
    worst = 0.0
    with np.errstate(invalid="ignore"):
        return max(worst, *_cs_terms(lp, sol, ax))


def _cs_terms(lp, sol, ax):
    worst = [0.0]
    for act, lo, hi, dual in ((ax, lp.row_lower, lp.row_upper, sol.row_dual), (sol.x, lp.col_lower, lp.col_upper, sol.col_dual)):
        pos = np.where(dual > 0, dual * np.where(np.isfinite(lo), act - lo, INF), 0.0)
        neg = np.where(dual < 0, -dual * np.where(np.isfinite(hi), hi - act, INF), 0.0)
        if len(dual):
            worst += [float(np.nan_to_num(pos).max()), float(np.nan_to_num(neg).max())]
    return worst


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    def part(dual, lo, hi):
        with np.errstate(invalid="ignore"):
            return float(np.sum(np.where(dual > 0, dual * lo, 0.0)) + np.sum(np.where(dual < 0, dual * hi, 0.0)))

    return part(sol.row_dual, lp.row_lower, lp.row_upper) + part(sol.col_dual, lp.col_lower, lp.col_upper) + lp.offset


@dataclass
class BnbConfig:
    time_limit: float = INF
    gap_tolerance: float = 1e-9
    integrality_tolerance: float = INT_TOL
    start: np.ndarray | None = None
    node_limit: int | None = None

    def __post_init__(self):
        if not (self.gap_tolerance > 0 and self.integrality_tolerance > 0 and self.time_limit > 0):
            raise LpError("branch-and-bound tolerances and limits must be positive")


@dataclass
class MipSolution:
    status: str
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    history: list[tuple[float, float]] = field(default_factory=list)


def mip_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return INF
    return max(incumbent - bound, 0.0) / max(abs(incumbent), 1e-10)


def most_fractional(x: np.ndarray, candidates: np.ndarray, tol: float = INT_TOL) -> int | None:
    """Lowest-index candidate maximizing the distance to the nearest integer."""
    best, best_j = tol, None
    for j in candidates:
        f = x[j] - math.floor(x[j])
        d = min(f, 1.0 - f)
        if d > best:
            best, best_j = d, int(j)
    return best_j


def branch_and_bound(mip: LinearProgram, config: BnbConfig | None = None, **kwargs) -> MipSolution:
    """Best-first branch-and-bound on the integer columns of ``mip``."""
    cfg = config or BnbConfig(**kwargs)
    t0 = time.monotonic()
    ints = np.flatnonzero(mip.integer)
    ws = LpWorkspace(mip.relaxed())
    root_lo, root_hi = mip.col_lower.copy(), mip.col_upper.copy()
    # integer bounds can be tightened to integers up front
    root_lo[ints] = np.ceil(root_lo[ints] - cfg.integrality_tolerance)
    root_hi[ints] = np.floor(root_hi[ints] + cfg.integrality_tolerance)

    inc_x, inc_obj = None, INF
    if cfg.start is not None and len(cfg.start) == mip.n_cols:
        start = np.asarray(cfg.start, float)
        if mip.is_feasible(start, int_tol=cfg.integrality_tolerance):
            inc_x, inc_obj = start.copy(), mip.objective(start)

    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = [(-INF, 0, root_lo, root_hi)]
    seq, nodes = 1, 0
    history: list[tuple[float, float]] = []
    status = "optimal"
    last_bound = -INF

    def global_bound():
        return min(heap[0][0], inc_obj) if heap else inc_obj

    while heap:
        if time.monotonic() - t0 > cfg.time_limit or (cfg.node_limit is not None and nodes >= cfg.node_limit):
            status = "time_limit"
            break
        lb, _, lo, hi = heapq.heappop(heap)
        if mip_gap(inc_obj, lb) <= cfg.gap_tolerance:
            continue
        nodes += 1
        if np.any(lo > hi):
            continue
        ws.set_bounds(ints, lo[ints], hi[ints])
        remaining = cfg.time_limit - (time.monotonic() - t0)
        if math.isfinite(remaining):
            ws.set_time_limit(remaining)
        sol = ws.solve()
        if sol.status == LpStatus.UNBOUNDED and nodes == 1:
            return MipSolution("unbounded", None, -INF, -INF, INF, nodes, history)
        if sol.status == LpStatus.LIMIT:
            heapq.heappush(heap, (lb, seq, lo, hi))
            seq += 1
            status = "time_limit"
            break
        if sol.status != LpStatus.OPTIMAL:
            if sol.status == LpStatus.ERROR:
                raise LpError("simplex failed inside branch-and-bound")
            continue
        node_obj = max(sol.objective, lb)
        if mip_gap(inc_obj, node_obj) <= cfg.gap_tolerance:
            continue
        j = most_fractional(sol.x, ints, cfg.integrality_tolerance)
        if j is None:
            x = sol.x.copy()
            x[ints] = np.round(x[ints])
            inc_x, inc_obj = x, mip.objective(x)
        else:
            v = sol.x[j]
            down_hi = hi.copy()
            down_hi[j] = math.floor(v)
            up_lo = lo.copy()
            up_lo[j] = math.ceil(v)
            heapq.heappush(heap, (node_obj, seq, lo, down_hi))
            heapq.heappush(heap, (node_obj, seq + 1, up_lo, hi))
            seq += 2
        bound = global_bound()
        last_bound = max(last_bound, bound)
        history.append((last_bound, inc_obj))

    if status == "optimal":
        bound = inc_obj
    else:
        bound = max(last_bound, global_bound()) if heap else inc_obj
        bound = min(bound, inc_obj)
    if inc_x is None:
        if status == "optimal":
            return MipSolution("infeasible", None, INF, INF, INF, nodes, history)
        return MipSolution("time_limit", None, INF, bound, INF, nodes, history)
    return MipSolution(status, inc_x, inc_obj, bound, mip_gap(inc_obj, bound), nodes, history)


def _fmt(v: float) -> str:
    return np.format_float_positional(v, precision=12, unique=False, fractional=False, trim="-")


def _term(coef: float, name: str) -> str:
    return f"{'-' if coef < 0 else '+'} {_fmt(abs(coef))} {name}"


def write_lp(lp: LinearProgram, path: str | Path | None = None) -> str:
    """CPLEX LP text for ``lp``; variables are named c<j>, rows r<i>."""
    lines = ["\\ exported linear program", "Minimize", " obj: " + " ".join(_term(c, f"c{j}") for j, c in enumerate(lp.cost) if c != 0.0)]
    if lp.offset:
        lines[-1] += f" {_term(lp.offset, 'c_offset')}"
    lines.append("Subject To")
    mat = lp.matrix.tocsr()
    for i in range(lp.n_rows):
        cols, vals = mat.indices[mat.indptr[i] : mat.indptr[i + 1]], mat.data[mat.indptr[i] : mat.indptr[i + 1]]
        expr = " ".join(_term(v, f"c{j}") for j, v in sorted(zip(cols, vals))) or "0 c0"
        lo, hi = lp.row_lower[i], lp.row_upper[i]
        if lo == hi:
            lines.append(f" r{i}: {expr} = {_fmt(lo)}")
            continue
        if math.isfinite(lo):
            lines.append(f" r{i}_lo: {expr} >= {_fmt(lo)}")
        if math.isfinite(hi):
            lines.append(f" r{i}_hi: {expr} <= {_fmt(hi)}")
    lines.append("Bounds")
    if lp.offset:
        lines.append(" c_offset = 1")
    for j in range(lp.n_cols):
        lo, hi = lp.col_lower[j], lp.col_upper[j]
        lo_s = "-inf" if not math.isfinite(lo) else _fmt(lo)
        hi_s = "+inf" if not math.isfinite(hi) else _fmt(hi)
        lines.append(f" {lo_s} <= c{j} <= {hi_s}")
    ints = np.flatnonzero(lp.integer)
    if len(ints):
        lines.append("General")
        lines.append(" " + " ".join(f"c{j}" for j in ints))
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
