"""Backend-neutral MILP models and solver backends.

Backends
--------
``reference``
    HiGHS through :func:`scipy.optimize.milp`.  Always available.
``exhaustive``
    Enumerates every integer assignment.  Only for tiny models; used as a
    test oracle.
``external``
    HiGHS through the ``highspy`` package, which honours warm starts.

The default backend can be chosen with the ``BLACKSTART_BACKEND`` environment
variable.  Every assignment a backend returns is re-checked against the stored
constraints before it is handed back.
"""

from __future__ import annotations

import enum
import math
import os
import time
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

FEAS_TOL = 1e-6
INT_TOL = 1e-5
DEFAULT_ENUMERATION_CAP = 2**24
BACKEND_ENV = "BLACKSTART_BACKEND"


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    TIMED_OUT = "TimedOut"
    ERROR = "Error"


BINARY, INTEGER, CONTINUOUS = "binary", "integer", "continuous"
LE, EQ, GE = "<=", "==", ">="


class SolverError(RuntimeError):
    """A solve ended without a usable verdict (backend error or timeout)."""

    def __init__(self, outcome: "SolveOutcome"):
        super().__init__(f"{outcome.status.value}: {outcome.message}")
        self.outcome = outcome


@dataclass
class Variable:
    id: int
    name: str
    kind: str
    lb: float
    ub: float

    @property
    def is_integer(self) -> bool:
        return self.kind != CONTINUOUS


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str


class MilpModel:
    """A minimisation MILP built incrementally.

    >>> m = MilpModel()
    >>> x = m.add_variable("x", BINARY)
    >>> _ = m.add_constraint({x: 1}, GE, 1)
    >>> m.set_objective({x: 1})
    >>> solve(m).objective
    1.0
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.warm_start: dict[int, float] | None = None
        self._by_name: dict[str, int] = {}

    def add_variable(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0, ub: float = math.inf) -> int:
        if kind not in (BINARY, INTEGER, CONTINUOUS):
            raise ValueError(f"unknown variable kind {kind!r}")
        if name in self._by_name:
            raise ValueError(f"duplicate variable name {name!r}")
        if kind == BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if kind != CONTINUOUS and not (math.isfinite(lb) and math.isfinite(ub)):
            raise ValueError(f"integer variable {name!r} needs finite bounds")
        vid = len(self.variables)
        self.variables.append(Variable(vid, name, kind, float(lb), float(ub)))
        self._by_name[name] = vid
        return vid

    def _coeffs(self, coeffs) -> dict[int, float]:
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        out: dict[int, float] = {}
        for vid, c in items:
            if not 0 <= vid < len(self.variables):
                raise KeyError(f"unknown variable id {vid}")
            out[vid] = out.get(vid, 0.0) + float(c)
        return {k: c for k, c in out.items() if c != 0.0}

    def add_constraint(self, coeffs, sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"unknown sense {sense!r}")
        cid = len(self.constraints)
        self.constraints.append(Constraint(self._coeffs(coeffs), sense, float(rhs), name or f"c{cid}"))
        return cid

    def set_objective(self, coeffs) -> None:
        self.objective = self._coeffs(coeffs)

    def set_warm_start(self, values: Mapping[int, float] | None) -> None:
        if values is None:
            self.warm_start = None
            return
        for vid in values:
            if not 0 <= vid < len(self.variables):
                raise KeyError(f"unknown variable id {vid}")
        self.warm_start = {int(k): float(v) for k, v in values.items()}

    def var_id(self, name: str) -> int:
        return self._by_name[name]

    def has_var(self, name: str) -> bool:
        return name in self._by_name

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def count(self, prefix: str) -> int:
        """Number of variables whose name starts with ``prefix``."""
        return sum(v.name.startswith(prefix) for v in self.variables)

    def objective_value(self, x) -> float:
        return float(sum(c * x[i] for i, c in self.objective.items()))

    def value_map(self, x) -> dict[str, float]:
        return {v.name: float(x[v.id]) for v in self.variables}

    def check(self, x, tol: float = FEAS_TOL) -> list[str]:
        """Names of violated bounds, integrality conditions and constraints."""
        bad = []
        for v in self.variables:
            val = x[v.id]
            if val < v.lb - tol or val > v.ub + tol:
                bad.append(f"bound {v.name}={val}")
            if v.is_integer and abs(val - round(val)) > INT_TOL:
                bad.append(f"integrality {v.name}={val}")
        for c in self.constraints:
            lhs = sum(a * x[i] for i, a in c.coeffs.items())
            if (c.sense == LE and lhs > c.rhs + tol) or (c.sense == GE and lhs < c.rhs - tol) or (
                c.sense == EQ and abs(lhs - c.rhs) > tol
            ):
                bad.append(f"constraint {c.name}: {lhs} {c.sense} {c.rhs}")
        return bad

    # -- matrix form -----------------------------------------------------
    def matrices(self):
        n = self.num_variables
        rows, cols, vals = [], [], []
        lo = np.empty(self.num_constraints)
        hi = np.empty(self.num_constraints)
        for r, c in enumerate(self.constraints):
            for i, a in c.coeffs.items():
                rows.append(r)
                cols.append(i)
                vals.append(a)
            lo[r] = c.rhs if c.sense in (GE, EQ) else -np.inf
            hi[r] = c.rhs if c.sense in (LE, EQ) else np.inf
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(self.num_constraints, n))
        cost = np.zeros(n)
        for i, a in self.objective.items():
            cost[i] = a
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        integrality = np.array([1 if v.is_integer else 0 for v in self.variables])
        return cost, A, lo, hi, lb, ub, integrality

    def to_lp(self) -> str:
        """CPLEX-LP text of the model, for debugging."""

        def expr(coeffs):
            if not coeffs:
                return "0 " + (self.variables[0].name if self.variables else "")
            parts = []
            for i, a in coeffs.items():
                sign = "-" if a < 0 else "+"
                parts.append(f"{sign} {abs(a):.12g} {self.variables[i].name}")
            text = " ".join(parts)
            return text[2:] if text.startswith("+ ") else text

        out = [f"\\ {self.name}", "Minimize", f" obj: {expr(self.objective)}", "Subject To"]
        for c in self.constraints:
            sense = "=" if c.sense == EQ else c.sense
            out.append(f" {c.name}: {expr(c.coeffs)} {sense} {c.rhs:.12g}")
        out.append("Bounds")
        for v in self.variables:
            ub = "+inf" if math.isinf(v.ub) else f"{v.ub:.12g}"
            lb = "-inf" if math.isinf(v.lb) else f"{v.lb:.12g}"
            out.append(f" {lb} <= {v.name} <= {ub}")
        for label, kind in (("Binaries", BINARY), ("Generals", INTEGER)):
            names = [v.name for v in self.variables if v.kind == kind]
            if names:
                out.append(label)
                out.extend(f" {n}" for n in names)
        out.append("End")
        return "\n".join(out) + "\n"


@dataclass
class SolveOutcome:
    status: Status
    objective: float | None = None
    values: np.ndarray | None = None
    wall_time: float = 0.0
    message: str = ""
    backend: str = ""

    @property
    def has_solution(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.FEASIBLE)


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

def _trivial(model: MilpModel) -> SolveOutcome:
    x = np.zeros(0)
    if model.check(x):
        return SolveOutcome(Status.INFEASIBLE, message="constant constraint violated")
    return SolveOutcome(Status.OPTIMAL, 0.0, x)


def _solve_scipy(model: MilpModel, time_limit: float | None) -> SolveOutcome:
    if model.num_variables == 0:
        return _trivial(model)
    cost, A, lo, hi, lb, ub, integrality = model.matrices()
    options = {"disp": False, "mip_rel_gap": 0.0}
    if time_limit is not None:
        options["time_limit"] = max(float(time_limit), 1e-3)
    constraints = [LinearConstraint(A, lo, hi)] if model.num_constraints else []
    res = milp(cost, constraints=constraints, integrality=integrality, bounds=Bounds(lb, ub), options=options)
    if res.status == 0:
        return SolveOutcome(Status.OPTIMAL, float(res.fun), np.asarray(res.x), message=res.message)
    if res.status == 1:
        if res.x is not None:
            return SolveOutcome(Status.FEASIBLE, float(res.fun), np.asarray(res.x), message=res.message)
        return SolveOutcome(Status.TIMED_OUT, message=res.message)
    if res.status == 2:
        return SolveOutcome(Status.INFEASIBLE, message=res.message)
    return SolveOutcome(Status.ERROR, message=f"scipy.milp status {res.status}: {res.message}")


def _solve_highspy(model: MilpModel, time_limit: float | None) -> SolveOutcome:
    try:
        import highspy
    except ImportError:
        return SolveOutcome(Status.ERROR, message="external backend unavailable: install the 'highspy' package")
    if model.num_variables == 0:
        return _trivial(model)
    cost, A, lo, hi, lb, ub, integrality = model.matrices()
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("threads", 1)
    if time_limit is not None:
        h.setOptionValue("time_limit", max(float(time_limit), 1e-3))
    inf = highspy.kHighsInf
    lp = highspy.HighsLp()
    lp.num_col_ = model.num_variables
    lp.num_row_ = model.num_constraints
    lp.col_cost_ = cost
    lp.col_lower_ = np.where(np.isinf(lb), -inf, lb)
    lp.col_upper_ = np.where(np.isinf(ub), inf, ub)
    lp.row_lower_ = np.where(np.isinf(lo), -inf, lo)
    lp.row_upper_ = np.where(np.isinf(hi), inf, hi)
    csc = A.tocsc()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = csc.indptr
    lp.a_matrix_.index_ = csc.indices
    lp.a_matrix_.value_ = csc.data
    lp.integrality_ = [highspy.HighsVarType.kInteger if k else highspy.HighsVarType.kContinuous for k in integrality]
    h.passModel(lp)
    if model.warm_start:
        sol = highspy.HighsSolution()
        start = np.clip(np.zeros(model.num_variables), lb, ub)
        for i, v in model.warm_start.items():
            start[i] = v
        sol.col_value = list(start)
        h.setSolution(sol)
    h.run()
    status = h.getModelStatus()
    ms = highspy.HighsModelStatus
    has_x = h.getInfo().primal_solution_status == 2
    x = np.array(h.getSolution().col_value) if has_x else None
    if status == ms.kOptimal:
        return SolveOutcome(Status.OPTIMAL, model.objective_value(x), x)
    if status == ms.kInfeasible:
        return SolveOutcome(Status.INFEASIBLE, message="infeasible")
    if status in (ms.kTimeLimit, ms.kIterationLimit, ms.kSolutionLimit, ms.kInterrupt):
        if x is not None:
            return SolveOutcome(Status.FEASIBLE, model.objective_value(x), x, message=str(status))
        return SolveOutcome(Status.TIMED_OUT, message=str(status))
    return SolveOutcome(Status.ERROR, message=f"highspy status {status}")


def exhaustive_solve(model: MilpModel, cap: int = DEFAULT_ENUMERATION_CAP, time_limit: float | None = None) -> SolveOutcome:
    """Exact optimum by enumerating every integer assignment.

    Continuous variables are allowed only when each constraint mentions at most
    one of them; each one then takes the bound-optimal value implied by the
    integer part (this covers a restoration-time variable).
    """
    start = time.perf_counter()
    ints = [v for v in model.variables if v.is_integer]
    conts = [v for v in model.variables if not v.is_integer]
    sizes = [int(math.floor(v.ub + INT_TOL) - math.ceil(v.lb - INT_TOL) + 1) for v in ints]
    if any(s <= 0 for s in sizes):
        return SolveOutcome(Status.INFEASIBLE, message="empty integer domain")
    total = math.prod(sizes)
    if total > cap:
        return SolveOutcome(Status.ERROR, message=f"enumeration size {total} exceeds cap {cap}")

    cont_pos = {v.id: k for k, v in enumerate(conts)}
    int_pos = {v.id: k for k, v in enumerate(ints)}
    m = model.num_constraints
    A_int = np.zeros((m, len(ints)))
    A_cont = np.zeros((m, len(conts)))
    rhs = np.empty(m)
    sense = np.empty(m, dtype=object)
    for r, c in enumerate(model.constraints):
        for i, a in c.coeffs.items():
            if i in int_pos:
                A_int[r, int_pos[i]] = a
            else:
                A_cont[r, cont_pos[i]] = a
        rhs[r] = c.rhs
        sense[r] = c.sense
    if m and np.any((A_cont != 0).sum(axis=1) > 1):
        return SolveOutcome(Status.ERROR, message="a constraint couples several continuous variables")
    c_int = np.array([model.objective.get(v.id, 0.0) for v in ints])
    c_cont = np.array([model.objective.get(v.id, 0.0) for v in conts])
    lows = np.array([math.ceil(v.lb - INT_TOL) for v in ints], dtype=float)
    is_le, is_ge, is_eq = sense == LE, sense == GE, sense == EQ
    pure = (A_cont != 0).sum(axis=1) == 0 if m else np.zeros(0, bool)

    best_obj, best_x = math.inf, None
    chunk = 1 << 15
    radix = np.array(sizes, dtype=np.int64)
    for lo_idx in range(0, total, chunk):
        if time_limit is not None and time.perf_counter() - start > time_limit:
            status = Status.FEASIBLE if best_x is not None else Status.TIMED_OUT
            return _finish(model, status, best_obj, best_x, start, "time limit")
        idx = np.arange(lo_idx, min(lo_idx + chunk, total), dtype=np.int64)
        X = np.empty((idx.size, len(ints)))
        rem = idx.copy()
        for k in range(len(ints) - 1, -1, -1):
            X[:, k] = rem % radix[k] + lows[k]
            rem //= radix[k]
        lhs = X @ A_int.T if m else np.zeros((idx.size, 0))
        ok = np.ones(idx.size, dtype=bool)
        if m:
            slack = rhs - lhs
            pure_rows = pure
            ok &= np.all(np.where(is_le[pure_rows], slack[:, pure_rows] >= -FEAS_TOL, True), axis=1)
            ok &= np.all(np.where(is_ge[pure_rows], slack[:, pure_rows] <= FEAS_TOL, True), axis=1)
            ok &= np.all(np.where(is_eq[pure_rows], np.abs(slack[:, pure_rows]) <= FEAS_TOL, True), axis=1)
        Y = np.zeros((idx.size, len(conts)))
        for k, v in enumerate(conts):
            lo_b = np.full(idx.size, v.lb)
            hi_b = np.full(idx.size, v.ub)
            for r in np.nonzero(A_cont[:, k])[0]:
                a = A_cont[r, k]
                bound = (rhs[r] - lhs[:, r]) / a
                upper = (sense[r] == LE) == (a > 0)
                if sense[r] == EQ:
                    lo_b = np.maximum(lo_b, bound)
                    hi_b = np.minimum(hi_b, bound)
                elif upper:
                    hi_b = np.minimum(hi_b, bound)
                else:
                    lo_b = np.maximum(lo_b, bound)
            ok &= lo_b <= hi_b + FEAS_TOL
            if c_cont[k] > 0:
                val = lo_b
            elif c_cont[k] < 0:
                val = hi_b
            else:
                val = np.where(np.isfinite(lo_b), lo_b, np.where(np.isfinite(hi_b), hi_b, 0.0))
            if np.any(ok & ~np.isfinite(val)):
                return SolveOutcome(Status.ERROR, message=f"unbounded continuous variable {v.name}")
            Y[:, k] = val
        if not ok.any():
            continue
        obj = X @ c_int + (Y @ c_cont if len(conts) else 0.0)
        obj = np.where(ok, obj, np.inf)
        k = int(np.argmin(obj))
        if obj[k] < best_obj - 1e-12:
            best_obj = float(obj[k])
            x = np.zeros(model.num_variables)
            for v, val in zip(ints, X[k]):
                x[v.id] = val
            for v, val in zip(conts, Y[k]):
                x[v.id] = val
            best_x = x
    status = Status.OPTIMAL if best_x is not None else Status.INFEASIBLE
    return _finish(model, status, best_obj, best_x, start, "")


def _finish(model, status, obj, x, start, msg):
    return SolveOutcome(status, obj if x is not None else None, x, time.perf_counter() - start, msg)


BACKENDS = {
    "reference": _solve_scipy,
    "external": _solve_highspy,
    "exhaustive": lambda model, time_limit: exhaustive_solve(model, time_limit=time_limit),
}


def default_backend() -> str:
    return os.environ.get(BACKEND_ENV, "reference")


def solve(model: MilpModel, backend: str | None = None, time_limit: float | None = None) -> SolveOutcome:
    """Solve ``model`` with the named backend and verify the returned assignment."""
    name = backend or default_backend()
    start = time.perf_counter()
    if name not in BACKENDS:
        return SolveOutcome(Status.ERROR, message=f"unknown backend {name!r}; choose from {sorted(BACKENDS)}", backend=name)
    if time_limit is not None and time_limit <= 0:
        return SolveOutcome(Status.TIMED_OUT, message="no time left", backend=name)
    try:
        out = BACKENDS[name](model, time_limit)
    except Exception as e:  # backend crashes become Error outcomes
        out = SolveOutcome(Status.ERROR, message=f"{type(e).__name__}: {e}")
    out.backend = name
    out.wall_time = time.perf_counter() - start
    if out.has_solution:
        x = np.array(out.values, dtype=float)
        for v in model.variables:
            if v.is_integer:
                x[v.id] = round(x[v.id])
        bad = model.check(x)
        if bad:
            return SolveOutcome(Status.ERROR, message="backend assignment fails verification: " + "; ".join(bad[:5]),
                                wall_time=out.wall_time, backend=name)
        out.values = x
        out.objective = model.objective_value(x)
    return out
