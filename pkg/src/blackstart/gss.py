"""Generator startup sequencing on a single black-start island."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .grid import BsCurve, Instance, NbsParams, capacity_at
from .milp import BINARY, CONTINUOUS, EQ, GE, LE, MilpModel, SolverError, Status, solve

NEG_TOL = 1e-9


class HorizonTooSmall(RuntimeError):
    """The aggregated startup problem has no feasible schedule within the horizon."""


@dataclass(frozen=True)
class IslandView:
    """One black-start curve, the units it must start, and a horizon."""

    bs_curve: BsCurve
    units: Mapping[int, NbsParams]
    horizon: int
    windows: Mapping[int, tuple[int, int]] = field(default_factory=dict)
    bs: int | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @classmethod
    def from_instance(cls, instance: Instance, members: Iterable[int], horizon: int, bs: int | None = None) -> "IslandView":
        members = set(members)
        if bs is None:
            in_island = [j for j in instance.bs_buses if j in members]
            if len(in_island) != 1:
                raise ValueError(f"island must hold exactly one BS bus, found {in_island}")
            bs = in_island[0]
        units = {b: instance.unit_params(b, horizon) for b in instance.unit_buses if b in members}
        windows = {b: w for b, w in instance.critical_windows.items() if b in units}
        return cls(instance.bs_generators[bs], units, horizon, windows, bs)

    @property
    def unit_buses(self) -> list[int]:
        return sorted(self.units)


@dataclass(frozen=True)
class Schedule:
    start: Mapping[int, int]
    rt: int
    optimal: bool = True

    @classmethod
    def from_starts(cls, start: Mapping[int, int], optimal: bool = True) -> "Schedule":
        start = dict(sorted(start.items()))
        return cls(start, max(start.values(), default=0), optimal)


@dataclass(frozen=True)
class ScheduleCheck:
    trace: np.ndarray
    violation: str | None = None
    period: int | None = None

    @property
    def ok(self) -> bool:
        return self.violation is None


def unit_trace(params: NbsParams, start: int, horizon: int) -> np.ndarray:
    """Contribution of one unit to every period 1..horizon when started at ``start``."""
    out = np.zeros(horizon)
    for t in range(start, horizon + 1):
        out[t - 1] = capacity_at(params, t - start + 1)
    return out


def validate_schedule(island: IslandView, schedule: Schedule) -> ScheduleCheck:
    """Total-capacity trace of ``schedule`` and the first violated condition, if any."""
    T = island.horizon
    trace = island.bs_curve.values(T)
    missing = set(island.units) - set(schedule.start)
    if missing:
        return ScheduleCheck(trace, f"units without a start: {sorted(missing)}")
    for b, s in schedule.start.items():
        if b not in island.units:
            return ScheduleCheck(trace, f"start given for unknown unit {b}")
        if not 1 <= s <= T:
            return ScheduleCheck(trace, f"unit {b} starts at {s}, outside 1..{T}", s)
        trace = trace + unit_trace(island.units[b], s, T)
    neg = np.nonzero(trace < -NEG_TOL)[0]
    if neg.size:
        t = int(neg[0]) + 1
        return ScheduleCheck(trace, f"negative total capacity {trace[t - 1]:g} MW at period {t}", t)
    for b, (et, lt) in island.windows.items():
        s = schedule.start[b]
        if not et <= s <= lt:
            return ScheduleCheck(trace, f"unit {b} starts at {s}, outside window [{et},{lt}]", s)
    if schedule.rt != max(schedule.start.values(), default=0):
        return ScheduleCheck(trace, "rt differs from the last start period")
    return ScheduleCheck(trace)


# ---------------------------------------------------------------------------
# MILP model
# ---------------------------------------------------------------------------

def build_gss_model(island: IslandView) -> MilpModel:
    T = island.horizon
    m = MilpModel("gss")
    s = {(i, t): m.add_variable(f"s_{i}_{t}", BINARY) for i in island.unit_buses for t in range(1, T + 1)}
    rt = m.add_variable("RT", CONTINUOUS, 0.0, T)
    for i in island.unit_buses:
        m.add_constraint({s[i, t]: 1 for t in range(1, T + 1)}, EQ, 1, f"once_{i}")
    r = island.bs_curve.values(T)
    for t in range(1, T + 1):
        row = {
            s[i, tm]: capacity_at(island.units[i], t - tm + 1)
            for i in island.unit_buses
            for tm in range(1, t + 1)
        }
        m.add_constraint(row, GE, -r[t - 1], f"cap_{t}")
    for i in island.unit_buses:
        row = {s[i, t]: t for t in range(1, T + 1)}
        row[rt] = -1
        m.add_constraint(row, LE, 0, f"last_{i}")
    for i, (et, lt) in sorted(island.windows.items()):
        m.add_constraint({s[i, t]: t for t in range(1, T + 1)}, GE, et, f"earliest_{i}")
        m.add_constraint({s[i, t]: t for t in range(1, T + 1)}, LE, lt, f"latest_{i}")
    m.set_objective({rt: 1})
    return m


def schedule_warm_start(model: MilpModel, schedule: Schedule) -> dict[int, float]:
    values = {v.id: 0.0 for v in model.variables if v.name.startswith("s_")}
    for i, t in schedule.start.items():
        values[model.var_id(f"s_{i}_{t}")] = 1.0
    values[model.var_id("RT")] = float(schedule.rt)
    return values


def solve_gss(island: IslandView, backend: str | None = None, time_limit: float | None = None,
              warm_start: Schedule | None = None) -> Schedule | None:
    """Optimal schedule for ``island``; ``None`` when it is infeasible.

    Raises :class:`SolverError` when the backend gives no verdict.
    """
    if not island.units:
        return Schedule({}, 0)
    model = build_gss_model(island)
    if warm_start is not None:
        model.set_warm_start(schedule_warm_start(model, warm_start))
    out = solve(model, backend, time_limit)
    if out.status == Status.INFEASIBLE:
        return None
    if not out.has_solution:
        raise SolverError(out)
    values = model.value_map(out.values)
    start = {i: t for i in island.unit_buses for t in range(1, island.horizon + 1) if values[f"s_{i}_{t}"] > 0.5}
    return Schedule.from_starts(start, optimal=out.status == Status.OPTIMAL)


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def gss_bruteforce(island: IslandView, max_units: int = 6, max_horizon: int = 14) -> Schedule | None:
    """Exact optimum by checking every start vector in 1..T for every unit."""
    units = island.unit_buses
    T = island.horizon
    if len(units) > max_units or T > max_horizon:
        raise ValueError(f"brute force limited to {max_units} units and horizon {max_horizon}")
    if not units:
        return Schedule({}, 0)
    base = island.bs_curve.values(T)
    # traces[k][s-1] is unit k's contribution over 1..T when started at s
    traces = [np.array([unit_trace(island.units[b], s, T) for s in range(1, T + 1)]) for b in units]
    allowed = []
    for b in units:
        et, lt = island.windows.get(b, (1, T))
        allowed.append(np.array([et <= s <= lt for s in range(1, T + 1)]))

    best: tuple[int, tuple[int, ...]] | None = None
    rest = units[1:]
    for s0 in range(1, T + 1):
        if not allowed[0][s0 - 1]:
            continue
        acc = (base + traces[0][s0 - 1])[None, :]
        keep = np.ones(1, dtype=bool)
        latest = np.full(1, s0)
        for k in range(1, len(units)):
            acc = (acc[:, None, :] + traces[k][None, :, :]).reshape(-1, T)
            keep = (keep[:, None] & allowed[k][None, :]).reshape(-1)
            latest = np.maximum(latest[:, None], np.arange(1, T + 1)[None, :]).reshape(-1)
        ok = keep & np.all(acc >= -NEG_TOL, axis=1)
        if not ok.any():
            continue
        cand = np.where(ok, latest, T + 1)
        idx = int(np.argmin(cand))  # first minimiser = lexicographically smallest tail
        tail = np.unravel_index(idx, (T,) * len(rest)) if rest else ()
        vec = (s0,) + tuple(int(x) + 1 for x in tail)
        key = (int(cand[idx]), vec)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    return Schedule.from_starts(dict(zip(units, best[1])))


# ---------------------------------------------------------------------------
# aggregated lower bound
# ---------------------------------------------------------------------------

def aggregate_island(instance: Instance, horizon: int) -> IslandView:
    """Whole instance behind one central BS whose curve sums every BS curve."""
    units = {b: instance.unit_params(b, horizon) for b in instance.unit_buses}
    windows = {b: w for b, w in instance.critical_windows.items() if b in units}
    return IslandView(instance.aggregate_curve(), units, horizon, windows)


def aggregate_lower_bound(instance: Instance, horizon: int, backend: str | None = None,
                          time_limit: float | None = None) -> int:
    """Restoration-time lower bound from the aggregated single-BS problem."""
    sched = solve_gss(aggregate_island(instance, horizon), backend, time_limit)
    if sched is None:
        raise HorizonTooSmall(f"aggregated startup problem infeasible with horizon {horizon}")
    return sched.rt


def saturation_horizon(instance: Instance) -> int:
    """Horizon past which extra periods should no longer turn an infeasible island feasible.

    Enough to start every unit after the previous one finished ramping, once
    the BS curves have reached their final value.
    """
    curve = max((len(c.series) for c in instance.bs_generators.values()), default=1)
    total = sum(p.crank_periods + p.ramp_periods + 1 for p in instance.nbs_generators.values())
    return curve + total + len(instance.critical_loads)


def initial_lower_bound(instance: Instance, backend: str | None = None, horizon: int | None = None,
                        max_horizon: int | None = None) -> tuple[int, int]:
    """Aggregated lower bound, doubling the horizon until it is feasible.

    Doubling stops at the saturation horizon unless ``max_horizon`` says
    otherwise.  Returns ``(T_LOW, horizon_used)``.
    """
    T = horizon or max(8, 2 * len(instance.unit_buses))
    if max_horizon is None:
        max_horizon = max(T, saturation_horizon(instance))
    while True:
        try:
            return aggregate_lower_bound(instance, T, backend), T
        except HorizonTooSmall:
            if T >= max_horizon:
                raise
            T = min(2 * T, max_horizon)

