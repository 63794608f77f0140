"""Joint sectionalization and startup sequencing (parallel restoration).

Model variables are named ``x_{v}_{j}`` (bus ``v`` in island ``j``),
``s_{i}_{j}_{t}`` (unit ``i`` starts in island ``j`` at period ``t``),
``y_{j}_{u}_{v}`` / ``f_{j}_{u}_{v}`` (line membership and flow) and ``RT``.
"""

from __future__ import annotations

import csv
import io
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

import networkx as nx

from ._clock import Deadline
from .grid import TRANSSHIPMENT, Instance, capacity_at
from .gss import IslandView, Schedule, gss_bruteforce, solve_gss
from .milp import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, MilpModel, SolverError, Status, solve


@dataclass(frozen=True)
class SectionalizingPlan:
    """Islands keyed by their BS bus; each member set includes the BS itself."""

    islands: Mapping[int, frozenset[int]]

    @classmethod
    def from_assignment(cls, assign: Mapping[int, int | None], bs_buses: Iterable[int]) -> "SectionalizingPlan":
        islands = {j: {j} for j in bs_buses}
        for v, j in assign.items():
            if j is not None:
                islands.setdefault(j, set()).add(v)
        return cls({j: frozenset(m) for j, m in sorted(islands.items())})

    @property
    def assignment(self) -> dict[int, int]:
        out = {}
        for j in sorted(self.islands):
            for v in self.islands[j]:
                out.setdefault(v, j)
        return out

    def members(self, j: int) -> list[int]:
        return sorted(self.islands[j])

    def unassigned(self, instance: Instance) -> list[int]:
        taken = set().union(*self.islands.values()) if self.islands else set()
        return sorted(set(instance.buses) - taken)


@dataclass(frozen=True)
class PpsrSolution:
    plan: SectionalizingPlan
    schedules: Mapping[int, Schedule]
    rt: int
    horizon: int
    optimal: bool = True

    @property
    def bottleneck(self) -> list[int]:
        return sorted(j for j, s in self.schedules.items() if s.rt == self.rt)


class BoundLog:
    """Bound-evolution events: (step, elapsed_sec, track, event, value)."""

    FIELDS = ("step", "elapsed_sec", "track", "event", "value")

    def __init__(self, timings: bool = True):
        self.timings = timings
        self.rows: list[dict] = []
        self._clock = Deadline(None)

    def add(self, track: str, event: str, value) -> None:
        self.rows.append({
            "step": len(self.rows),
            "elapsed_sec": f"{self._clock.elapsed():.3f}" if self.timings else "",
            "track": track,
            "event": event,
            "value": "" if value is None else value,
        })

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows)
        return buf.getvalue()


def _log(log: BoundLog | None, track: str, event: str, value) -> None:
    if log is not None:
        log.add(track, event, value)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def flow_sources(instance: Instance, balance: bool = True) -> list[int]:
    """Buses that must be connected to their BS when assigned.

    Units always are.  With the balance rows active, so are transshipment
    buses that carry net generation or load, since they count towards it.
    """
    out = set(instance.unit_buses)
    if balance and instance.balance_limit is not None:
        out |= {b for b in instance.transshipment_buses if instance.net_mw.get(b, 0.0) != 0.0}
    return sorted(out)


def add_core(m: MilpModel, instance: Instance, T: int, windows: bool = True, balance: bool = True,
             assign_all: bool = False) -> dict:
    """Island membership, per-island startup sequencing and the RT objective.

    With ``assign_all`` every non-BS bus must join an island (tree variant).
    """
    J, I = instance.bs_buses, instance.unit_buses
    V = sorted(set(instance.buses))
    x = {(v, j): m.add_variable(f"x_{v}_{j}", BINARY) for v in V for j in J}
    s = {(i, j, t): m.add_variable(f"s_{i}_{j}_{t}", BINARY) for i in I for j in J for t in range(1, T + 1)}
    rt = m.add_variable("RT", CONTINUOUS, 0.0, T)

    for j in J:
        for jj in J:
            m.add_constraint({x[j, jj]: 1}, EQ, 1 if j == jj else 0, f"bs_{j}_{jj}")
    unit_set = set(I)
    for v in V:
        if v in J:
            continue
        row = {x[v, j]: 1 for j in J}
        if v in unit_set or assign_all:
            m.add_constraint(row, EQ, 1, f"assign_{v}")
        else:
            m.add_constraint(row, LE, 1, f"assign_{v}")
    params = {i: instance.unit_params(i, T) for i in I}
    for i in I:
        for j in J:
            row = {s[i, j, t]: 1 for t in range(1, T + 1)}
            row[x[i, j]] = -1
            m.add_constraint(row, EQ, 0, f"link_{i}_{j}")
    for j in J:
        r = instance.bs_generators[j].values(T)
        for t in range(1, T + 1):
            row = {s[i, j, tm]: capacity_at(params[i], t - tm + 1) for i in I for tm in range(1, t + 1)}
            m.add_constraint(row, GE, -r[t - 1], f"cap_{j}_{t}")
    for i in I:
        row = {s[i, j, t]: t for j in J for t in range(1, T + 1)}
        row[rt] = -1
        m.add_constraint(row, LE, 0, f"last_{i}")
    if windows:
        for i, (et, lt) in sorted(instance.critical_windows.items()):
            if i not in unit_set:
                continue
            row = {s[i, j, t]: t for j in J for t in range(1, T + 1)}
            m.add_constraint(row, GE, et, f"earliest_{i}")
            m.add_constraint(row, LE, lt, f"latest_{i}")
    if balance and instance.balance_limit is not None:
        d = instance.balance_limit
        for j in J:
            row = {x[v, j]: instance.net_mw.get(v, 0.0) for v in V if v not in J}
            m.add_constraint(row, GE, -d, f"balance_lo_{j}")
            m.add_constraint(row, LE, d, f"balance_hi_{j}")
    m.set_objective({rt: 1})
    return {"x": x, "s": s, "RT": rt}


def build_ppsr_model(instance: Instance, T: int, windows: bool = True, balance: bool = True) -> MilpModel:
    """Integrated sectionalization and startup MILP with flow-based connectivity."""
    if T < 1:
        raise ValueError("horizon must be >= 1")
    m = MilpModel("ppsr")
    core = add_core(m, instance, T, windows, balance)
    x = core["x"]
    J = instance.bs_buses
    L = instance.lines
    sources = flow_sources(instance, balance)
    big_m = len(sources)
    y = {(j, u, v): m.add_variable(f"y_{j}_{u}_{v}", BINARY) for j in J for (u, v) in L}
    f = {(j, u, v): m.add_variable(f"f_{j}_{u}_{v}", INTEGER, -big_m, big_m) for j in J for (u, v) in L}

    out_lines: dict[int, list] = {b: [] for b in instance.buses}
    in_lines: dict[int, list] = {b: [] for b in instance.buses}
    for u, v in L:
        out_lines[u].append((u, v))
        in_lines[v].append((u, v))

    def net_out(w, j):
        row = {f[(j,) + e]: 1 for e in out_lines[w]}
        for e in in_lines[w]:
            row[f[(j,) + e]] = row.get(f[(j,) + e], 0) - 1
        return row

    src = set(sources)
    for j in J:
        for w in sorted(set(instance.buses)):
            if w in J:
                continue
            row = net_out(w, j)
            if w in src:
                row[x[w, j]] = row.get(x[w, j], 0) - 1
                m.add_constraint(row, EQ, 0, f"flow_src_{w}_{j}")
            else:
                m.add_constraint(row, EQ, 0, f"flow_tr_{w}_{j}")
        row = {k: -c for k, c in net_out(j, j).items()}
        for i in sources:
            row[x[i, j]] = row.get(x[i, j], 0) - 1
        m.add_constraint(row, EQ, 0, f"flow_sink_{j}")
        for (u, v) in L:
            fv, yv = f[j, u, v], y[j, u, v]
            m.add_constraint({fv: 1, yv: -big_m}, LE, 0, f"fcap_hi_{j}_{u}_{v}")
            m.add_constraint({fv: 1, yv: big_m}, GE, 0, f"fcap_lo_{j}_{u}_{v}")
            m.add_constraint({yv: 1, x[u, j]: -1}, LE, 0, f"yend_u_{j}_{u}_{v}")
            m.add_constraint({yv: 1, x[v, j]: -1}, LE, 0, f"yend_v_{j}_{u}_{v}")
    return m


def island_bfs_parents(instance: Instance, members: Iterable[int], root: int) -> dict[int, int | None]:
    """BFS tree of the island's induced subgraph, neighbours in ascending bus id."""
    members = set(members)
    adj: dict[int, list[int]] = {b: [] for b in members}
    for u, v in instance.lines:
        if u in members and v in members:
            adj[u].append(v)
            adj[v].append(u)
    parent: dict[int, int | None] = {root: None}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for w in sorted(adj[u]):
            if w not in parent:
                parent[w] = u
                queue.append(w)
    return parent


def plan_warm_start(instance: Instance, model: MilpModel, plan: SectionalizingPlan,
                    schedules: Mapping[int, Schedule], balance: bool = True) -> dict[int, float]:
    """Assignment of a plan and its schedules in ``model``'s variables."""
    values = {v.id: 0.0 for v in model.variables}
    assign = plan.assignment
    for v, j in assign.items():
        values[model.var_id(f"x_{v}_{j}")] = 1.0
    for j, sched in schedules.items():
        for i, t in sched.start.items():
            values[model.var_id(f"s_{i}_{j}_{t}")] = 1.0
    values[model.var_id("RT")] = float(max((s.rt for s in schedules.values()), default=0))
    if not any(v.name.startswith("f_") for v in model.variables):
        return values
    line_set = set(instance.lines)
    sources = set(flow_sources(instance, balance))
    for j, members in plan.islands.items():
        parent = island_bfs_parents(instance, members, j)
        for u, v in instance.lines:
            if u in members and v in members and model.has_var(f"y_{j}_{u}_{v}"):
                values[model.var_id(f"y_{j}_{u}_{v}")] = 1.0
        for i in members:
            if i not in sources or i == j:
                continue
            a = i
            while parent[a] is not None:
                b = parent[a]
                if (a, b) in line_set:
                    values[model.var_id(f"f_{j}_{a}_{b}")] += 1.0
                else:
                    values[model.var_id(f"f_{j}_{b}_{a}")] -= 1.0
                a = b
    return values


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------

def extract_plan(instance: Instance, values: Mapping[str, float]) -> SectionalizingPlan:
    """Plan from model values; transshipment buses cut off from their BS become unassigned."""
    assign = {}
    for j in instance.bs_buses:
        for v in set(instance.buses):
            if values.get(f"x_{v}_{j}", 0.0) > 0.5 and v not in assign:
                assign[v] = j
    raw = SectionalizingPlan.from_assignment(assign, instance.bs_buses)
    islands = {}
    for j, members in raw.islands.items():
        reach = set(island_bfs_parents(instance, members, j))
        islands[j] = frozenset(v for v in members if v in reach or instance.role(v) != TRANSSHIPMENT)
    return SectionalizingPlan(islands)


def balance_of(instance: Instance, members: Iterable[int]) -> float:
    return sum(instance.net_mw.get(v, 0.0) for v in members if v not in instance.bs_generators)


def validate_plan(instance: Instance, plan: SectionalizingPlan) -> list[str]:
    """Violations of island membership, coverage, connectivity and balance."""
    bad = []
    J = set(instance.bs_buses)
    buses = set(instance.buses)
    count: dict[int, list[int]] = {}
    for j, members in plan.islands.items():
        if j not in J:
            bad.append(f"island keyed by non-BS bus {j}")
            continue
        if j not in members:
            bad.append(f"BS {j} is not in its own island")
        for v in members:
            if v not in buses:
                bad.append(f"island {j} holds unknown bus {v}")
            elif v in J and v != j:
                bad.append(f"BS {v} placed in island {j}")
            count.setdefault(v, []).append(j)
    for j in sorted(J - set(plan.islands)):
        bad.append(f"BS {j} has no island")
    for i in instance.unit_buses:
        owners = count.get(i, [])
        if not owners:
            bad.append(f"unit bus {i} is not assigned to any island")
        elif len(owners) > 1:
            bad.append(f"unit bus {i} assigned to {len(owners)} islands {sorted(owners)}")
    for v in instance.transshipment_buses:
        if len(count.get(v, [])) > 1:
            bad.append(f"transshipment bus {v} assigned to {len(count[v])} islands")
    g = instance.graph()
    for j, members in sorted(plan.islands.items()):
        if j in J and j in members and set(members) <= buses:
            if not nx.is_connected(g.subgraph(members)):
                bad.append(f"disconnected island {j}")
    if instance.balance_limit is not None:
        for j, members in sorted(plan.islands.items()):
            net = balance_of(instance, members)
            if abs(net) > instance.balance_limit + 1e-9:
                bad.append(f"island {j} net generation {net:g} MW exceeds balance limit {instance.balance_limit:g}")
    return bad


def island_views(instance: Instance, plan: SectionalizingPlan, T: int) -> dict[int, IslandView]:
    return {j: IslandView.from_instance(instance, members, T, j) for j, members in sorted(plan.islands.items())}


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

def solution_from_values(instance: Instance, values: Mapping[str, float], T: int, optimal: bool,
                         backend: str | None = None, time_limit: float | None = None,
                         post_process: bool = True) -> PpsrSolution:
    plan = extract_plan(instance, values)
    schedules = {}
    for j, members in plan.islands.items():
        start = {
            i: t
            for i in instance.unit_buses if i in members
            for t in range(1, T + 1) if values.get(f"s_{i}_{j}_{t}", 0.0) > 0.5
        }
        schedules[j] = Schedule.from_starts(start, optimal)
    rt = max((s.rt for s in schedules.values()), default=0)
    if post_process and rt >= 1:
        # re-sequence every island with the incumbent rt as horizon
        for j, island in island_views(instance, plan, rt).items():
            try:
                better = solve_gss(island, backend, time_limit, warm_start=schedules[j])
            except SolverError:
                better = None
            if better is not None and better.rt <= schedules[j].rt:
                schedules[j] = better
        rt = max(s.rt for s in schedules.values())
    return PpsrSolution(plan, schedules, rt, T, optimal)


def solve_model(instance: Instance, model: MilpModel, T: int, backend: str | None,
                time_limit: float | None) -> PpsrSolution | None:
    out = solve(model, backend, time_limit)
    if out.status == Status.INFEASIBLE:
        return None
    if not out.has_solution:
        raise SolverError(out)
    return solution_from_values(instance, model.value_map(out.values), T, out.status == Status.OPTIMAL,
                                backend, time_limit)


def solve_ppsr(instance: Instance, T: int, backend: str | None = None,
               warm_start: PpsrSolution | tuple | None = None, time_limit: float | None = None,
               windows: bool = True, balance: bool = True) -> PpsrSolution | None:
    """Optimal plan and schedules within horizon ``T``; ``None`` when infeasible.

    ``warm_start`` is a solution or a ``(plan, schedules)`` pair.  Raises
    :class:`SolverError` on timeouts without incumbent and backend errors.
    """
    model = build_ppsr_model(instance, T, windows, balance)
    if warm_start is not None:
        plan, schedules = (warm_start.plan, warm_start.schedules) if isinstance(warm_start, PpsrSolution) else warm_start
        if all(s.rt <= T for s in schedules.values()):
            model.set_warm_start(plan_warm_start(instance, model, plan, schedules, balance))
    return solve_model(instance, model, T, backend, time_limit)


def lower_bound_scan(instance: Instance, backend: str | None, t_low: int, deadline: float | None = None,
                     log: BoundLog | None = None, max_horizon: int = 512) -> tuple[int, PpsrSolution | None]:
    """Raise the horizon one period at a time from ``t_low`` until the problem is feasible.

    Returns the lower bound reached and, if a horizon turned out feasible, the
    optimal solution (whose rt then equals the bound).
    """
    clock = Deadline(deadline)
    lb = t_low
    T = max(1, t_low)
    while T <= max_horizon:
        if clock.expired():
            return lb, None
        try:
            sol = solve_ppsr(instance, T, backend, time_limit=clock.remaining())
        except SolverError:
            return lb, None
        if sol is None:
            lb = T + 1
            _log(log, "lower", f"infeasible_T{T}", lb)
            T += 1
            continue
        _log(log, "lower", "optimal", sol.rt)
        return sol.rt, sol
    return lb, None


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def ppsr_bruteforce(instance: Instance, T: int, max_buses: int = 10, max_bs: int = 3) -> PpsrSolution | None:
    """Exact optimum by enumerating all connected island assignments."""
    J, I, Tr = instance.bs_buses, instance.unit_buses, instance.transshipment_buses
    if len(set(instance.buses)) > max_buses or len(J) > max_bs:
        raise ValueError(f"brute force limited to {max_buses} buses and {max_bs} BS buses")
    g = instance.graph()
    cache: dict[tuple, Schedule | None] = {}

    def island_rt(j, members):
        units = frozenset(b for b in members if b in set(I))
        key = (j, units)
        if key not in cache:
            cache[key] = gss_bruteforce(IslandView.from_instance(instance, members, T, j), max_horizon=max(T, 14))
        return cache[key]

    best = None
    for unit_choice in itertools.product(J, repeat=len(I)):
        for tr_choice in itertools.product([None] + J, repeat=len(Tr)):
            assign = dict(zip(I, unit_choice)) | dict(zip(Tr, tr_choice))
            plan = SectionalizingPlan.from_assignment(assign, J)
            if any(not nx.is_connected(g.subgraph(m)) for m in plan.islands.values()):
                continue
            if instance.balance_limit is not None and any(
                abs(balance_of(instance, m)) > instance.balance_limit + 1e-9 for m in plan.islands.values()
            ):
                continue
            schedules = {}
            for j, members in plan.islands.items():
                sched = island_rt(j, members)
                if sched is None:
                    break
                schedules[j] = sched
            else:
                rt = max((s.rt for s in schedules.values()), default=0)
                if best is None or rt < best.rt:
                    best = PpsrSolution(plan, schedules, rt, T)
    return best
