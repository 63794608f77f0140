"""Upper and lower bounding for parallel restoration.

The upper-bound pipeline solves the tree-restricted formulation on a random
spanning tree, improves the plan by pairwise island merging, and finally
re-solves the full formulation on a sparse subgraph built from per-island BFS
trees plus the cut edges of the plan.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from ._clock import Deadline
from .grid import Instance
from .gss import HorizonTooSmall, Schedule, initial_lower_bound, saturation_horizon, solve_gss
from .milp import LE, MilpModel, SolverError
from .ppsr import (
    BoundLog,
    PpsrSolution,
    SectionalizingPlan,
    _log,
    add_core,
    island_bfs_parents,
    island_views,
    lower_bound_scan,
    solve_model,
    solve_ppsr,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpanningTree:
    edges: tuple[tuple[int, int], ...]
    parent: dict[int, int | None]

    def path_parents(self, root: int) -> dict[int, int | None]:
        """Parent pointers of the tree re-rooted at ``root``."""
        adj: dict[int, list[int]] = {v: [] for v in self.parent}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        out: dict[int, int | None] = {root: None}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for w in sorted(adj[u]):
                if w not in out:
                    out[w] = u
                    queue.append(w)
        return out


def random_spanning_tree(instance: Instance, rng: np.random.Generator) -> SpanningTree:
    """Minimum spanning tree under i.i.d. U[0,1] edge weights."""
    g = instance.graph()
    if not nx.is_connected(g):
        raise ValueError("graph is disconnected")
    weights = rng.random(len(instance.lines))
    for (u, v), w in zip(instance.lines, weights):
        g[u][v]["weight"] = float(w)
    tree = nx.minimum_spanning_tree(g, algorithm="kruskal")
    edges = tuple(sorted((min(u, v), max(u, v)) for u, v in tree.edges()))
    root = min(g.nodes)
    parent = dict(nx.bfs_predecessors(tree, root))
    parent[root] = None
    return SpanningTree(edges, parent)


def build_ppsrt_model(instance: Instance, tree: SpanningTree, T: int, windows: bool = True,
                      balance: bool = True) -> MilpModel:
    """Tree partitioning formulation: path-closure rows replace the flow model.

    Every non-BS bus must join an island; transshipment buses have no start
    variables since their capacity is zero.
    """
    if len(tree.edges) != len(set(instance.buses)) - 1 or set(tree.parent) != set(instance.buses):
        raise ValueError("tree does not span the instance")
    m = MilpModel("ppsrt")
    core = add_core(m, instance, T, windows, balance, assign_all=True)
    x = core["x"]
    for j in instance.bs_buses:
        parents = tree.path_parents(j)
        for i in sorted(set(instance.buses)):
            if i in instance.bs_generators:
                continue
            nxt = parents[i]
            if nxt == j:
                continue  # x(j, j) = 1 already
            m.add_constraint({x[i, j]: 1, x[nxt, j]: -1}, LE, 0, f"path_{i}_{j}")
    return m


def solve_ppsrt(instance: Instance, tree: SpanningTree, T: int, backend: str | None = None,
                time_limit: float | None = None) -> PpsrSolution | None:
    model = build_ppsrt_model(instance, tree, T)
    return solve_model(instance.with_lines(tree.edges), model, T, backend, time_limit)


# ---------------------------------------------------------------------------
# local search
# ---------------------------------------------------------------------------

@dataclass
class LocalSearchResult:
    plan: SectionalizingPlan
    rt: int
    schedules: dict[int, Schedule]
    outer_iterations: int = 0
    merges: int = 0


def _island_rts(instance, plan, horizon, backend, clock, only=None, rts=None, schedules=None):
    rts = dict(rts or {})
    schedules = dict(schedules or {})
    for j, island in island_views(instance, plan, horizon).items():
        if only is not None and j not in only:
            continue
        sched = solve_gss(island, backend, clock.remaining())
        if sched is None:
            raise ValueError(f"island {j} has no feasible schedule within {horizon} periods")
        rts[j] = sched.rt
        schedules[j] = sched
    return rts, schedules


def local_search(instance: Instance, plan: SectionalizingPlan, rt0: int, backend: str | None = None,
                 deadline: float | None = None, log: BoundLog | None = None) -> LocalSearchResult:
    """Improve a feasible plan by re-partitioning the bottleneck island with a neighbour.

    Each outer iteration fixes the island with the largest restoration time and
    tries the other islands in increasing restoration time; the first merged
    pair whose joint optimum beats the bottleneck is accepted.
    """
    clock = Deadline(deadline)
    if rt0 < 1 or len(plan.islands) < 2:
        horizon = max(rt0, 1)
        rts, schedules = _island_rts(instance, plan, horizon, backend, Deadline(None))
        return LocalSearchResult(plan, max(rts.values(), default=0), schedules)
    horizon = rt0
    rts, schedules = _island_rts(instance, plan, horizon, backend, Deadline(None))
    g = instance.graph()
    islands = dict(plan.islands)
    outer = merges = 0
    improved = True
    while improved and not clock.expired():
        improved = False
        outer += 1
        j_max = min(rts, key=lambda j: (-rts[j], j))
        rt_max = rts[j_max]
        if rt_max < 1:
            break
        for j_small in sorted((j for j in rts if j != j_max), key=lambda j: (rts[j], j)):
            if clock.expired():
                break
            merged = islands[j_max] | islands[j_small]
            if not nx.is_connected(g.subgraph(merged)):
                continue
            sub = instance.subinstance(merged)
            split = SectionalizingPlan({j_max: islands[j_max], j_small: islands[j_small]})
            try:
                two = solve_ppsr(sub, rt_max, backend, warm_start=(split, {j: schedules[j] for j in split.islands}),
                                 time_limit=clock.remaining())
            except SolverError:
                break
            if two is not None and two.rt < rt_max:
                improved = True
                merges += 1
                islands[j_max] = two.plan.islands[j_max]
                islands[j_small] = two.plan.islands[j_small]
                current = SectionalizingPlan(dict(sorted(islands.items())))
                rts, schedules = _island_rts(instance, current, horizon, backend, Deadline(None),
                                             only={j_max, j_small}, rts=rts, schedules=schedules)
                _log(log, "upper", "local_search_merge", max(rts.values()))
                break
    final = SectionalizingPlan(dict(sorted(islands.items())))
    return LocalSearchResult(final, max(rts.values()), schedules, outer, merges)


# ---------------------------------------------------------------------------
# reduced subgraph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReducedGraph:
    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    tree_edges: tuple[tuple[int, int], ...] = ()
    cut_edges: tuple[tuple[int, int], ...] = ()


def reduced_subgraph(instance: Instance, plan: SectionalizingPlan) -> ReducedGraph:
    """Per-island BFS trees rooted at each BS, plus every line not inside a single island."""
    tree = set()
    owner = plan.assignment
    for j, members in plan.islands.items():
        for v, p in island_bfs_parents(instance, members, j).items():
            if p is not None:
                tree.add((min(v, p), max(v, p)))
    cut = {(u, v) for u, v in instance.lines if owner.get(u) is None or owner.get(u) != owner.get(v)}
    return ReducedGraph(tuple(sorted(set(instance.buses))), tuple(sorted(tree | cut)),
                        tuple(sorted(tree)), tuple(sorted(cut)))


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

@dataclass
class UpperBoundResult:
    plan: SectionalizingPlan | None
    rt: int | None
    schedules: dict[int, Schedule] = field(default_factory=dict)
    stages: dict[str, int] = field(default_factory=dict)
    log: BoundLog | None = None


def upper_bound_pipeline(instance: Instance, t_low: int, backend: str | None = None,
                         rng: np.random.Generator | None = None, deadline: float | None = None,
                         log: BoundLog | None = None, max_horizon: int = 1024,
                         max_trees: int = 20) -> UpperBoundResult:
    """Random-tree partition, local search, then the reduced-subgraph re-solve.

    When the tree formulation stays infeasible up to the saturation horizon,
    the tree itself is to blame and a fresh random tree is drawn.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    log = log if log is not None else BoundLog()
    clock = Deadline(deadline)
    result = UpperBoundResult(None, None, log=log)

    cap = min(max_horizon, max(2 * t_low, saturation_horizon(instance)))
    first = None
    for attempt in range(max_trees):
        tree = random_spanning_tree(instance, rng)
        T = max(1, 2 * t_low)
        while first is None:
            if clock.expired():
                return result
            try:
                first = solve_ppsrt(instance, tree, T, backend, clock.remaining())
            except SolverError:
                return result
            if first is None:
                if T >= cap:
                    break
                logger.info("tree partition infeasible at horizon %d, doubling", T)
                T = min(2 * T, cap)
        if first is not None:
            break
        logger.info("tree %d admits no feasible partition, drawing another", attempt)
    if first is None:
        return result
    # the plan lives on the full graph; schedules from the tree model are still valid
    result.plan, result.rt, result.schedules = first.plan, first.rt, dict(first.schedules)
    result.stages["tree"] = first.rt
    _log(log, "upper", "tree_partition", first.rt)
    if clock.expired() or first.rt == 0:
        return result

    ls = local_search(instance, first.plan, first.rt, backend, clock.remaining(), log)
    if ls.rt <= result.rt:
        result.plan, result.rt, result.schedules = ls.plan, ls.rt, ls.schedules
    result.stages["local_search"] = result.rt
    _log(log, "upper", "local_search", result.rt)
    if clock.expired() or result.rt == 0:
        return result

    reduced = reduced_subgraph(instance, result.plan)
    sub = instance.with_lines(reduced.edges)
    try:
        final = solve_ppsr(sub, result.rt, backend, warm_start=(result.plan, result.schedules),
                           time_limit=clock.remaining())
    except SolverError:
        final = None
    if final is not None and final.rt <= result.rt:
        result.plan, result.rt, result.schedules = final.plan, final.rt, dict(final.schedules)
    result.stages["reduced"] = result.rt
    _log(log, "upper", "reduced_subgraph", result.rt)
    return result


@dataclass
class BoundsResult:
    lower: int
    upper: int | None
    t_low: int
    solution: PpsrSolution | None
    log: BoundLog

    @property
    def gap(self) -> int | None:
        return None if self.upper is None else self.upper - self.lower


def solve_bounds(instance: Instance, backend: str | None = None, budget: float | None = None, seed: int = 0,
                 log: BoundLog | None = None) -> BoundsResult:
    """Lower and upper tracks under one wall-clock budget.

    The aggregated lower bound is always computed.  The upper pipeline runs
    next, then the lower scan closes the gap with whatever time is left.
    """
    log = log if log is not None else BoundLog()
    clock = Deadline(budget)
    t_low, _ = initial_lower_bound(instance, backend)
    _log(log, "lower", "aggregate", t_low)
    up = upper_bound_pipeline(instance, t_low, backend, np.random.default_rng(seed), clock.remaining(), log)
    best = None
    if up.plan is not None:
        best = PpsrSolution(up.plan, up.schedules, up.rt, max(up.rt, 1), optimal=False)
    lower = t_low
    if best is not None and best.rt <= lower:
        return BoundsResult(best.rt, best.rt, t_low, _as_optimal(best), log)
    ceiling = None if best is None else best.rt - 1
    lower, sol = lower_bound_scan(instance, backend, t_low, clock.remaining(), log,
                                  max_horizon=ceiling if ceiling is not None else 512)
    if sol is not None:
        _log(log, "upper", "optimal", sol.rt)
        return BoundsResult(sol.rt, sol.rt, t_low, sol, log)
    if best is not None and lower >= best.rt:
        return BoundsResult(best.rt, best.rt, t_low, _as_optimal(best), log)
    return BoundsResult(lower, None if best is None else best.rt, t_low, best, log)


def _as_optimal(sol: PpsrSolution) -> PpsrSolution:
    return PpsrSolution(sol.plan, sol.schedules, sol.rt, sol.horizon, True)


def solve_exact(instance: Instance, backend: str | None = None, log: BoundLog | None = None,
                deadline: float | None = None) -> tuple[int, PpsrSolution | None]:
    """Aggregated lower bound followed by the horizon scan to optimality."""
    log = log if log is not None else BoundLog()
    t_low, _ = initial_lower_bound(instance, backend)
    _log(log, "lower", "aggregate", t_low)
    return lower_bound_scan(instance, backend, t_low, deadline, log)


__all__ = [
    "BoundsResult",
    "HorizonTooSmall",
    "LocalSearchResult",
    "ReducedGraph",
    "SpanningTree",
    "UpperBoundResult",
    "build_ppsrt_model",
    "local_search",
    "random_spanning_tree",
    "reduced_subgraph",
    "saturation_horizon",
    "solve_bounds",
    "solve_exact",
    "solve_ppsrt",
    "upper_bound_pipeline",
]
