"""Randomized sectionalization with local search, run many times from different seeds."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from ._clock import Deadline
from .bounding import local_search
from .grid import Instance
from .gss import HorizonTooSmall, Schedule, initial_lower_bound, saturation_horizon, solve_gss
from .milp import SolverError
from .ppsr import SectionalizingPlan, island_views

INF = math.inf


def random_sectionalizing_plan(instance: Instance, rng: np.random.Generator) -> SectionalizingPlan:
    """Grow every island from its BS, one random frontier bus at a time.

    Each round draws fresh uniform values for all (bus, island) frontier pairs
    and attaches the pair with the largest draw.
    """
    g = instance.graph()
    if not nx.is_connected(g):
        raise ValueError("graph is disconnected")
    J = instance.bs_buses
    owner = {j: j for j in J}
    islands = {j: {j} for j in J}
    remaining = set(g.nodes) - set(J)
    while remaining:
        cands = sorted({(w, owner[u]) for u in owner for w in g.neighbors(u) if w in remaining})
        draws = rng.random(len(cands))
        w, j = cands[int(np.argmax(draws))]  # first maximum: lowest bus, then lowest BS
        owner[w] = j
        islands[j].add(w)
        remaining.discard(w)
    return SectionalizingPlan({j: frozenset(m) for j, m in sorted(islands.items())})


def evaluate_plan(instance: Instance, plan: SectionalizingPlan, T: int, backend: str | None = None,
                  time_limit: float | None = None) -> tuple[float, int | None]:
    """Restoration time of a plan (``inf`` if some island cannot start up by ``T``) and its bottleneck."""
    rt, worst = 0, None
    for j, island in island_views(instance, plan, T).items():
        sched = solve_gss(island, backend, time_limit)
        if sched is None:
            return INF, j
        if sched.rt > rt:
            rt, worst = sched.rt, j
    return rt, worst


def plan_schedules(instance: Instance, plan: SectionalizingPlan, T: int,
                   backend: str | None = None) -> dict[int, Schedule | None]:
    return {j: solve_gss(island, backend) for j, island in island_views(instance, plan, T).items()}


@dataclass
class RunResult:
    run_index: int
    seed: int
    found_feasible: bool = False
    time_to_feasible: float | None = None
    initial_rt: int | None = None
    final_rt: int | None = None
    improved_by_ls: bool = False
    attempts: int = 0
    initial_plan: SectionalizingPlan | None = None
    final_plan: SectionalizingPlan | None = None

    def row(self, timings: bool = False) -> dict:
        t = "" if not timings or self.time_to_feasible is None else f"{self.time_to_feasible:.3f}"
        return {
            "run_index": self.run_index,
            "seed": self.seed,
            "feasible": int(self.found_feasible),
            "time_to_feasible_sec": t,
            "initial_rt": "" if self.initial_rt is None else self.initial_rt,
            "final_rt": "" if self.final_rt is None else self.final_rt,
            "ls_improved": int(self.improved_by_ls),
        }


def run_once(instance: Instance, seed: int, T: int, deadline: float | None = None, backend: str | None = None,
             run_index: int = 0, max_attempts: int = 1000) -> RunResult:
    """Draw random plans until one is feasible, then improve it by local search."""
    clock = Deadline(deadline)
    rng = np.random.default_rng(seed)
    res = RunResult(run_index, seed)
    plan, rt = None, INF
    while res.attempts < max_attempts and not clock.expired():
        res.attempts += 1
        plan = random_sectionalizing_plan(instance, rng)
        try:
            rt, _ = evaluate_plan(instance, plan, T, backend, clock.remaining())
        except SolverError:
            return res
        if rt < INF:
            break
    if rt == INF:
        return res
    res.found_feasible = True
    res.time_to_feasible = clock.elapsed()
    res.initial_rt = res.final_rt = int(rt)
    res.initial_plan = res.final_plan = plan
    if clock.expired():
        return res
    ls = local_search(instance, plan, int(rt), backend, clock.remaining())
    if ls.rt < res.initial_rt:
        res.final_rt, res.final_plan, res.improved_by_ls = ls.rt, ls.plan, True
    return res


def _run_star(args):
    return run_once(*args)


def _sort_key(r: RunResult):
    # decreasing final value, runs without a feasible plan first
    return (-(r.final_rt if r.found_feasible else INF), r.run_index)


@dataclass
class Campaign:
    runs: list[RunResult]
    horizon: int
    lower_bound: int | None = None
    wall_time: float = 0.0
    best: RunResult | None = field(init=False)

    def __post_init__(self):
        ok = [r for r in self.runs if r.found_feasible]
        self.best = min(ok, key=lambda r: (r.final_rt, r.run_index)) if ok else None

    @property
    def feasible(self) -> bool:
        return self.best is not None

    def summary(self, timings: bool = False) -> dict:
        ok = [r for r in self.runs if r.found_feasible]
        mean_t = None
        if timings and ok:
            mean_t = round(sum(r.time_to_feasible for r in ok) / len(ok), 3)
        return {
            "status": "feasible" if ok else "no feasible plan",
            "upper_bound": None if self.best is None else self.best.final_rt,
            "lower_bound": self.lower_bound,
            "n_runs": len(self.runs),
            "n_feasible": len(ok),
            "n_ls_improved": sum(r.improved_by_ls for r in ok),
            "mean_time_to_feasible": mean_t,
            "horizon": self.horizon,
        }


def orchestrate(instance: Instance, n_runs: int, T: int | None = None, deadline: float | None = None,
                base_seed: int = 0, jobs: int = 1, backend: str | None = None) -> Campaign:
    """Independent runs seeded ``base_seed + i``; the best is the smallest final rt.

    Without an explicit horizon ``T`` the runs use twice the aggregated lower
    bound.  Each run gets the full ``deadline``.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    start = time.monotonic()
    try:
        t_low, _ = initial_lower_bound(instance, backend)
    except HorizonTooSmall:
        t_low = None  # not even the pooled BS capacity can restore the grid
    if T is not None:
        horizon = T
    else:
        horizon = saturation_horizon(instance) if t_low is None else max(1, 2 * t_low)
    args = [(instance, base_seed + i, horizon, deadline, backend, i) for i in range(n_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_star, args))
    else:
        runs = [_run_star(a) for a in args]
    runs.sort(key=_sort_key)
    return Campaign(runs, horizon, t_low, time.monotonic() - start)
