import collections

import numpy as np
import pytest
from scipy.stats import chisquare

from blackstart.bounding import (
    SpanningTree,
    build_ppsrt_model,
    local_search,
    random_spanning_tree,
    reduced_subgraph,
    solve_bounds,
    solve_ppsrt,
    upper_bound_pipeline,
)
from blackstart.grid import BsCurve, Instance, NbsParams
from blackstart.gss import initial_lower_bound
from blackstart.ppsr import BoundLog, SectionalizingPlan, ppsr_bruteforce, solve_ppsr, validate_plan
from blackstart.synth import random_instance, worked_example


def line4():
    """BS 1 - NBS 2 - NBS 3 - BS 4, both BS at 10 MW; one unit per BS is optimal."""
    return Instance(
        buses=(1, 2, 3, 4),
        lines=((1, 2), (2, 3), (3, 4)),
        bs_generators={1: BsCurve.constant(10), 4: BsCurve.constant(10)},
        nbs_generators={2: NbsParams(10, 1, 1, 20), 3: NbsParams(10, 1, 1, 20)},
    )


def triangle():
    return Instance((1, 2, 3), ((1, 2), (1, 3), (2, 3)), {1: BsCurve.constant(1)})


def test_tree_input_gives_same_tree():
    inst = line4()
    assert random_spanning_tree(inst, np.random.default_rng(3)).edges == inst.lines


def test_tree_is_deterministic_per_seed():
    inst = random_instance(np.random.default_rng(0), 8, 2, 3, extra_edge_prob=0.5)
    a = random_spanning_tree(inst, np.random.default_rng(42))
    b = random_spanning_tree(inst, np.random.default_rng(42))
    assert a == b and len(a.edges) == 7


def test_cycle_trees_are_uniform():
    counts = collections.Counter(random_spanning_tree(triangle(), np.random.default_rng(s)).edges
                                 for s in range(3000))
    assert len(counts) == 3
    assert chisquare(list(counts.values())).pvalue > 0.01


def test_star_has_no_path_rows():
    inst = Instance((1, 2, 3, 4), ((1, 2), (1, 3), (1, 4)), {1: BsCurve.constant(5)},
                    {2: NbsParams(1, 1, 1, 2)})
    tree = random_spanning_tree(inst, np.random.default_rng(0))
    m = build_ppsrt_model(inst, tree, 3)
    assert not any(c.name.startswith("path_") for c in m.constraints)


def test_path_closure_row():
    inst = Instance((1, 2, 3), ((1, 2), (2, 3)), {1: BsCurve.constant(5)}, {3: NbsParams(1, 1, 1, 2)})
    m = build_ppsrt_model(inst, random_spanning_tree(inst, np.random.default_rng(0)), 3)
    rows = [c for c in m.constraints if c.name.startswith("path_")]
    assert len(rows) == 1
    assert rows[0].coeffs == {m.var_id("x_3_1"): 1.0, m.var_id("x_2_1"): -1.0}


def test_tree_must_span():
    inst = line4()
    with pytest.raises(ValueError, match="span"):
        build_ppsrt_model(inst, SpanningTree(((1, 2),), {1: None, 2: 1}), 3)


def test_tree_bound_dominates_graph_optimum():
    rng = np.random.default_rng(8)
    for k in range(15):
        inst = random_instance(rng, 6, 2, 3, extra_edge_prob=0.4)
        tree = random_spanning_tree(inst, np.random.default_rng(k))
        exact, restricted = solve_ppsr(inst, 8), solve_ppsrt(inst, tree, 8)
        if restricted is not None:
            assert exact is not None and restricted.rt >= exact.rt
            assert validate_plan(inst, restricted.plan) == []


def test_local_search_single_bs_unchanged():
    plan = SectionalizingPlan({1: frozenset({1, 2, 3})})
    res = local_search(worked_example(), plan, 4)
    assert res.plan == plan and res.rt == 4 and res.merges == 0


def test_local_search_moves_unit_across_cut():
    inst = line4()
    start = SectionalizingPlan({1: frozenset({1}), 4: frozenset({2, 3, 4})})
    assert ppsr_bruteforce(inst, 4).rt == 1
    res = local_search(inst, start, 2)
    assert res.rt == 1 and res.merges == 1
    assert validate_plan(inst, res.plan) == []


def test_local_search_keeps_optimal_plan():
    inst = line4()
    best = SectionalizingPlan({1: frozenset({1, 2}), 4: frozenset({3, 4})})
    res = local_search(inst, best, 1)
    assert res.plan == best and res.outer_iterations == 1 and res.merges == 0


def test_reduced_graph_of_path_islands_is_whole_graph():
    inst = line4()
    red = reduced_subgraph(inst, SectionalizingPlan({1: frozenset({1, 2}), 4: frozenset({3, 4})}))
    assert red.edges == inst.lines and red.cut_edges == ((2, 3),)


def test_reduced_graph_of_one_island_is_bfs_tree():
    inst = Instance((1, 2, 3, 4), ((1, 2), (1, 3), (2, 4), (3, 4)), {1: BsCurve.constant(1)})
    red = reduced_subgraph(inst, SectionalizingPlan({1: frozenset({1, 2, 3, 4})}))
    assert red.edges == ((1, 2), (1, 3), (2, 4))


def test_reduced_graph_keeps_ls_plan_feasible():
    rng = np.random.default_rng(21)
    for k in range(10):
        inst = random_instance(rng, 7, 2, 3, extra_edge_prob=0.4)
        exact = solve_ppsr(inst, 8)
        if exact is None:
            continue
        res = local_search(inst, exact.plan, exact.rt)
        red = reduced_subgraph(inst, res.plan)
        again = solve_ppsr(inst.with_lines(red.edges), res.rt, warm_start=(res.plan, res.schedules))
        assert again is not None and again.rt <= res.rt


def test_pipeline_single_bs():
    log = BoundLog(timings=False)
    up = upper_bound_pipeline(worked_example(), 4, rng=np.random.default_rng(0), log=log)
    assert up.rt == 4 and up.stages["tree"] == 4
    values = [r["value"] for r in log.rows if r["track"] == "upper"]
    assert values == sorted(values, reverse=True)


def test_pipeline_redraws_dead_tree():
    # a tree without (2, 3) leaves unit 2 reachable only through the weak BS 1
    inst = Instance(
        buses=(1, 2, 3),
        lines=((1, 2), (1, 3), (2, 3)),
        bs_generators={1: BsCurve.constant(1), 3: BsCurve.constant(10)},
        nbs_generators={2: NbsParams(5, 1, 1, 10)},
    )
    dead = [s for s in range(30) if (2, 3) not in random_spanning_tree(inst, np.random.default_rng(s)).edges]
    assert dead
    for seed in dead[:5]:
        up = upper_bound_pipeline(inst, 1, rng=np.random.default_rng(seed))
        assert up.rt == 1 and validate_plan(inst, up.plan) == []


def test_bounds_zero_budget():
    inst = line4()
    t_low, _ = initial_lower_bound(inst)
    res = solve_bounds(inst, budget=0)
    assert res.lower == t_low and res.upper is None


def test_bounds_close_the_gap():
    inst = line4()
    res = solve_bounds(inst, seed=3)
    assert res.lower == res.upper == 1 and res.gap == 0
