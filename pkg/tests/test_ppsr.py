import networkx as nx
import numpy as np
import pytest

from blackstart.grid import BsCurve, Instance, NbsParams
from blackstart.gss import aggregate_lower_bound
from blackstart.milp import Status, exhaustive_solve, solve
from blackstart.ppsr import (
    BoundLog,
    SectionalizingPlan,
    build_ppsr_model,
    extract_plan,
    lower_bound_scan,
    plan_warm_start,
    ppsr_bruteforce,
    solve_ppsr,
    validate_plan,
)
from blackstart.synth import random_instance, worked_example


def on_path(inst):
    return Instance(inst.buses, ((1, 2), (2, 3)), inst.bs_generators, inst.nbs_generators)


def two_bs_line():
    """BS 1 (5 MW) - NBS 2 - NBS 3 - BS 4 (5 MW); each unit needs a whole BS."""
    return Instance(
        buses=(1, 2, 3, 4),
        lines=((1, 2), (2, 3), (3, 4)),
        bs_generators={1: BsCurve.constant(5), 4: BsCurve.constant(5)},
        nbs_generators={2: NbsParams(5, 2, 1, 5), 3: NbsParams(5, 2, 1, 5)},
    )


def test_variable_counts(two_node):
    m = build_ppsr_model(two_node, 3)
    assert (m.count("x_"), m.count("s_"), m.count("y_"), m.count("f_")) == (2, 3, 1, 1)


def test_two_node_optimum(two_node):
    sol = solve_ppsr(two_node, 3)
    assert sol.rt == 1 == ppsr_bruteforce(two_node, 3).rt
    assert exhaustive_solve(build_ppsr_model(two_node, 3)).objective == 1


def test_worked_example_on_path():
    inst = on_path(worked_example())
    sol = solve_ppsr(inst, 20)
    assert sol.rt == 4 and sol.bottleneck == [1]
    assert solve_ppsr(inst, 3) is None


def test_single_island_takes_everything():
    sol = solve_ppsr(worked_example(), 10)
    assert sol.plan.islands == {1: frozenset({1, 2, 3})}


def test_no_feasible_partition():
    # unit 3 hangs off BS 4 alone, and BS 4 is too weak to crank it
    inst = Instance(
        buses=(1, 2, 3, 4),
        lines=((1, 2), (2, 4), (3, 4)),
        bs_generators={1: BsCurve.constant(10), 4: BsCurve.constant(1)},
        nbs_generators={2: NbsParams(1, 1, 1, 1), 3: NbsParams(5, 1, 1, 5)},
    )
    assert ppsr_bruteforce(inst, 6) is None
    assert solve_ppsr(inst, 6) is None


def test_parallel_islands():
    sol = solve_ppsr(two_bs_line(), 6)
    assert sol.rt == 1
    assert sol.plan.islands == {1: frozenset({1, 2}), 4: frozenset({3, 4})}


def test_validate_plan_messages():
    inst = two_bs_line()
    assert validate_plan(inst, SectionalizingPlan({1: frozenset({1, 2}), 4: frozenset({3, 4})})) == []
    bad = validate_plan(inst, SectionalizingPlan({1: frozenset({1, 3}), 4: frozenset({2, 3, 4})}))
    assert "disconnected island 1" in bad and "disconnected island 4" not in bad
    assert any("assigned to 2 islands" in b for b in bad)
    assert any("unit bus 2 is not assigned" in b for b in
               validate_plan(inst, SectionalizingPlan({1: frozenset({1}), 4: frozenset({3, 4})})))


def test_extract_drops_stray_transshipment():
    inst = Instance((1, 2, 3), ((1, 2), (2, 3)), {1: BsCurve.constant(1), 3: BsCurve.constant(1)})
    plan = extract_plan(inst, {"x_1_1": 1, "x_3_3": 1, "x_2_1": 0})
    assert plan.unassigned(inst) == [2]


def test_warm_start_is_feasible():
    inst = two_bs_line()
    sol = solve_ppsr(inst, 6)
    m = build_ppsr_model(inst, 6)
    ws = plan_warm_start(inst, m, sol.plan, sol.schedules)
    x = np.array([ws[k] for k in range(m.num_variables)])
    assert m.check(x) == []
    assert solve_ppsr(inst, 6, warm_start=sol).rt == sol.rt


def test_lower_bound_scan_single_bs():
    lb, sol = lower_bound_scan(worked_example(), None, 4)
    assert lb == 4 and sol.rt == 4


def test_lower_bound_scan_slack_bound():
    # units 2 and 4 share island 1 (4 hangs off 2); the pooled BS capacity would start both at once
    inst = Instance(
        buses=(1, 2, 3, 4),
        lines=((1, 2), (2, 3), (2, 4)),
        bs_generators={1: BsCurve.constant(5), 3: BsCurve.constant(5)},
        nbs_generators={2: NbsParams(5, 1, 1, 10), 4: NbsParams(5, 1, 1, 10)},
    )
    t_low = aggregate_lower_bound(inst, 6)
    assert t_low == 1 and ppsr_bruteforce(inst, 6).rt == 2
    log = BoundLog(timings=False)
    lb, sol = lower_bound_scan(inst, None, t_low, log=log)
    assert lb == sol.rt == 2
    assert [r["event"] for r in log.rows] == ["infeasible_T1", "optimal"]


def test_lower_bound_scan_zero_deadline():
    assert lower_bound_scan(worked_example(), None, 3, deadline=0) == (3, None)


def test_oracle_equivalence_sample():
    rng = np.random.default_rng(11)
    for _ in range(25):
        inst = random_instance(rng, int(rng.integers(4, 7)), 2, 2)
        T = int(rng.integers(2, 7))
        a, b = solve_ppsr(inst, T), ppsr_bruteforce(inst, T)
        assert (a is None) == (b is None)
        if a is not None:
            assert a.rt == b.rt
            assert validate_plan(inst, a.plan) == []
            g = inst.graph()
            for j, members in a.plan.islands.items():
                assert set(members) <= nx.node_connected_component(g.subgraph(members), j)


def test_horizon_monotone_infeasibility():
    rng = np.random.default_rng(5)
    for _ in range(10):
        inst = random_instance(rng, 5, 2, 3, 0)
        verdicts = [solve_ppsr(inst, T) is not None for T in range(1, 7)]
        # once feasible, stays feasible
        assert verdicts == sorted(verdicts)


@pytest.mark.parametrize("backend", ["reference", "external"])
def test_backends_agree(backend):
    inst = two_bs_line()
    m = build_ppsr_model(inst, 4)
    assert solve(m, backend).status == Status.OPTIMAL
    assert solve(m, backend).objective == pytest.approx(1)
