import pytest
from hypothesis import given, settings, strategies as st

from blackstart.milp import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    INTEGER,
    LE,
    MilpModel,
    Status,
    exhaustive_solve,
    solve,
)

BACKENDS = ["reference", "exhaustive", "external"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_empty_model(backend):
    out = solve(MilpModel(), backend)
    assert out.status == Status.OPTIMAL and out.objective == 0


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_binary(backend):
    m = MilpModel()
    x = m.add_variable("x", BINARY)
    m.add_constraint({x: 1}, GE, 1)
    m.set_objective({x: 1})
    out = solve(m, backend)
    assert out.status == Status.OPTIMAL and out.values[x] == 1


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible(backend):
    m = MilpModel()
    x = m.add_variable("x", BINARY)
    m.add_constraint({x: 1}, GE, 1)
    m.add_constraint({x: 1}, LE, 0)
    assert solve(m, backend).status == Status.INFEASIBLE


def test_three_binaries_sum_two():
    m = MilpModel()
    xs = [m.add_variable(f"x{k}", BINARY) for k in range(3)]
    m.add_constraint({x: 1 for x in xs}, GE, 2)
    m.set_objective({x: 1 for x in xs})
    assert exhaustive_solve(m).objective == 2


def test_enumeration_cap():
    m = MilpModel()
    for k in range(10):
        m.add_variable(f"x{k}", BINARY)
    out = exhaustive_solve(m, cap=100)
    assert out.status == Status.ERROR and "cap" in out.message


def test_unknown_backend_and_zero_budget():
    m = MilpModel()
    assert solve(m, "nope").status == Status.ERROR
    assert solve(m, "reference", time_limit=0).status == Status.TIMED_OUT


def test_unknown_variable_id():
    m = MilpModel()
    with pytest.raises(KeyError):
        m.add_constraint({3: 1.0}, LE, 0)


def test_lp_export_lists_everything():
    m = MilpModel("toy")
    x = m.add_variable("x", BINARY)
    n = m.add_variable("n", INTEGER, -2, 3)
    m.add_constraint({x: 1, n: 2}, LE, 4, "cap")
    m.set_objective({n: -1})
    text = m.to_lp()
    for token in ("Minimize", "cap:", "Binaries", "Generals", "-2 <= n <= 3"):
        assert token in text


@st.composite
def small_models(draw):
    m = MilpModel()
    ids = []
    for k in range(draw(st.integers(1, 4))):
        kind = draw(st.sampled_from([BINARY, INTEGER]))
        ids.append(m.add_variable(f"v{k}", kind, 0 if kind == BINARY else -2, 1 if kind == BINARY else 2))
    t = m.add_variable("t", CONTINUOUS, 0, 10)
    for k in range(draw(st.integers(0, 4))):
        coeffs = {i: draw(st.integers(-3, 3)) for i in ids}
        m.add_constraint(coeffs, draw(st.sampled_from([LE, GE, EQ])), draw(st.integers(-3, 3)))
    for i in ids:
        m.add_constraint({i: draw(st.integers(0, 3)), t: -1}, LE, 0)
    m.set_objective({t: 1, **{i: draw(st.integers(-2, 2)) for i in ids}})
    return m


@settings(max_examples=60, deadline=None)
@given(small_models())
def test_reference_matches_enumeration(m):
    ref, ex = solve(m, "reference"), exhaustive_solve(m)
    assert ref.status == ex.status
    if ex.status == Status.OPTIMAL:
        assert ref.objective == pytest.approx(ex.objective, abs=1e-6)
        assert m.check(ref.values) == []


@settings(max_examples=30, deadline=None)
@given(small_models())
def test_warm_start_never_hurts(m):
    ex = exhaustive_solve(m)
    if ex.status != Status.OPTIMAL:
        return
    m.set_warm_start(dict(enumerate(ex.values)))
    for backend in ("reference", "external"):
        out = solve(m, backend)
        assert out.status == Status.OPTIMAL
        assert out.objective <= ex.objective + 1e-6
