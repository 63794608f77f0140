import logging

import pytest

from blackstart.grid import InstanceError, validate_instance
from blackstart.topology import (
    CaseParseError,
    Template,
    default_template,
    generate_instance,
    import_topology,
)
from blackstart.grid import NbsParams


def case(branches, buses=(1, 2, 3), gens=()):
    bus = "\n".join(f"\t{b}\t1\t{10 * b}\t0;" for b in buses)
    br = "\n".join(f"\t{u}\t{v}\t0\t0.1\t0\t0\t0\t0\t0\t0\t1;" for u, v in branches)
    gen = "\n".join(f"\t{b}\t0\t0\t0\t0\t1\t100\t1\t{p}\t0;" for b, p in gens)
    return f"mpc.bus = [\n{bus}\n];\nmpc.gen = [\n{gen}\n];\nmpc.branch = [\n{br}\n];\n"


def test_parallel_branches_collapse():
    topo = import_topology(case([(1, 2), (2, 3), (2, 1)]))
    assert topo.lines == ((1, 2), (2, 3))


def test_isolated_bus_imports():
    topo = import_topology(case([(1, 2)], buses=(1, 2, 3)))
    assert topo.buses == (1, 2, 3)


def test_self_loop_dropped(caplog):
    with caplog.at_level(logging.WARNING):
        topo = import_topology(case([(1, 2), (2, 2), (2, 3)]))
    assert topo.lines == ((1, 2), (2, 3)) and "self-loop" in caplog.text


def test_bad_row_reports_index():
    text = case([(1, 2), (2, 3)]).replace("\t2\t3\t0", "\t2\tx\t0")
    with pytest.raises(CaseParseError, match="branch row 2"):
        import_topology(text)


def test_sample_case_file():
    from pathlib import Path

    text = (Path(__file__).parents[1] / "examples" / "data" / "case9.m").read_text()
    topo = import_topology(text)
    assert len(topo.buses) == 9 and len(topo.lines) == 9
    assert topo.gen_pmax == {1: 250, 2: 300, 3: 270}


def test_bundled_template_max_bs():
    assert default_template().max_bs_mw == 48.49


def grid_case():
    branches = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (2, 5), (3, 6)]
    return import_topology(case(branches, buses=range(1, 7), gens=[(1, 50), (4, 200), (6, 120)]))


def test_generation_rules():
    inst = generate_instance(grid_case(), default_template(), 2, seed=0)
    # degrees: 2, 3, 5 and 6 have 3; 3 is not higher than 2, ties go to the lower id
    assert inst.bs_buses == [2, 3]
    assert {c.series for c in inst.bs_generators.values()} == {(48.49,)}
    caps = {b: p.max_mw for b, p in inst.nbs_generators.items()}
    assert caps[4] > caps[6] > caps[1]
    assert validate_instance(inst) == []


def test_generation_is_deterministic():
    a = generate_instance(grid_case(), default_template(), 2, seed=5)
    assert a == generate_instance(grid_case(), default_template(), 2, seed=5)


def test_every_bus_black_start():
    inst = generate_instance(grid_case(), default_template(), 6)
    assert inst.unit_buses == [] and len(inst.bs_buses) == 6


def test_generation_errors():
    with pytest.raises(InstanceError):
        generate_instance(grid_case(), default_template(), 0)
    with pytest.raises(InstanceError):
        generate_instance(grid_case(), Template((1.0,), ()), 1)
    assert Template((1.0,), (NbsParams(1, 1, 1, 1),)).max_bs_mw == 1.0
