import numpy as np
import pytest

from blackstart.grid import BsCurve, Instance, NbsParams
from blackstart.ppsr import ppsr_bruteforce
from blackstart.synth import random_instance, worked_example

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for the terminal summary, then assert."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}"
        ACCEPTANCE_LINES.append(line + (f" ({detail})" if detail else ""))
        print(ACCEPTANCE_LINES[-1])
        assert ok, detail or title

    return record


@pytest.fixture
def example():
    return worked_example()


@pytest.fixture
def two_node():
    """BS 1 (constant 10) and one NBS at bus 2 with (5, 1, 1, 20)."""
    return Instance(
        buses=(1, 2),
        lines=((1, 2),),
        bs_generators={1: BsCurve.constant(10)},
        nbs_generators={2: NbsParams(5, 1, 1, 20)},
    )


def tiny_instances(n=100, seed=2024):
    """(instance, horizon) pairs with at most 8 buses, 2 BS and a horizon of at most 8."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        n_buses = int(rng.integers(3, 9))
        n_bs = int(rng.integers(1, 3))
        n_units = int(rng.integers(0, min(4, n_buses - n_bs) + 1))
        n_loads = int(rng.integers(0, 2)) if n_buses - n_bs - n_units > 0 else 0
        inst = random_instance(rng, n_buses, n_bs, n_units, n_loads, name=f"tiny{k}")
        out.append((inst, int(rng.integers(3, 9))))
    return out


@pytest.fixture(scope="session")
def tiny_cases():
    """Tiny instances with their brute-force optimum (``None`` when infeasible)."""
    return [(inst, T, ppsr_bruteforce(inst, T)) for inst, T in tiny_instances()]
