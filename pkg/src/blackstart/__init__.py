"""Black-start restoration planning: island sectionalization and generator startup sequencing."""

from .grid import (
    BsCurve,
    CriticalLoad,
    Instance,
    InstanceError,
    NbsParams,
    capacity_at,
    load_instance,
    read_instance,
    validate_instance,
)
from .gss import IslandView, Schedule, aggregate_lower_bound, gss_bruteforce, solve_gss, validate_schedule
from .milp import MilpModel, SolveOutcome, Status, exhaustive_solve, solve
from .ppsr import (
    PpsrSolution,
    SectionalizingPlan,
    lower_bound_scan,
    ppsr_bruteforce,
    solve_ppsr,
    validate_plan,
)
from .bounding import local_search, random_spanning_tree, reduced_subgraph, upper_bound_pipeline
from .randomized import RunResult, evaluate_plan, orchestrate, random_sectionalizing_plan, run_once
from .topology import generate_instance, import_topology
from .estimator import RestorationPlanner

__version__ = "0.1.0"

__all__ = [
    "BsCurve", "CriticalLoad", "Instance", "InstanceError", "NbsParams", "capacity_at", "load_instance",
    "read_instance", "validate_instance", "IslandView", "Schedule", "aggregate_lower_bound", "gss_bruteforce",
    "solve_gss", "validate_schedule", "MilpModel", "SolveOutcome", "Status", "exhaustive_solve", "solve",
    "PpsrSolution", "SectionalizingPlan", "lower_bound_scan", "ppsr_bruteforce", "solve_ppsr", "validate_plan",
    "local_search", "random_spanning_tree", "reduced_subgraph", "upper_bound_pipeline", "RunResult",
    "evaluate_plan", "orchestrate", "random_sectionalizing_plan", "run_once", "generate_instance",
    "import_topology", "RestorationPlanner",
]
