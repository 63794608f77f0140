"""Command-line entry point: ``blackstart <command> ...``.

Exit codes: 0 success, 1 infeasible or invalid input, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bounding import solve_bounds, solve_exact
from .grid import Instance, InstanceError, check_instance, dump_instance, instance_from_dict, validate_instance
from .gss import HorizonTooSmall, IslandView, aggregate_island, solve_gss
from .milp import BACKENDS, SolverError
from .ppsr import BoundLog, validate_plan
from .randomized import orchestrate, plan_schedules
from .reports import ReportError, plan_to_dict, runs_csv, schedule_to_dict, tidy_bounds, to_json
from .topology import CaseParseError, default_template, generate_instance, import_topology, load_template

log = logging.getLogger("blackstart")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror or e}") from None


def _write(path: str | None, text: str) -> None:
    if path is None:
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e.strerror or e}") from None


def _parse(path: str) -> Instance:
    text = _read(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceError(f"{path}: parse error at line {e.lineno} column {e.colno}: {e.msg}") from None
    return instance_from_dict(data)


def _windows_from_file(path: str) -> dict[int, tuple[int, int]]:
    text = _read(path)
    out = {}
    if path.endswith(".json"):
        try:
            for rec in json.loads(text):
                out[int(rec["bus"])] = (int(rec["earliest"]), int(rec["latest"]))
        except (ValueError, KeyError, TypeError) as e:
            raise InstanceError(f"{path}: bad critical window entry: {e}") from None
        return out
    reader = csv.DictReader(text.splitlines())
    for row in reader:
        try:
            out[int(row["bus"])] = (int(row["earliest"]), int(row["latest"]))
        except (ValueError, KeyError, TypeError):
            raise InstanceError(f"{path}: line {reader.line_num}: expected bus,earliest,latest") from None
    return out


def load_with_options(args) -> Instance:
    """Instance from ``args.instance`` with the command-line side constraints applied."""
    inst = _parse(args.instance)
    windows = getattr(args, "critical_windows", None)
    if windows:
        inst = replace(inst, critical_windows={**inst.critical_windows, **_windows_from_file(windows)})
    limit = getattr(args, "balance_mw", None)
    if limit is not None:
        net = dict(inst.net_mw)
        if not net:
            # default net generation: unit capacity, minus critical demand
            net = {b: p.max_mw for b, p in inst.nbs_generators.items()}
            net.update({b: -c.demand_mw for b, c in inst.critical_loads.items()})
        inst = replace(inst, balance_limit=float(limit), net_mw=net)
    return check_instance(inst)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    inst = _parse(args.instance)
    problems = validate_instance(inst)
    if problems:
        for p in problems:
            print(f"violation: {p}")
        return EXIT_FAIL
    print(f"ok: {inst.name}: {len(set(inst.buses))} buses, {len(inst.lines)} lines, "
          f"{len(inst.bs_buses)} BS, {len(inst.unit_buses)} units")
    return EXIT_OK


def cmd_gss(args) -> int:
    inst = load_with_options(args)
    T = args.horizon
    if len(inst.bs_buses) == 1:
        island = IslandView.from_instance(inst, inst.buses, T)
    else:
        log.info("%d BS buses: sequencing against their summed curve", len(inst.bs_buses))
        island = replace(aggregate_island(inst, T), bs=inst.bs_buses[0])
    sched = solve_gss(island, args.backend)
    if sched is None:
        print(f"infeasible: no startup sequence within {T} periods")
        return EXIT_FAIL
    out = schedule_to_dict(island, sched)
    _write(args.out, to_json(out))
    trace = out["trace"]
    peak = max(trace) if trace else 0
    print(f"rt={sched.rt}")
    print(f"peak capacity {peak} MW at period {trace.index(peak) + 1 if trace else 0}")
    if args.out is None:
        sys.stdout.write(to_json(out))
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_with_options(args)
    blog = BoundLog(timings=args.timings)
    if args.mode == "exact":
        lb, sol = solve_exact(inst, args.backend, blog, args.deadline_sec)
        _write(args.log, blog.to_csv())
        if sol is None:
            print(f"no plan found; lower bound {lb}")
            return EXIT_FAIL
        print(f"rt={sol.rt} (optimal)")
    else:
        res = solve_bounds(inst, args.backend, args.deadline_sec, args.seed, blog)
        _write(args.log, blog.to_csv())
        ub = "none" if res.upper is None else res.upper
        gap = "none" if res.gap is None else res.gap
        print(f"lower={res.lower} upper={ub} gap={gap}")
        sol = res.solution
        if sol is None:
            return EXIT_FAIL
    problems = validate_plan(inst, sol.plan)
    if problems:  # should not happen; guard against solver noise
        for p in problems:
            print(f"violation: {p}", file=sys.stderr)
        return EXIT_FAIL
    _write(args.out, to_json(plan_to_dict(inst, sol.plan, sol.schedules, sol.rt)))
    return EXIT_OK


def cmd_randomized(args) -> int:
    inst = load_with_options(args)
    camp = orchestrate(inst, args.runs, args.horizon, args.deadline_sec, args.seed, args.jobs, args.backend)
    _write(args.log, runs_csv(camp, args.timings))
    summary = camp.summary(args.timings)
    print(json.dumps(summary))
    if camp.best is None:
        return EXIT_FAIL
    best = camp.best
    schedules = plan_schedules(inst, best.final_plan, max(best.final_rt, 1), args.backend)
    _write(args.out, to_json(plan_to_dict(inst, best.final_plan, schedules, best.final_rt)))
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        topo = import_topology(_read(args.case), Path(args.case).stem)
    except CaseParseError as e:
        raise InstanceError(f"{args.case}: {e}") from None
    template = load_template(_read(args.template)) if args.template else default_template()
    inst = generate_instance(topo, template, args.bs_count, args.seed)
    problems = validate_instance(inst)
    for p in problems:
        print(f"violation: {p}", file=sys.stderr)
    text = dump_instance(inst)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_FAIL if problems else EXIT_OK


def cmd_report(args) -> int:
    text = _read(args.log_file)
    try:
        out = tidy_bounds(text.splitlines())
    except ReportError as e:
        print(f"error: {args.log_file}: {e}", file=sys.stderr)
        return EXIT_FAIL
    if args.out:
        _write(args.out, out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive(x):
    v = int(x)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blackstart", description="Black-start restoration planning.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, options=True):
        sp.add_argument("instance", help="instance JSON file")
        sp.add_argument("--backend", choices=sorted(BACKENDS), default=None,
                        help="MILP backend (default: $BLACKSTART_BACKEND or reference)")
        sp.add_argument("--out", help="output file")
        if options:
            sp.add_argument("--critical-windows", metavar="FILE",
                            help="JSON or CSV file of bus,earliest,latest start windows")
            sp.add_argument("--balance-mw", type=float, metavar="D", help="limit on each island's net generation")

    sp = sub.add_parser("validate", help="check an instance file")
    sp.add_argument("instance")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("gss", help="startup sequence behind a single BS")
    common(sp)
    sp.add_argument("--horizon", type=_positive, required=True)
    sp.set_defaults(func=cmd_gss)

    sp = sub.add_parser("solve", help="sectionalize and schedule")
    common(sp)
    sp.add_argument("--mode", choices=["exact", "bounds"], default="exact")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--deadline-sec", type=float, default=None)
    sp.add_argument("--log", help="bound-evolution CSV")
    sp.add_argument("--timings", action="store_true", help="record wall-clock times in the log")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("randomized", help="multi-start randomized sectionalization")
    common(sp)
    sp.add_argument("--runs", type=_positive, default=32)
    sp.add_argument("--horizon", type=_positive, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--deadline-sec", type=float, default=None, help="budget per run")
    sp.add_argument("--jobs", type=_positive, default=1)
    sp.add_argument("--log", help="per-run CSV report")
    sp.add_argument("--timings", action="store_true")
    sp.set_defaults(func=cmd_randomized)

    sp = sub.add_parser("gen", help="generate an instance from a case file and a template")
    sp.add_argument("case", help="MATPOWER-style case file")
    sp.add_argument("--template", help="template JSON (default: bundled library)")
    sp.add_argument("--bs-count", type=_positive, default=12)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("report", help="tidy bound-evolution CSV with running bounds")
    sp.add_argument("log_file")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InstanceError as e:
        for line in e.violations or [str(e)]:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_FAIL
    except (HorizonTooSmall, SolverError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
