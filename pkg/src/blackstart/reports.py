"""JSON and CSV artifacts: schedules, plans, run reports and bound-evolution tables."""

from __future__ import annotations

import csv
import io
import json
from typing import Iterable, Mapping

from .grid import Instance, _clean
from .gss import IslandView, Schedule, validate_schedule
from .ppsr import BoundLog, SectionalizingPlan, island_views
from .randomized import Campaign


class ReportError(ValueError):
    pass


def to_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def schedule_to_dict(island: IslandView, schedule: Schedule) -> dict:
    trace = validate_schedule(island, schedule).trace
    return {
        "island_bs": island.bs,
        "starts": [{"bus": b, "period": t} for b, t in sorted(schedule.start.items())],
        "rt": schedule.rt,
        "trace": [_clean(round(float(x), 9)) for x in trace],
    }


def plan_to_dict(instance: Instance, plan: SectionalizingPlan, schedules: Mapping[int, Schedule],
                 rt: int | None = None) -> dict:
    rts = {j: s.rt for j, s in schedules.items()}
    rt = max(rts.values(), default=0) if rt is None else rt
    horizon = max(rt, 1)
    views = island_views(instance, plan, horizon)
    islands = []
    for j in sorted(plan.islands):
        entry = {"bs": j, "members": plan.members(j)}
        if j in schedules:
            entry["schedule"] = schedule_to_dict(views[j], schedules[j])
            entry["rt"] = schedules[j].rt
        islands.append(entry)
    return {
        "instance": instance.name,
        "islands": islands,
        "unassigned_transshipment": plan.unassigned(instance),
        "overall_rt": rt,
        "bottleneck_bs": sorted(j for j, r in rts.items() if r == rt),
    }


def plan_from_dict(data: Mapping) -> tuple[SectionalizingPlan, dict[int, Schedule]]:
    """Inverse of :func:`plan_to_dict` (traces are recomputed, not read)."""
    try:
        islands = {int(e["bs"]): frozenset(int(v) for v in e["members"]) for e in data["islands"]}
        schedules = {
            int(e["bs"]): Schedule.from_starts({int(s["bus"]): int(s["period"]) for s in e["schedule"]["starts"]})
            for e in data["islands"] if "schedule" in e
        }
    except (KeyError, TypeError, ValueError) as e:
        raise ReportError(f"malformed plan file: {e}") from None
    return SectionalizingPlan(dict(sorted(islands.items()))), schedules


RUN_FIELDS = ("run_index", "seed", "feasible", "time_to_feasible_sec", "initial_rt", "final_rt", "ls_improved")


def runs_csv(campaign: Campaign, timings: bool = False) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RUN_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in campaign.runs:
        w.writerow(r.row(timings))
    return buf.getvalue()


# ---------------------------------------------------------------------------
# bound evolution
# ---------------------------------------------------------------------------

TIDY_FIELDS = BoundLog.FIELDS + ("lower_bound", "upper_bound")


def tidy_bounds(lines: Iterable[str]) -> str:
    """Bound log rows with running best lower and upper bounds appended.

    The lower series never decreases and the upper series never increases.
    """
    reader = csv.reader(lines)
    header = next(reader, None)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TIDY_FIELDS)
    if header is None:
        return out.getvalue()
    if tuple(header) != BoundLog.FIELDS:
        raise ReportError(f"line 1: expected header {','.join(BoundLog.FIELDS)}")
    lb = ub = None
    for row in reader:
        n = reader.line_num
        if not row:
            continue
        if len(row) != len(BoundLog.FIELDS):
            raise ReportError(f"line {n}: expected {len(BoundLog.FIELDS)} fields, got {len(row)}")
        step, elapsed, track, event, value = row
        if track not in ("lower", "upper"):
            raise ReportError(f"line {n}: unknown track {track!r}")
        try:
            v = int(value) if value != "" else None
            if elapsed:
                float(elapsed)
        except ValueError:
            raise ReportError(f"line {n}: non-numeric value") from None
        if v is not None:
            if track == "lower":
                lb = v if lb is None else max(lb, v)
            else:
                ub = v if ub is None else min(ub, v)
            if event == "optimal":
                lb = v if lb is None else max(lb, v)
                ub = v if ub is None else min(ub, v)
        w.writerow(row + ["" if lb is None else lb, "" if ub is None else ub])
    return out.getvalue()
