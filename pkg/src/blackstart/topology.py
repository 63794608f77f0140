"""MATPOWER-style case import and template-based instance generation."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np

from .grid import BsCurve, CriticalLoad, Instance, InstanceError, NbsParams, normalize_lines

logger = logging.getLogger(__name__)

_TABLE = re.compile(r"mpc\.(bus|gen|branch)\s*=\s*\[(.*?)\]\s*;?", re.S)

# column indices of the standard case layout
BUS_I, BUS_PD = 0, 2
GEN_BUS, GEN_PMAX = 0, 8
GEN_RAMP_COLS = (16, 17, 18)  # AGC, 10-minute and 30-minute ramp rates
F_BUS, T_BUS, BR_STATUS = 0, 1, 10


class CaseParseError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    buses: tuple[int, ...]
    lines: tuple[tuple[int, int], ...]
    demand_mw: Mapping[int, float] = field(default_factory=dict)
    gen_pmax: Mapping[int, float] = field(default_factory=dict)
    gen_ramp: Mapping[int, float] = field(default_factory=dict)
    name: str = "case"

    def degree(self) -> dict[int, int]:
        deg = {b: 0 for b in self.buses}
        for u, v in self.lines:
            deg[u] += 1
            deg[v] += 1
        return deg


def _rows(table: str, body: str, min_cols: int) -> list[list[float]]:
    body = re.sub(r"%[^\n]*", "", body)
    rows = []
    for k, raw in enumerate(r for r in re.split(r"[;\n]", body) if r.strip()):
        try:
            row = [float(x) for x in raw.replace(",", " ").split()]
        except ValueError:
            raise CaseParseError(f"{table} row {k + 1}: non-numeric entry in {raw.strip()!r}") from None
        if len(row) < min_cols:
            raise CaseParseError(f"{table} row {k + 1}: expected at least {min_cols} columns, got {len(row)}")
        rows.append(row)
    return rows


def import_topology(case_text: str, name: str = "case") -> Topology:
    """Buses, lines and the generation/load attributes of a case file.

    Parallel branches collapse into one line, self-loops are dropped with a
    warning and out-of-service branches are ignored.
    """
    tables = {m.group(1): m.group(2) for m in _TABLE.finditer(case_text)}
    if "bus" not in tables or "branch" not in tables:
        raise CaseParseError("case text needs both mpc.bus and mpc.branch tables")
    bus_rows = _rows("bus", tables["bus"], 3)
    branch_rows = _rows("branch", tables["branch"], 2)
    gen_rows = _rows("gen", tables["gen"], 9) if "gen" in tables else []

    buses = tuple(sorted({int(r[BUS_I]) for r in bus_rows}))
    known = set(buses)
    demand = {int(r[BUS_I]): r[BUS_PD] for r in bus_rows}
    lines = set()
    for k, r in enumerate(branch_rows):
        u, v = int(r[F_BUS]), int(r[T_BUS])
        if u not in known or v not in known:
            raise CaseParseError(f"branch row {k + 1}: unknown bus in ({u}, {v})")
        if len(r) > BR_STATUS and r[BR_STATUS] == 0:
            continue
        if u == v:
            logger.warning("branch row %d: self-loop at bus %d dropped", k + 1, u)
            continue
        lines.add((min(u, v), max(u, v)))
    pmax: dict[int, float] = {}
    ramp: dict[int, float] = {}
    for k, r in enumerate(gen_rows):
        b = int(r[GEN_BUS])
        if b not in known:
            raise CaseParseError(f"gen row {k + 1}: unknown bus {b}")
        pmax[b] = pmax.get(b, 0.0) + r[GEN_PMAX]
        rate = max((r[c] for c in GEN_RAMP_COLS if c < len(r)), default=0.0)
        ramp[b] = ramp.get(b, 0.0) + rate
    return Topology(buses, normalize_lines(sorted(lines)), demand, pmax, ramp, name)


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Template:
    bs_capacities_mw: tuple[float, ...]
    nbs: tuple[NbsParams, ...]
    critical_loads_mw: tuple[float, ...] = ()
    name: str = "template"

    @property
    def max_bs_mw(self) -> float:
        return max(self.bs_capacities_mw)


def template_from_dict(data: Mapping) -> Template:
    try:
        t = Template(
            tuple(float(x) for x in data["bs_capacities_mw"]),
            tuple(NbsParams(float(g["crank_mw"]), int(g["crank_periods"]), int(g["ramp_periods"]),
                            float(g["max_mw"])) for g in data.get("nbs", [])),
            tuple(float(x) for x in data.get("critical_loads_mw", [])),
            str(data.get("name", "template")),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InstanceError(f"bad template: {e}") from None
    if not t.bs_capacities_mw:
        raise InstanceError("template has no BS capacities")
    return t


def load_template(text: str) -> Template:
    return template_from_dict(json.loads(text))


def default_template() -> Template:
    """Bundled library: six BS capacities and an illustrative NBS set."""
    return load_template(resources.files("blackstart").joinpath("data/template.json").read_text())


def _rank(buses, attr, rng) -> list[int]:
    """Buses by decreasing attribute; equal values in a seeded random order."""
    buses = sorted(buses)
    tie = rng.permutation(len(buses))
    return [b for _, _, b in sorted(zip((-attr[b] for b in buses), tie, buses))]


def _quantile_pick(n_items: int, k: int, n_targets: int) -> int:
    return min(n_items - 1, k * n_items // n_targets)


def generate_instance(topology: Topology, template: Template, bs_count: int, seed: int = 0) -> Instance:
    """Place BS units at the highest-degree buses and map template units by rank.

    Every BS gets a constant curve at the template's largest BS capacity.
    Generator buses receive template units so that larger units land on buses
    with a larger ramp rate (or Pmax when no ramp rates are given); load
    buses receive template critical loads ordered the same way by demand.
    """
    if bs_count < 1:
        raise InstanceError("bs_count must be >= 1")
    if bs_count > len(topology.buses):
        raise InstanceError(f"bs_count {bs_count} exceeds the {len(topology.buses)} buses")
    if not template.nbs and not template.critical_loads_mw:
        raise InstanceError("template has no NBS units or critical loads")
    rng = np.random.default_rng(seed)
    deg = topology.degree()
    bs = sorted(sorted(topology.buses), key=lambda b: -deg[b])[:bs_count]
    taken = set(bs)

    nbs: dict[int, NbsParams] = {}
    scale = topology.gen_ramp if any(topology.gen_ramp.values()) else topology.gen_pmax
    targets = [b for b in topology.gen_pmax if b not in taken]
    if targets and template.nbs:
        lib = sorted(template.nbs, key=lambda p: (-p.max_mw, p.crank_mw, p.crank_periods, p.ramp_periods))
        ranked = _rank(targets, {b: scale.get(b, 0.0) for b in targets}, rng)
        for k, b in enumerate(ranked):
            nbs[b] = lib[_quantile_pick(len(lib), k, len(ranked))]
    taken |= set(nbs)

    loads: dict[int, CriticalLoad] = {}
    load_buses = [b for b, d in topology.demand_mw.items() if d > 0 and b not in taken]
    if load_buses and template.critical_loads_mw:
        lib = sorted(template.critical_loads_mw, reverse=True)
        ranked = _rank(load_buses, topology.demand_mw, rng)[:len(lib)]
        for k, b in enumerate(ranked):
            loads[b] = CriticalLoad(b, lib[_quantile_pick(len(lib), k, len(ranked))])

    curve = BsCurve.constant(template.max_bs_mw)
    return Instance(
        buses=topology.buses,
        lines=topology.lines,
        bs_generators={b: curve for b in sorted(bs)},
        nbs_generators=dict(sorted(nbs.items())),
        critical_loads=dict(sorted(loads.items())),
        name=f"{topology.name}-{template.name}-bs{bs_count}-seed{seed}",
    )
